//! OLS and random-intercept ML fits against dense and grid-search oracles.

use langsim_core::evalrank::{ndcg_at_k, rank_candidates, top1, GoldMap};
use langsim_core::regress::*;
use langsim_core::{LanguageCode, Polarity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn code(s: &str) -> LanguageCode {
    LanguageCode::new(s).unwrap()
}

fn row(s: usize, t: usize, f: f64, y: f64) -> RegressionRow {
    RegressionRow { source: code(&format!("s{s}")), target: code(&format!("t{t}")), feature: f, score: y }
}

/// Dense ML log-likelihood of the random-intercept model at variance ratio λ,
/// with β and σ² at their GLS/ML values: V = I + λ·ZZ', Cholesky throughout.
fn dense_profile_ll(rows: &[RegressionRow], lambda: f64) -> (f64, f64, f64) {
    let n = rows.len();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = (i == j) as u8 as f64 + if rows[i].target == rows[j].target { lambda } else { 0.0 };
        }
    }
    // Cholesky V = L L'.
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                l[i * n + i] = (v[i * n + i] - s).sqrt();
            } else {
                l[i * n + j] = (v[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let solve_l = |b: &[f64]| {
        let mut x = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
            x[i] = (b[i] - s) / l[i * n + i];
        }
        x
    };
    // Whitened design: L⁻¹X and L⁻¹y, then ordinary normal equations.
    let x0 = solve_l(&vec![1.0; n]);
    let x1 = solve_l(&rows.iter().map(|r| r.feature).collect::<Vec<_>>());
    let y = solve_l(&rows.iter().map(|r| r.score).collect::<Vec<_>>());
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (a00, a01, a11) = (dot(&x0, &x0), dot(&x0, &x1), dot(&x1, &x1));
    let (b0, b1) = (dot(&x0, &y), dot(&x1, &y));
    let det = a00 * a11 - a01 * a01;
    let beta0 = (a11 * b0 - a01 * b1) / det;
    let beta1 = (a00 * b1 - a01 * b0) / det;
    let r: Vec<f64> = (0..n).map(|i| y[i] - beta0 * x0[i] - beta1 * x1[i]).collect();
    let sigma2 = dot(&r, &r) / n as f64;
    let logdet: f64 = 2.0 * (0..n).map(|i| l[i * n + i].ln()).sum::<f64>();
    let nf = n as f64;
    let ll = -0.5 * nf * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln() + 1.0) - 0.5 * logdet;
    (ll, beta0, beta1)
}

fn grid_best(data: &RegressionDataset) -> f64 {
    (0..10_000)
        .map(|i| mer_profile(data, (-12.0 + 24.0 * i as f64 / 9_999.0).exp()).log_likelihood)
        .chain(std::iter::once(mer_profile(data, 0.0).log_likelihood))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn offset_dataset() -> RegressionDataset {
    let noise = [0.4, -0.2, -0.5, 0.3, 0.1, -0.1];
    let mut rows = Vec::new();
    for (t, offset) in [(0, 0.0), (1, 10.0)] {
        for s in 0..6 {
            let f = s as f64 * 0.2;
            rows.push(row(s, t, f, 1.0 + 2.0 * f + offset + noise[(s + 3 * t) % 6]));
        }
    }
    RegressionDataset::new(rows).unwrap()
}

fn simulated(seed: u64, targets: usize, per: usize) -> RegressionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Normal::new(0.0, 4.0).unwrap();
    let e = Normal::new(0.0, 2.0).unwrap();
    let mut rows = Vec::new();
    for t in 0..targets {
        let ut = u.sample(&mut rng);
        for s in 0..per {
            let f: f64 = rng.random();
            rows.push(row(s, t, f, 5.0 + 30.0 * f + ut + e.sample(&mut rng)));
        }
    }
    RegressionDataset::new(rows).unwrap()
}

#[test]
fn profile_matches_dense_likelihood() {
    for data in [offset_dataset(), simulated(3, 5, 4)] {
        for lambda in [0.0, 1e-3, 0.37, 2.0, 55.0, 1e4] {
            let p = mer_profile(&data, lambda);
            let (ll, b0, b1) = dense_profile_ll(data.rows(), lambda);
            assert!(
                (p.log_likelihood - ll).abs() <= 1e-9 * ll.abs().max(1.0),
                "λ={lambda}: {} vs {ll}",
                p.log_likelihood
            );
            assert!((p.beta0 - b0).abs() <= 1e-8 * b0.abs().max(1.0));
            assert!((p.beta1 - b1).abs() <= 1e-8 * b1.abs().max(1.0));
        }
    }
}

#[test]
fn ols_closed_form_example() {
    let data = RegressionDataset::new(vec![row(0, 0, 0.0, 1.0), row(1, 0, 1.0, 3.0), row(2, 0, 2.0, 4.0)]).unwrap();
    let f = ols_fit(&data).unwrap();
    assert!((f.beta1 - 1.5).abs() < 1e-9);
    assert!((f.beta0 - 7.0 / 6.0).abs() < 1e-9);
    assert!((f.rmse - (1.0f64 / 18.0).sqrt()).abs() < 1e-9);
    assert!((f.rmse - 0.2357).abs() < 1e-4);
}

#[test]
fn no_target_effect_reduces_to_ols() {
    // Per-target residual patterns sum to zero, so the ML variance ratio is 0.
    let e = [0.3, -0.3, -0.3, 0.3];
    let mut rows = Vec::new();
    for t in 0..4 {
        for s in 0..4 {
            let f = s as f64;
            rows.push(row(s, t, f, 1.0 + 2.0 * f + e[s] * (1.0 + t as f64 * 0.1)));
        }
    }
    let data = RegressionDataset::new(rows).unwrap();
    let ols = ols_fit(&data).unwrap();
    let mer = mer_fit(&data).unwrap();
    assert!((mer.beta0 - ols.beta0).abs() <= 1e-6);
    assert!((mer.beta1 - ols.beta1).abs() <= 1e-6);
    assert!(mer.random_intercepts.values().all(|u| u.abs() <= 1e-6));
    assert!(!mer.degenerate);
}

#[test]
fn two_target_offset() {
    let data = offset_dataset();
    let mer = mer_fit(&data).unwrap();
    let ols = ols_fit(&data).unwrap();
    let u0 = mer.random_intercepts[&code("t0")];
    let u1 = mer.random_intercepts[&code("t1")];
    let lambda = mer.lambda.unwrap();
    let shrink = lambda * 6.0 / (1.0 + lambda * 6.0);
    assert!(u0 < 0.0 && u1 > 0.0);
    assert!((u0 + u1).abs() < 1e-9);
    assert!((u1 - 5.0 * shrink).abs() < 0.5, "u1 {u1}, shrink {shrink}");
    assert!(mer.rmse < ols.rmse);
    assert!(grid_best(&data) - mer.log_likelihood <= 1e-6);
}

#[test]
fn optimizer_never_loses_to_dense_grid() {
    for seed in 0..5 {
        let data = simulated(seed, 6, 5);
        let mer = mer_fit(&data).unwrap();
        assert!(grid_best(&data) - mer.log_likelihood <= 1e-6, "seed {seed}");
        assert!(mer.log_likelihood >= mer_profile(&data, 0.0).log_likelihood);
        assert!(mer.log_likelihood >= mer_profile(&data, 1e12).log_likelihood);
    }
}

#[test]
fn monte_carlo_slope_recovery() {
    let data = simulated(2024, 20, 16);
    let mer = mer_fit(&data).unwrap();
    assert!((mer.beta1 - 30.0).abs() <= 3.0 * mer.beta1_se, "β1 {} ± {}", mer.beta1, mer.beta1_se);
    assert!(mer.sigma2_intercept > 0.0);
}

#[test]
fn positive_slope_keeps_raw_rankings() {
    let data = simulated(11, 5, 6);
    let fit = mer_fit(&data).unwrap();
    assert!(fit.beta1 > 0.0);
    let scores = predict_and_score(&fit, &data, 3).unwrap();
    let gold: GoldMap = data.rows().iter().map(|r| ((r.source.clone(), r.target.clone()), r.score)).collect();
    for (t, hit, ndcg) in &scores.per_target {
        let raw = data.rows().iter().filter(|r| &r.target == t).map(|r| (r.source.clone(), r.feature)).collect();
        let r = rank_candidates(t.clone(), raw, Polarity::HigherBetter);
        assert_eq!(*hit, top1(&r, &gold).unwrap());
        assert_eq!(*ndcg, ndcg_at_k(&r, &gold, 3).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ols_residuals_are_orthogonal(points in prop::collection::vec((-10.0f64..10.0, -100.0f64..100.0), 3..40)) {
        prop_assume!(points.iter().any(|p| (p.0 - points[0].0).abs() > 1e-3));
        let rows: Vec<_> = points.iter().enumerate().map(|(i, &(f, y))| row(i, 0, f, y)).collect();
        let data = RegressionDataset::new(rows).unwrap();
        let fit = ols_fit(&data).unwrap();
        let scale = points.iter().map(|p| p.1.abs() * (1.0 + p.0.abs())).sum::<f64>().max(1.0);
        let (mut s0, mut s1, mut sq) = (0.0, 0.0, 0.0);
        for &(f, y) in &points {
            let r = y - fit.beta0 - fit.beta1 * f;
            s0 += r;
            s1 += r * f;
            sq += r * r;
        }
        prop_assert!(s0.abs() / scale < 1e-9);
        prop_assert!(s1.abs() / scale < 1e-9);
        prop_assert!((fit.rmse.powi(2) - sq / points.len() as f64).abs() <= 1e-9 * (1.0 + sq));
    }
}
