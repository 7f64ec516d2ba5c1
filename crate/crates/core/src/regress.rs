//! Regressing transfer scores on a single similarity feature.
//!
//! Two models:
//! - OLS: `score = β0 + β1·feature + ε`.
//! - MER: `score = β0 + β1·feature + u_target + ε`, `u ~ N(0, σ²_u)`,
//!   `ε ~ N(0, σ²_e)`, fitted by maximum likelihood (not REML). The fixed
//!   effects, `σ²_e` and the intercept predictions are profiled in closed
//!   form for a given variance ratio `λ = σ²_u / σ²_e`, leaving a 1-D search
//!   over `ln λ ∈ [-12, 12]`.
//!
//! Random intercepts are grouped by target language.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::evalrank::{self, rank_candidates, EvalError, GoldMap};
use crate::lang::LanguageCode;
use crate::matrix::{Polarity, SimilarityMatrix};

const LOG_LAMBDA_MIN: f64 = -12.0;
const LOG_LAMBDA_MAX: f64 = 12.0;
const SEARCH_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 200;
/// Coarse scan used to bracket the maximum before golden-section refinement.
const SCAN_POINTS: usize = 49;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("feature has zero variance; slope is not identifiable")]
    ZeroFeatureVariance,
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("variance-ratio search did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRow {
    pub source: LanguageCode,
    pub target: LanguageCode,
    pub feature: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    rows: Vec<RegressionRow>,
}

impl RegressionDataset {
    pub fn new(rows: Vec<RegressionRow>) -> Result<Self, RegressError> {
        if rows.len() < 2 {
            return Err(RegressError::TooFewRows(rows.len()));
        }
        if let Some(i) = rows.iter().position(|r| !r.feature.is_finite() || !r.score.is_finite()) {
            return Err(RegressError::NonFinite(i));
        }
        if rows.iter().all(|r| r.feature == rows[0].feature) {
            return Err(RegressError::ZeroFeatureVariance);
        }
        Ok(Self { rows })
    }

    /// One row per ordered `(source, target)` pair with `source != target`,
    /// feature oriented so that larger means a better predicted source.
    pub fn from_matrix(matrix: &SimilarityMatrix, gold: &GoldMap) -> Result<Self, RegressError> {
        let polarity = matrix.method.polarity();
        let mut rows = Vec::new();
        let mut missing = Vec::new();
        for (ti, t) in matrix.languages.iter().enumerate() {
            for (si, s) in matrix.languages.iter().enumerate() {
                if si == ti {
                    continue;
                }
                match gold.get(&(s.clone(), t.clone())) {
                    Some(&score) => rows.push(RegressionRow {
                        source: s.clone(),
                        target: t.clone(),
                        feature: polarity.orient(matrix.get(ti, si)),
                        score,
                    }),
                    None => missing.push((s.to_string(), t.to_string())),
                }
            }
        }
        if !missing.is_empty() {
            return Err(EvalError::MissingGold(missing).into());
        }
        Self::new(rows)
    }

    pub fn rows(&self) -> &[RegressionRow] {
        &self.rows
    }

    fn groups(&self) -> BTreeMap<&LanguageCode, Vec<usize>> {
        let mut g: BTreeMap<&LanguageCode, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            g.entry(&r.target).or_default().push(i);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Ols,
    Mer,
}

impl FitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FitKind::Ols => "ols",
            FitKind::Mer => "mer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: FitKind,
    pub beta0: f64,
    pub beta1: f64,
    /// Predicted random intercept per target; empty for OLS.
    pub random_intercepts: BTreeMap<LanguageCode, f64>,
    /// ML residual variance.
    pub sigma2_residual: f64,
    pub sigma2_intercept: f64,
    /// Training RMSE, including random intercepts for MER.
    pub rmse: f64,
    /// Standard error of `beta1`.
    pub beta1_se: f64,
    /// Maximized Gaussian log-likelihood.
    pub log_likelihood: f64,
    /// Fitted `σ²_u / σ²_e` (MER only).
    pub lambda: Option<f64>,
    /// MER requested on a single target; this is the OLS fit.
    pub degenerate: bool,
}

impl FitResult {
    pub fn predict(&self, target: &LanguageCode, feature: f64) -> f64 {
        self.beta0 + self.beta1 * feature + self.random_intercepts.get(target).copied().unwrap_or(0.0)
    }

    /// Human-readable summary with every field.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model={} grouping=target likelihood=ml", self.kind.as_str());
        let _ = writeln!(s, "beta0={:.9}", self.beta0);
        let _ = writeln!(s, "beta1={:.9} (se {:.6})", self.beta1, self.beta1_se);
        let _ = writeln!(s, "sigma2_residual={:.9}", self.sigma2_residual);
        let _ = writeln!(s, "sigma2_intercept={:.9}", self.sigma2_intercept);
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "lambda={l:.9e}");
        }
        let _ = writeln!(s, "log_likelihood={:.9}", self.log_likelihood);
        let _ = writeln!(s, "rmse={:.9}", self.rmse);
        if self.degenerate {
            let _ = writeln!(s, "degenerate=single_target");
        }
        for (t, u) in &self.random_intercepts {
            let _ = writeln!(s, "u[{t}]={u:.9}");
        }
        s
    }
}

fn rmse(data: &RegressionDataset, fit: &FitResult) -> f64 {
    let n = data.rows.len() as f64;
    (data.rows.iter().map(|r| (r.score - fit.predict(&r.target, r.feature)).powi(2)).sum::<f64>() / n).sqrt()
}

fn gaussian_ll(n: f64, sigma2: f64, logdet: f64) -> f64 {
    -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln() + 1.0) - 0.5 * logdet
}

/// Closed-form simple linear regression.
pub fn ols_fit(data: &RegressionDataset) -> Result<FitResult, RegressError> {
    let n = data.rows.len() as f64;
    let mf = data.rows.iter().map(|r| r.feature).sum::<f64>() / n;
    let ms = data.rows.iter().map(|r| r.score).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for r in &data.rows {
        sxx += (r.feature - mf).powi(2);
        sxy += (r.feature - mf) * (r.score - ms);
    }
    if sxx == 0.0 {
        return Err(RegressError::ZeroFeatureVariance);
    }
    let beta1 = sxy / sxx;
    let beta0 = ms - beta1 * mf;
    let mut fit = FitResult {
        kind: FitKind::Ols,
        beta0,
        beta1,
        random_intercepts: BTreeMap::new(),
        sigma2_residual: 0.0,
        sigma2_intercept: 0.0,
        rmse: 0.0,
        beta1_se: 0.0,
        log_likelihood: 0.0,
        lambda: None,
        degenerate: false,
    };
    fit.rmse = rmse(data, &fit);
    let ssr = fit.rmse.powi(2) * n;
    fit.sigma2_residual = ssr / n;
    fit.beta1_se = if n > 2.0 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    fit.log_likelihood = gaussian_ll(n, fit.sigma2_residual, 0.0);
    Ok(fit)
}

/// Everything the MER likelihood profiles out at a fixed `λ`.
#[derive(Debug, Clone)]
pub struct MerProfile {
    pub lambda: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub sigma2_residual: f64,
    pub log_likelihood: f64,
    /// `(X' H⁻¹ X)⁻¹[1][1]`, for the slope's standard error.
    pub inv_a11: f64,
    pub intercepts: BTreeMap<LanguageCode, f64>,
}

/// Profiled ML log-likelihood of the random-intercept model at variance ratio `lambda ≥ 0`.
///
/// With `H_g = I + λ·11'` per group, `H_g⁻¹ = I − w_g·11'` where
/// `w_g = λ / (1 + λ·n_g)` and `det H_g = 1 + λ·n_g`.
pub fn mer_profile(data: &RegressionDataset, lambda: f64) -> MerProfile {
    let groups = data.groups();
    // u' H⁻¹ v accumulated for the pairs needed by the 2×2 GLS system.
    let (mut a00, mut a01, mut a11, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut logdet = 0.0;
    for idx in groups.values() {
        let ng = idx.len() as f64;
        let w = lambda / (1.0 + lambda * ng);
        logdet += (lambda * ng).ln_1p();
        let (mut sf, mut ss, mut sff, mut sfs) = (0.0, 0.0, 0.0, 0.0);
        for &i in idx {
            let r = &data.rows[i];
            sf += r.feature;
            ss += r.score;
            sff += r.feature * r.feature;
            sfs += r.feature * r.score;
        }
        a00 += ng - w * ng * ng;
        a01 += sf - w * ng * sf;
        a11 += sff - w * sf * sf;
        b0 += ss - w * ng * ss;
        b1 += sfs - w * sf * ss;
    }
    let det = a00 * a11 - a01 * a01;
    let beta0 = (a11 * b0 - a01 * b1) / det;
    let beta1 = (a00 * b1 - a01 * b0) / det;

    let n = data.rows.len() as f64;
    let mut q = 0.0;
    let mut intercepts = BTreeMap::new();
    for (&t, idx) in &groups {
        let ng = idx.len() as f64;
        let w = lambda / (1.0 + lambda * ng);
        let (mut sr, mut srr) = (0.0, 0.0);
        for &i in idx {
            let r = &data.rows[i];
            let e = r.score - beta0 - beta1 * r.feature;
            sr += e;
            srr += e * e;
        }
        q += srr - w * sr * sr;
        intercepts.insert(t.clone(), w * sr);
    }
    let sigma2 = (q / n).max(f64::MIN_POSITIVE);
    MerProfile {
        lambda,
        beta0,
        beta1,
        sigma2_residual: sigma2,
        log_likelihood: gaussian_ll(n, sigma2, logdet),
        inv_a11: a00 / det,
        intercepts,
    }
}

/// Golden-section maximization of `f` on `[lo, hi]`; returns `(argmax, iterations)`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<(f64, usize), RegressError> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for it in 0..MAX_ITERS {
        if hi - lo <= SEARCH_TOL {
            return Ok(((lo + hi) / 2.0, it));
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    Err(RegressError::NonConvergence(MAX_ITERS))
}

/// Random-intercept mixed-effects fit (maximum likelihood, grouped by target).
pub fn mer_fit(data: &RegressionDataset) -> Result<FitResult, RegressError> {
    let groups = data.groups();
    if groups.len() < 2 {
        let mut fit = ols_fit(data)?;
        fit.kind = FitKind::Mer;
        fit.degenerate = true;
        return Ok(fit);
    }
    let ll = |t: f64| mer_profile(data, t.exp()).log_likelihood;

    // Bracket the best scan point, then refine.
    let step = (LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| LOG_LAMBDA_MIN + step * i as f64).collect();
    let best = grid
        .iter()
        .map(|&t| ll(t))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc })
        .0;
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(SCAN_POINTS - 1)];
    let (t_star, _) = golden_max(ll, lo, hi)?;

    let mut profile = mer_profile(data, t_star.exp());
    // σ²_u = 0 is the closure of the search interval's lower end.
    let at_zero = mer_profile(data, 0.0);
    if at_zero.log_likelihood >= profile.log_likelihood {
        profile = at_zero;
    }

    let mut fit = FitResult {
        kind: FitKind::Mer,
        beta0: profile.beta0,
        beta1: profile.beta1,
        random_intercepts: profile.intercepts.clone(),
        sigma2_residual: profile.sigma2_residual,
        sigma2_intercept: profile.lambda * profile.sigma2_residual,
        rmse: 0.0,
        beta1_se: (profile.sigma2_residual * profile.inv_a11).sqrt(),
        log_likelihood: profile.log_likelihood,
        lambda: Some(profile.lambda),
        degenerate: false,
    };
    fit.rmse = rmse(data, &fit);
    Ok(fit)
}

/// Ranking quality of a fit's predictions, averaged over targets (fractions in [0, 1]).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionScores {
    pub rmse: f64,
    pub top1: f64,
    pub ndcg: f64,
    pub per_target: Vec<(LanguageCode, bool, f64)>,
}

/// Ranks candidates per target by fitted value and scores against the rows' gold.
/// Targets absent from the fit use a zero random intercept.
pub fn predict_and_score(
    fit: &FitResult,
    data: &RegressionDataset,
    k: usize,
) -> Result<PredictionScores, RegressError> {
    let n = data.rows.len() as f64;
    let mut sq = 0.0;
    let mut gold = GoldMap::new();
    let mut by_target: BTreeMap<&LanguageCode, Vec<(LanguageCode, f64)>> = BTreeMap::new();
    for r in &data.rows {
        let pred = fit.predict(&r.target, r.feature);
        sq += (r.score - pred).powi(2);
        gold.insert((r.source.clone(), r.target.clone()), r.score);
        by_target.entry(&r.target).or_default().push((r.source.clone(), pred));
    }
    let mut per_target = Vec::with_capacity(by_target.len());
    for (t, scored) in by_target {
        let ranking = rank_candidates(t.clone(), scored, Polarity::HigherBetter);
        let hit = evalrank::top1(&ranking, &gold)?;
        let ndcg = evalrank::ndcg_at_k(&ranking, &gold, k)?;
        per_target.push((t.clone(), hit, ndcg));
    }
    let m = per_target.len() as f64;
    Ok(PredictionScores {
        rmse: (sq / n).sqrt(),
        top1: per_target.iter().filter(|p| p.1).count() as f64 / m,
        ndcg: per_target.iter().map(|p| p.2).sum::<f64>() / m,
        per_target,
    })
}
