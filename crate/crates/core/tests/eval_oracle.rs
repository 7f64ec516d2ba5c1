//! Ranking metrics against brute-force and first-principles recomputation.

use std::collections::HashMap;

use langsim_core::evalrank::*;
use langsim_core::{LanguageCode, Method, Polarity, SimilarityMatrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn code(s: &str) -> LanguageCode {
    LanguageCode::new(s).unwrap()
}

fn codes(n: usize) -> Vec<LanguageCode> {
    (0..n).map(|i| code(&format!("l{i}"))).collect()
}

fn gold_map(target: &LanguageCode, sources: &[LanguageCode], scores: &[f64]) -> GoldMap {
    sources.iter().zip(scores).map(|(s, &g)| ((s.clone(), target.clone()), g)).collect()
}

fn ranking(target: &LanguageCode, order: &[LanguageCode]) -> Ranking {
    let n = order.len();
    Ranking {
        target: target.clone(),
        ordered_sources: order.to_vec(),
        predicted_scores: (0..n).map(|i| (n - i) as f64).collect(),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn hand_fixture_values() {
    let t = code("t");
    let src = codes(3);
    let gold = gold_map(&t, &src, &[3.0, 2.0, 1.0]);
    let reversed = ranking(&t, &[src[2].clone(), src[1].clone(), src[0].clone()]);
    let dcg = 1.0 + 2.0 / 3f64.log2() + 3.0 / 2.0;
    let idcg = 3.0 + 2.0 / 3f64.log2() + 1.0 / 2.0;
    assert!((ndcg_at_k(&reversed, &gold, 3).unwrap() - dcg / idcg).abs() < 1e-12);
    assert!((ndcg_at_k(&reversed, &gold, 3).unwrap() - 0.79000).abs() < 1e-5);
    assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-9);
    let explicit = pearson(&[1.0, 2.5, 2.5, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - explicit).abs() < 1e-9);
}

#[test]
fn identity_order_uniquely_maximizes_ndcg() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=6 {
        for _ in 0..10 {
            let t = code("t");
            let src = codes(n);
            // Distinct gold scores in descending order, so the identity is the gold order.
            let mut g: Vec<f64> = (0..n).map(|i| (n - i) as f64 * 10.0 + rng.random_range(0.0..5.0)).collect();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let gold = gold_map(&t, &src, &g);
            let mut best = Vec::new();
            for perm in permutations(n) {
                let order: Vec<_> = perm.iter().map(|&i| src[i].clone()).collect();
                let v = ndcg_at_k(&ranking(&t, &order), &gold, n).unwrap();
                assert!((0.0..=1.0 + 1e-12).contains(&v));
                if (v - 1.0).abs() < 1e-12 {
                    best.push(perm);
                }
            }
            assert_eq!(best, vec![(0..n).collect::<Vec<_>>()]);
        }
    }
}

#[test]
fn ndcg_truncates_at_candidate_count() {
    let t = code("t");
    let src = codes(4);
    let gold = gold_map(&t, &src, &[10.0, 40.0, 20.0, 30.0]);
    let r = ranking(&t, &src);
    assert_eq!(ndcg_at_k(&r, &gold, 4).unwrap(), ndcg_at_k(&r, &gold, 50).unwrap());
}

#[test]
fn aggregate_matches_group_by() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let langs = ["a", "b", "c", "d"];
    let mut rows = Vec::new();
    for task in ["ner", "pos"] {
        for s in langs {
            for t in langs {
                for seed in 0..rng.random_range(1..4) {
                    rows.push(GoldRow {
                        task: task.into(),
                        source: s.into(),
                        target: t.into(),
                        seed,
                        score: rng.random_range(0.0..100.0),
                    });
                }
            }
        }
    }
    let table = TransferScoreTable::new(rows.clone()).unwrap();
    let agg = aggregate_gold(&table, "pos").unwrap();
    let mut naive: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for r in rows.iter().filter(|r| r.task == "pos") {
        naive.entry((r.source.clone(), r.target.clone())).or_default().push(r.score);
    }
    assert_eq!(agg.len(), naive.len());
    for ((s, t), v) in naive {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((agg[&(code(&s), code(&t))] - mean).abs() < 1e-12);
    }
}

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

#[test]
fn six_language_report_matches_first_principles() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let langs = codes(6);
    let n = langs.len();
    let values: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
    let matrix = SimilarityMatrix::new(langs.clone(), values.clone(), Method::Xsns, 3);
    let mut rows = Vec::new();
    for s in &langs {
        for t in &langs {
            for seed in 0..3 {
                rows.push(GoldRow {
                    task: "x".into(),
                    source: s.to_string(),
                    target: t.to_string(),
                    seed,
                    score: rng.random_range(10.0..90.0),
                });
            }
        }
    }
    let table = TransferScoreTable::new(rows.clone()).unwrap();
    let report = evaluate(&matrix, &table, "x", 3).unwrap();
    let gold = |s: usize, t: usize| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.source == langs[s].as_str() && r.target == langs[t].as_str())
            .map(|r| r.score)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut sums = [0.0; 4];
    for t in 0..n {
        let cands: Vec<usize> = (0..n).filter(|&s| s != t).collect();
        let pred: Vec<f64> = cands.iter().map(|&s| values[t * n + s]).collect();
        let g: Vec<f64> = cands.iter().map(|&s| gold(s, t)).collect();
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by(|&a, &b| pred[b].partial_cmp(&pred[a]).unwrap());
        let best = g.iter().cloned().fold(f64::MIN, f64::max);
        let top1 = if g[order[0]] == best { 100.0 } else { 0.0 };
        let mut ideal = g.clone();
        ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let dcg: f64 = order.iter().take(3).enumerate().map(|(i, &c)| g[c] / ((i + 2) as f64).log2()).sum();
        let idcg: f64 = ideal.iter().take(3).enumerate().map(|(i, &v)| v / ((i + 2) as f64).log2()).sum();
        let expect = [
            100.0 * oracle_pearson(&pred, &g),
            100.0 * oracle_pearson(&oracle_ranks(&pred), &oracle_ranks(&g)),
            top1,
            100.0 * dcg / idcg,
        ];
        let m = report.per_target[t].metrics;
        let got = [m.pearson, m.spearman, m.top1, m.ndcg];
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9, "target {t}: {got:?} vs {expect:?}");
        }
        sums.iter_mut().zip(&expect).for_each(|(s, e)| *s += e / n as f64);
    }
    let mean = [report.mean.pearson, report.mean.spearman, report.mean.top1, report.mean.ndcg];
    for (a, b) in mean.iter().zip(&sums) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn report_independent_of_language_listing_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let langs = codes(5);
    let n = 5;
    let values: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
    let m = SimilarityMatrix::new(langs.clone(), values.clone(), Method::Xsns, 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let shuffled_vals: Vec<f64> = (0..n * n).map(|x| values[perm[x / n] * n + perm[x % n]]).collect();
    let shuffled =
        SimilarityMatrix::new(perm.iter().map(|&i| langs[i].clone()).collect(), shuffled_vals, Method::Xsns, 1);
    let mut rows = Vec::new();
    for s in &langs {
        for t in &langs {
            rows.push(GoldRow {
                task: "x".into(),
                source: s.to_string(),
                target: t.to_string(),
                seed: 0,
                score: rng.random_range(0.0..100.0),
            });
        }
    }
    let table = TransferScoreTable::new(rows).unwrap();
    let a = evaluate(&m, &table, "x", 3).unwrap();
    let b = evaluate(&shuffled, &table, "x", 3).unwrap();
    for ta in &a.per_target {
        let tb = b.per_target.iter().find(|x| x.target == ta.target).unwrap();
        assert_eq!(ta.metrics, tb.metrics);
    }
}

#[test]
fn polarity_fixture_lex_and_xsns_disagree() {
    // Raw scores identical; only the declared polarity differs.
    let langs = vec![code("a"), code("b"), code("t")];
    let raw = vec![0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.1, 0.7, 0.0];
    let xsns = SimilarityMatrix::new(langs.clone(), raw.clone(), Method::Xsns, 1);
    let lex = SimilarityMatrix::new(langs.clone(), raw, Method::Lex, 1);
    let rx = rank_sources(&langs[2], &xsns, Method::Xsns.polarity()).unwrap();
    let rl = rank_sources(&langs[2], &lex, Method::Lex.polarity()).unwrap();
    assert_eq!(rx.ordered_sources, vec![code("b"), code("a")]);
    assert_eq!(rl.ordered_sources, vec![code("a"), code("b")]);
    assert_eq!(Method::Sue.polarity(), Polarity::LowerBetter);
    // Gold favors `a`: LEX read as a divergence must win.
    let rows = ["a", "b"]
        .iter()
        .zip([80.0, 20.0])
        .flat_map(|(s, g)| {
            ["a", "b", "t"].iter().map(move |t| GoldRow {
                task: "x".into(),
                source: s.to_string(),
                target: t.to_string(),
                seed: 0,
                score: g,
            })
        })
        .chain(["a", "b"].iter().map(|t| GoldRow {
            task: "x".into(),
            source: "t".into(),
            target: t.to_string(),
            seed: 0,
            score: 50.0,
        }))
        .collect();
    let gold = aggregate_gold(&TransferScoreTable::new(rows).unwrap(), "x").unwrap();
    assert!(top1(&rl, &gold).unwrap());
    assert!(!top1(&rx, &gold).unwrap());
}

fn transform(kind: u8, v: f64) -> f64 {
    match kind {
        0 => 3.0 * v + 7.0,
        1 => v.exp(),
        2 => v.powi(3) + v,
        _ => (v + 10.0).ln(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn ranking_metrics_invariant_under_increasing_transforms(
        seed in any::<u64>(),
        n in 3usize..8,
        kind in 0u8..4,
        k in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = code("t");
        let src = codes(n);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let gold = gold_map(&t, &src, &g);
        let base = rank_candidates(t.clone(), src.iter().cloned().zip(scores.iter().cloned()).collect(), Polarity::HigherBetter);
        let moved = rank_candidates(t.clone(), src.iter().cloned().zip(scores.iter().map(|&v| transform(kind, v))).collect(), Polarity::HigherBetter);
        prop_assert_eq!(&base.ordered_sources, &moved.ordered_sources);
        prop_assert_eq!(top1(&base, &gold).unwrap(), top1(&moved, &gold).unwrap());
        prop_assert_eq!(ndcg_at_k(&base, &gold, k).unwrap(), ndcg_at_k(&moved, &gold, k).unwrap());
        let tv: Vec<f64> = scores.iter().map(|&v| transform(kind, v)).collect();
        prop_assert!((spearman(&scores, &g).unwrap() - spearman(&tv, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ndcg_bounded(g in prop::collection::vec(0.0f64..100.0, 2..7), k in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = code("t");
        let src = codes(g.len());
        let gold = gold_map(&t, &src, &g);
        let mut order = src.clone();
        order.shuffle(&mut rng);
        let v = ndcg_at_k(&ranking(&t, &order), &gold, k).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }
}
