//! Ranking candidate source languages and scoring rankings against gold
//! transfer results.
//!
//! Conventions (also written into every report header):
//! - NDCG uses linear gains over raw gold scores and a `log2(rank + 1)` discount.
//! - The target language is excluded from its own candidate pool unless
//!   [`EvalOptions::include_self`] is set.
//! - Ties in predicted score are broken by ascending language code.
//! - Correlations over zero-variance inputs are errors, never NaN.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::LanguageCode;
use crate::matrix::{Method, Polarity, SimilarityMatrix};

/// Default NDCG cutoff.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("target {0} is not in the matrix")]
    UnknownTarget(String),
    #[error("matrix entry ({target}, {candidate}) is NaN")]
    NanScore { target: String, candidate: String },
    #[error("missing gold scores for {} (source, target) pairs: {}", .0.len(), format_pairs(.0))]
    MissingGold(Vec<(String, String)>),
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("correlation needs two equal-length inputs of length >= 2 (got {0} and {1})")]
    BadLength(usize, usize),
    #[error("undefined metrics for {} target(s): {}", .0.len(), .0.iter().map(|(t, why)| format!("{t} ({why})")).collect::<Vec<_>>().join(", "))]
    Undefined(Vec<(String, String)>),
    #[error("gold score {score} for ({candidate}, {target}) is negative")]
    NegativeGold { candidate: String, target: String, score: f64 },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no gold rows for task {0:?}")]
    UnknownTask(String),
    #[error("duplicate gold row for task {task}, {from} -> {target}, seed {seed}")]
    DuplicateRow { task: String, from: String, target: String, seed: i64 },
    #[error("gold score {0} is outside [0, 100]")]
    ScoreRange(f64),
    #[error("invalid language code: {0}")]
    BadCode(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(s, t)| format!("{s}->{t}")).collect::<Vec<_>>().join(", ")
}

/// One gold transfer result: fine-tune on `source`, evaluate on `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRow {
    pub task: String,
    pub source: String,
    pub target: String,
    pub seed: i64,
    pub score: f64,
}

/// Gold cross-lingual transfer scores, CSV header `task,source,target,seed,score`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferScoreTable {
    rows: Vec<GoldRow>,
}

/// Seed-averaged gold score keyed by `(source, target)`.
pub type GoldMap = BTreeMap<(LanguageCode, LanguageCode), f64>;

impl TransferScoreTable {
    pub fn new(rows: Vec<GoldRow>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            LanguageCode::new(r.source.as_str()).map_err(|e| EvalError::BadCode(e.to_string()))?;
            LanguageCode::new(r.target.as_str()).map_err(|e| EvalError::BadCode(e.to_string()))?;
            if !(0.0..=100.0).contains(&r.score) {
                return Err(EvalError::ScoreRange(r.score));
            }
            if !seen.insert((&r.task, &r.source, &r.target, r.seed)) {
                return Err(EvalError::DuplicateRow {
                    task: r.task.clone(),
                    from: r.source.clone(),
                    target: r.target.clone(),
                    seed: r.seed,
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[GoldRow] {
        &self.rows
    }

    pub fn tasks(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.task.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn read_csv<R: Read>(source: R) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(source);
        let rows = rdr.deserialize().collect::<Result<Vec<GoldRow>, _>>()?;
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(sink);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Mean gold score over fine-tuning seeds for every `(source, target)` of a task.
pub fn aggregate_gold(table: &TransferScoreTable, task: &str) -> Result<GoldMap, EvalError> {
    let mut acc: BTreeMap<(LanguageCode, LanguageCode), (f64, usize)> = BTreeMap::new();
    for r in table.rows.iter().filter(|r| r.task == task) {
        let key = (
            LanguageCode::new(r.source.as_str()).map_err(|e| EvalError::BadCode(e.to_string()))?,
            LanguageCode::new(r.target.as_str()).map_err(|e| EvalError::BadCode(e.to_string()))?,
        );
        let e = acc.entry(key).or_insert((0.0, 0));
        e.0 += r.score;
        e.1 += 1;
    }
    if acc.is_empty() {
        return Err(EvalError::UnknownTask(task.to_string()));
    }
    Ok(acc.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect())
}

/// Candidate sources for one target, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub target: LanguageCode,
    pub ordered_sources: Vec<LanguageCode>,
    /// Raw predicted scores, parallel to `ordered_sources`.
    pub predicted_scores: Vec<f64>,
}

/// Sorts `(candidate, score)` pairs best-first under `polarity`; ties go to the
/// lexicographically smaller code.
pub fn rank_candidates(target: LanguageCode, mut scored: Vec<(LanguageCode, f64)>, polarity: Polarity) -> Ranking {
    scored.sort_by(|(la, a), (lb, b)| {
        let oa = polarity.orient(*a);
        let ob = polarity.orient(*b);
        ob.partial_cmp(&oa).unwrap_or(Ordering::Equal).then_with(|| la.cmp(lb))
    });
    let (ordered_sources, predicted_scores) = scored.into_iter().unzip();
    Ranking { target, ordered_sources, predicted_scores }
}

/// Ranks every other language in `matrix` as a source for `target`.
pub fn rank_sources(
    target: &LanguageCode,
    matrix: &SimilarityMatrix,
    polarity: Polarity,
) -> Result<Ranking, EvalError> {
    rank_sources_with(target, matrix, polarity, false)
}

pub fn rank_sources_with(
    target: &LanguageCode,
    matrix: &SimilarityMatrix,
    polarity: Polarity,
    include_self: bool,
) -> Result<Ranking, EvalError> {
    let row = matrix.index_of(target).ok_or_else(|| EvalError::UnknownTarget(target.to_string()))?;
    let mut scored = Vec::with_capacity(matrix.size());
    for (col, lang) in matrix.languages.iter().enumerate() {
        if col == row && !include_self {
            continue;
        }
        let v = matrix.get(row, col);
        if v.is_nan() {
            return Err(EvalError::NanScore { target: target.to_string(), candidate: lang.to_string() });
        }
        scored.push((lang.clone(), v));
    }
    Ok(rank_candidates(target.clone(), scored, polarity))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(EvalError::BadLength(x.len(), y.len()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) {
        return Err(EvalError::ZeroVariance("x"));
    }
    if constant(y) {
        return Err(EvalError::ZeroVariance("y"));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties receiving the mean of the positions they span.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            ranks[p] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

fn gold_for(ranking: &Ranking, gold: &GoldMap) -> Result<Vec<f64>, EvalError> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(ranking.ordered_sources.len());
    for s in &ranking.ordered_sources {
        match gold.get(&(s.clone(), ranking.target.clone())) {
            Some(&g) => out.push(g),
            None => missing.push((s.to_string(), ranking.target.to_string())),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingGold(missing));
    }
    Ok(out)
}

/// Whether the top-ranked candidate is a gold-best source (any of several tied bests counts).
pub fn top1(ranking: &Ranking, gold: &GoldMap) -> Result<bool, EvalError> {
    let g = gold_for(ranking, gold)?;
    let Some(&first) = g.first() else { return Ok(false) };
    Ok(g.iter().all(|&v| first >= v))
}

/// `DCG@k / IDCG@k` with linear gains; 1.0 when the ideal DCG is zero.
pub fn ndcg_at_k(ranking: &Ranking, gold: &GoldMap, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let g = gold_for(ranking, gold)?;
    for (s, &v) in ranking.ordered_sources.iter().zip(&g) {
        if v < 0.0 {
            return Err(EvalError::NegativeGold {
                candidate: s.to_string(),
                target: ranking.target.to_string(),
                score: v,
            });
        }
    }
    let dcg =
        |gains: &[f64]| -> f64 { gains.iter().take(k).enumerate().map(|(i, &r)| r / ((i + 2) as f64).log2()).sum() };
    let mut ideal = g.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg(&g) / idcg)
}

/// Metrics in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSet {
    pub pearson: f64,
    pub spearman: f64,
    pub top1: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetScores {
    pub target: LanguageCode,
    pub metrics: MetricSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub task: String,
    pub k: usize,
    pub include_self: bool,
    pub per_target: Vec<TargetScores>,
    pub mean: MetricSet,
    /// Provenance lines written into report headers.
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub k: usize,
    pub include_self: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { k: DEFAULT_K, include_self: false }
    }
}

/// Scores every target in `matrix` and averages across targets.
pub fn evaluate(
    matrix: &SimilarityMatrix,
    gold: &TransferScoreTable,
    task: &str,
    k: usize,
) -> Result<EvalReport, EvalError> {
    evaluate_with(matrix, gold, task, EvalOptions { k, ..EvalOptions::default() })
}

pub fn evaluate_with(
    matrix: &SimilarityMatrix,
    gold: &TransferScoreTable,
    task: &str,
    opts: EvalOptions,
) -> Result<EvalReport, EvalError> {
    if opts.k == 0 {
        return Err(EvalError::ZeroK);
    }
    let gold = aggregate_gold(gold, task)?;
    let polarity = matrix.method.polarity();
    let rankings = matrix
        .languages
        .iter()
        .map(|t| rank_sources_with(t, matrix, polarity, opts.include_self))
        .collect::<Result<Vec<_>, _>>()?;

    let mut gaps = Vec::new();
    for r in &rankings {
        if let Err(EvalError::MissingGold(m)) = gold_for(r, &gold) {
            gaps.extend(m);
        }
    }
    if !gaps.is_empty() {
        return Err(EvalError::MissingGold(gaps));
    }

    let mut per_target = Vec::with_capacity(rankings.len());
    let mut undefined = Vec::new();
    for r in &rankings {
        match score_target(r, &gold, polarity, opts.k) {
            Ok(metrics) => per_target.push(TargetScores { target: r.target.clone(), metrics }),
            Err(e) => undefined.push((r.target.to_string(), e.to_string())),
        }
    }
    if !undefined.is_empty() {
        return Err(EvalError::Undefined(undefined));
    }
    let n = per_target.len() as f64;
    let mean = per_target.iter().fold(MetricSet::default(), |m, t| MetricSet {
        pearson: m.pearson + t.metrics.pearson / n,
        spearman: m.spearman + t.metrics.spearman / n,
        top1: m.top1 + t.metrics.top1 / n,
        ndcg: m.ndcg + t.metrics.ndcg / n,
    });
    let mut attributes = matrix.attributes.clone();
    attributes.insert("seeds_averaged".into(), matrix.seeds_averaged.to_string());
    Ok(EvalReport {
        method: matrix.method,
        task: task.to_string(),
        k: opts.k,
        include_self: opts.include_self,
        per_target,
        mean,
        attributes,
    })
}

fn score_target(r: &Ranking, gold: &GoldMap, polarity: Polarity, k: usize) -> Result<MetricSet, EvalError> {
    let g = gold_for(r, gold)?;
    let predicted: Vec<f64> = r.predicted_scores.iter().map(|&s| polarity.orient(s)).collect();
    Ok(MetricSet {
        pearson: 100.0 * pearson(&predicted, &g)?,
        spearman: 100.0 * spearman(&predicted, &g)?,
        top1: if top1(r, gold)? { 100.0 } else { 0.0 },
        ndcg: 100.0 * ndcg_at_k(r, gold, k)?,
    })
}

impl EvalReport {
    /// Comment lines describing the metric conventions and provenance.
    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# task={} method={} k={}", self.task, self.method, self.k),
            "# ndcg_gain=linear ndcg_discount=log2(rank+1) correlation_inputs=predicted_vs_gold".to_string(),
            format!("# candidates={}", if self.include_self { "include_self" } else { "exclude_self" }),
            "# metrics in percent, averaged over targets".to_string(),
        ];
        lines.extend(self.attributes.iter().map(|(k, v)| format!("# {k}={v}")));
        lines
    }

    /// `target,pearson,spearman,top1,ndcg@k` per target plus a `mean` row.
    pub fn write_per_target_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in self.header_lines() {
            writeln!(w, "{l}")?;
        }
        writeln!(w, "target,pearson,spearman,top1,ndcg@{}", self.k)?;
        let row = |m: &MetricSet| format!("{:.4},{:.4},{:.4},{:.4}", m.pearson, m.spearman, m.top1, m.ndcg);
        for t in &self.per_target {
            writeln!(w, "{},{}", t.target, row(&t.metrics))?;
        }
        writeln!(w, "mean,{}", row(&self.mean))
    }
}

/// `task,method,pearson,spearman,top1,ndcg@k`, one row per report.
pub fn write_summary_csv<W: Write>(reports: &[EvalReport], mut w: W) -> std::io::Result<()> {
    if let Some(r) = reports.first() {
        for l in r.header_lines().iter().skip(1).take(3) {
            writeln!(w, "{l}")?;
        }
    }
    let k = reports.first().map_or(DEFAULT_K, |r| r.k);
    writeln!(w, "task,method,pearson,spearman,top1,ndcg@{k}")?;
    for r in reports {
        let m = &r.mean;
        writeln!(w, "{},{},{:.2},{:.2},{:.2},{:.2}", r.task, r.method, m.pearson, m.spearman, m.top1, m.ndcg)?;
    }
    Ok(())
}

/// Aligned text table: one block per task, method rows × metric columns.
pub fn render_table(reports: &[EvalReport]) -> String {
    let k = reports.first().map_or(DEFAULT_K, |r| r.k);
    let ndcg = format!("NDCG@{k}");
    let mut out = String::new();
    let _ =
        writeln!(out, "{:<10} {:<8} {:>9} {:>9} {:>9} {:>9}", "Task", "Method", "Pearson", "Spearman", "Top 1", ndcg);
    let mut last_task: Option<&str> = None;
    for r in reports {
        let task = if last_task == Some(r.task.as_str()) { "" } else { r.task.as_str() };
        last_task = Some(&r.task);
        let m = &r.mean;
        let _ = writeln!(
            out,
            "{:<10} {:<8} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            task,
            r.method.as_str().to_uppercase(),
            m.pearson,
            m.spearman,
            m.top1,
            m.ndcg
        );
    }
    out
}
