//! Evaluation, regression, and parameter sweeps.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use langsim_core::evalrank::{aggregate_gold, evaluate_with, render_table, write_summary_csv, EvalOptions, EvalReport};
use langsim_core::regress::{mer_fit, ols_fit, predict_and_score, FitResult};
use langsim_core::subnet::{build_mask, similarity_matrix};
use langsim_core::{LanguageCode, RegressionDataset, RunConfig, SimilarityMatrix, TransferScoreTable};

use crate::inputs::{self, validation, Provenance};
use crate::pipeline;

fn tasks_for(gold: &TransferScoreTable, task: Option<&str>) -> Result<Vec<String>> {
    Ok(match task {
        Some(t) => vec![t.to_string()],
        None => {
            let all = gold.tasks();
            if all.is_empty() {
                return Err(validation("gold table has no rows"));
            }
            all
        }
    })
}

pub struct EvalArgs {
    pub matrices: Vec<PathBuf>,
    pub gold: PathBuf,
    pub task: Option<String>,
    pub include_self: bool,
}

pub fn eval(cfg: &RunConfig, a: &EvalArgs) -> Result<()> {
    if a.matrices.is_empty() {
        return Err(validation("eval needs at least one --matrix"));
    }
    let gold = inputs::load_gold(&a.gold)?;
    let matrices = a.matrices.iter().map(|p| inputs::load_matrix(p)).collect::<Result<Vec<_>>>()?;
    let opts = EvalOptions { k: cfg.k, include_self: a.include_self };
    let mut reports = Vec::new();
    for task in tasks_for(&gold, a.task.as_deref())? {
        for m in &matrices {
            reports.push(evaluate_with(m, &gold, &task, opts)?);
        }
    }
    let mut used = a.matrices.clone();
    used.push(a.gold.clone());
    let prov = Provenance::new("eval", cfg, &used)?;
    for r in &reports {
        let mut w = inputs::create(&cfg.out_dir.join(format!("eval_{}_{}.csv", r.task, r.method)))?;
        prov.write(&mut w)?;
        r.write_per_target_csv(&mut w)?;
        w.flush()?;
    }
    let mut w = inputs::create(&cfg.out_dir.join("summary.csv"))?;
    prov.write(&mut w)?;
    write_summary_csv(&reports, &mut w)?;
    w.flush()?;
    prov.print();
    print!("{}", render_table(&reports));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelChoice {
    Ols,
    Mer,
    Both,
}

pub struct RegressArgs {
    pub matrix: PathBuf,
    pub gold: PathBuf,
    pub task: Option<String>,
    pub model: ModelChoice,
}

pub fn regress(cfg: &RunConfig, a: &RegressArgs) -> Result<()> {
    let gold = inputs::load_gold(&a.gold)?;
    let matrix = inputs::load_matrix(&a.matrix)?;
    let prov = Provenance::new("regress", cfg, &[a.matrix.clone(), a.gold.clone()])?;
    prov.print();
    for task in tasks_for(&gold, a.task.as_deref())? {
        let data = RegressionDataset::from_matrix(&matrix, &aggregate_gold(&gold, &task)?)?;
        let mut fits: Vec<FitResult> = Vec::new();
        if a.model != ModelChoice::Mer {
            fits.push(ols_fit(&data)?);
        }
        if a.model != ModelChoice::Ols {
            fits.push(mer_fit(&data)?);
        }
        for fit in &fits {
            let scores = predict_and_score(fit, &data, cfg.k)?;
            let mut text = String::new();
            text.push_str(&format!("# task={task} method={} rows={}\n", matrix.method, data.rows().len()));
            text.push_str(&fit.summary());
            text.push_str(&format!(
                "prediction_rmse={:.9}\ntop1={:.4}\nndcg@{}={:.4}\n",
                scores.rmse, scores.top1, cfg.k, scores.ndcg
            ));
            for (t, hit, ndcg) in &scores.per_target {
                text.push_str(&format!("target[{t}] top1={hit} ndcg={ndcg:.6}\n"));
            }
            let path = cfg.out_dir.join(format!("regress_{task}_{}_{}.txt", matrix.method, fit.kind.as_str()));
            let mut w = inputs::create(&path)?;
            prov.write(&mut w)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
            print!("{text}");
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    P,
    SampleSize,
}

pub const DEFAULT_P_GRID: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];
pub const DEFAULT_SIZE_GRID: [usize; 6] = [64, 128, 256, 512, 1024, 10000];

pub struct SweepArgs {
    pub param: SweepParam,
    pub values: Option<Vec<String>>,
    pub dumps_dir: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub gold: PathBuf,
    pub task: Option<String>,
}

fn parse_values<T: std::str::FromStr>(values: &[String]) -> Result<Vec<T>> {
    values.iter().map(|v| v.trim().parse::<T>().map_err(|_| validation(format!("bad sweep value {v:?}")))).collect()
}

fn require(dir: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    dir.clone().ok_or_else(|| validation(format!("this sweep needs {flag}")))
}

/// XSNS matrix from in-memory dumps of every corpus in `dir`.
fn matrix_from_corpora(cfg: &RunConfig, corpora: &[(LanguageCode, Vec<Vec<u32>>)]) -> Result<SimilarityMatrix> {
    let mut subs = Vec::new();
    for (code, corpus) in corpora {
        for d in pipeline::dumps_for_corpus(cfg, code, corpus)? {
            subs.push(build_mask(&d, cfg.p)?);
        }
    }
    Ok(similarity_matrix(&subs)?)
}

pub fn sweep(cfg: &RunConfig, a: &SweepArgs) -> Result<()> {
    let gold = inputs::load_gold(&a.gold)?;
    let tasks = tasks_for(&gold, a.task.as_deref())?;
    let opts = EvalOptions { k: cfg.k, include_self: false };
    let mut used = vec![a.gold.clone()];
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    match a.param {
        SweepParam::P => {
            let grid = match &a.values {
                Some(v) => parse_values::<f64>(v)?,
                None => DEFAULT_P_GRID.to_vec(),
            };
            let dir = require(&a.dumps_dir, "--dumps-dir")?;
            for p in grid {
                let mut c = cfg.clone();
                c.p = p;
                c.validate()?;
                let (subs, files) = pipeline::load_subnetworks(&c, &dir)?;
                if rows.is_empty() {
                    used.extend(files);
                }
                let m = similarity_matrix(&subs)?;
                for t in &tasks {
                    rows.push((format!("{p}"), evaluate_with(&m, &gold, t, opts)?));
                }
            }
        }
        SweepParam::SampleSize => {
            let grid = match &a.values {
                Some(v) => parse_values::<usize>(v)?,
                None => DEFAULT_SIZE_GRID.to_vec(),
            };
            let dir = require(&a.corpus_dir, "--corpus-dir")?;
            let list = pipeline::corpora(&dir)?;
            let corpora =
                list.iter().map(|(c, p)| Ok((c.clone(), inputs::read_corpus(p)?))).collect::<Result<Vec<_>>>()?;
            used.extend(list.into_iter().map(|(_, p)| p));
            for n in grid {
                let mut c = cfg.clone();
                c.sample_size = n;
                c.validate()?;
                let m = matrix_from_corpora(&c, &corpora)?;
                for t in &tasks {
                    rows.push((n.to_string(), evaluate_with(&m, &gold, t, opts)?));
                }
            }
        }
    }
    let name = match a.param {
        SweepParam::P => "p",
        SweepParam::SampleSize => "sample_size",
    };
    let prov = Provenance::new(&format!("sweep {name}"), cfg, &used)?;
    let mut w = inputs::create(&cfg.out_dir.join(format!("sweep_{name}.csv")))?;
    prov.write(&mut w)?;
    write_sweep(name, cfg.k, &rows, &mut w)?;
    w.flush()?;
    prov.print();
    write_sweep(name, cfg.k, &rows, &mut std::io::stdout().lock())?;
    Ok(())
}

fn write_sweep<W: Write>(name: &str, k: usize, rows: &[(String, EvalReport)], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{name},task,method,pearson,spearman,top1,ndcg@{k}")?;
    for (v, r) in rows {
        let m = &r.mean;
        writeln!(w, "{v},{},{},{:.2},{:.2},{:.2},{:.2}", r.task, r.method, m.pearson, m.spearman, m.top1, m.ndcg)?;
    }
    Ok(())
}
