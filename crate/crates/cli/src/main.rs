//! `langsim`: sub-network similarity between languages and its evaluation
//! as a predictor of cross-lingual transfer.

mod analysis;
mod inputs;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use langsim_core::RunConfig;

use analysis::{EvalArgs, ModelChoice, RegressArgs, SweepArgs, SweepParam};
use inputs::{validation, CliError};
use pipeline::{BaselineKind, FisherSource, SynthArgs};

#[derive(Parser)]
#[command(name = "langsim", version, about = "Language similarity from Fisher sub-networks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Protocol settings. Precedence: flags, then `--set`, then `--config`, then defaults.
#[derive(Args)]
struct Global {
    /// `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set seeds=0,1`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Top fraction of parameters kept in each mask
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Sentences per Fisher estimate
    #[arg(long, global = true)]
    sample_size: Option<usize>,
    /// Comma-separated seeds
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Cutoff for NDCG@k
    #[arg(long, global = true)]
    k: Option<usize>,
    /// lm_masked or task_head_random
    #[arg(long, global = true)]
    objective: Option<String>,
    /// task_corpus or general_corpus
    #[arg(long, global = true)]
    corpus_tag: Option<String>,
    #[arg(long, global = true)]
    model_seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

impl Global {
    fn resolve(&self) -> Result<RunConfig> {
        let file = self.config.as_deref().map(inputs::read_text).transpose()?;
        let mut overrides = Vec::new();
        for kv in &self.set {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| validation(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        push("p", self.p.map(|v| v.to_string()));
        push("sample_size", self.sample_size.map(|v| v.to_string()));
        push("seeds", self.seeds.clone());
        push("k", self.k.map(|v| v.to_string()));
        push("objective", self.objective.clone());
        push("corpus_tag", self.corpus_tag.clone());
        push("model_seed", self.model_seed.map(|v| v.to_string()));
        push("out_dir", self.out_dir.as_ref().map(|p| p.display().to_string()));
        Ok(RunConfig::resolve(file.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic language families, corpora, gold transfer scores and vectors
    Synth {
        #[arg(long, default_value_t = 3)]
        families: usize,
        #[arg(long, default_value_t = 2)]
        per_family: usize,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        family_seed: u64,
        #[arg(long, default_value_t = 4096)]
        sentences: usize,
        #[arg(long, default_value_t = 8)]
        min_len: usize,
        #[arg(long, default_value_t = 24)]
        max_len: usize,
        #[arg(long, default_value = "synthetic")]
        task: String,
    },
    /// Estimate diagonal Fisher dumps, one per seed
    Fisher {
        /// Single corpus file of token ids (needs --language)
        #[arg(long, conflicts_with_all = ["corpus_dir", "grad_stream"])]
        corpus: Option<PathBuf>,
        #[arg(long, requires = "corpus")]
        language: Option<String>,
        /// Directory of `<code>.txt` corpora
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// Per-example gradient stream written by an external model
        #[arg(long, conflicts_with = "corpus_dir")]
        grad_stream: Option<PathBuf>,
    },
    /// Binarize dumps into top-p masks
    Mask {
        #[arg(required = true)]
        dumps: Vec<PathBuf>,
    },
    /// Seed-averaged Jaccard matrix over dumps and masks in a directory
    Sim {
        #[arg(long)]
        dumps_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank transfer sources for one target
    Rank {
        #[arg(long)]
        target: String,
        #[arg(long, conflicts_with = "dumps_dir")]
        matrix: Option<PathBuf>,
        #[arg(long)]
        dumps_dir: Option<PathBuf>,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Baseline similarity matrices
    Baseline {
        method: BaselineMethod,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        /// WordPiece vocabulary, one token per line
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Also write per-language distributions or point clouds here
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score similarity matrices against gold transfer results
    Eval {
        #[arg(long = "matrix", required = true)]
        matrices: Vec<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Defaults to every task in the gold table
        #[arg(long)]
        task: Option<String>,
        /// Keep the target itself among the candidates
        #[arg(long)]
        include_self: bool,
    },
    /// Regress transfer scores on similarity
    Regress {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
        #[arg(long, value_enum, default_value = "both")]
        model: ModelChoice,
    },
    /// Evaluate across a grid of p or sample sizes
    Sweep {
        #[arg(value_enum)]
        param: SweepParam,
        /// Comma-separated grid; defaults depend on the parameter
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[arg(long)]
        dumps_dir: Option<PathBuf>,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        task: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Lex,
    Sue,
    Emb,
    L2v,
}

fn need(path: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone()).ok_or_else(|| validation(format!("missing {flag}")))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.resolve()?;
    log::debug!("resolved config: {:?}", cfg.protocol_pairs());
    match cli.command {
        Command::Synth { families, per_family, noise, family_seed, sentences, min_len, max_len, task } => {
            pipeline::synth(
                &cfg,
                &SynthArgs { families, per_family, noise, family_seed, sentences, min_len, max_len, task },
            )
        }
        Command::Fisher { corpus, language, corpus_dir, grad_stream } => {
            let source = match (corpus, grad_stream) {
                (Some(path), _) => {
                    let language = language.ok_or_else(|| validation("--corpus needs --language"))?;
                    let language = langsim_core::LanguageCode::new(language).map_err(|e| validation(e.to_string()))?;
                    FisherSource::Corpus { path, language }
                }
                (None, Some(path)) => FisherSource::GradStream(path),
                (None, None) => FisherSource::CorpusDir(need(
                    corpus_dir,
                    &cfg.corpus_dir,
                    "--corpus, --corpus-dir or --grad-stream",
                )?),
            };
            pipeline::fisher(&cfg, source)
        }
        Command::Mask { dumps } => pipeline::mask(&cfg, &dumps),
        Command::Sim { dumps_dir, out } => pipeline::sim(&cfg, &need(dumps_dir, &cfg.dumps_dir, "--dumps-dir")?, out),
        Command::Rank { target, matrix, dumps_dir, top } => {
            let (m, used) = match matrix {
                Some(p) => (inputs::load_matrix(&p)?, vec![p]),
                None => {
                    let dir = need(dumps_dir, &cfg.dumps_dir, "--matrix or --dumps-dir")?;
                    let (subs, files) = pipeline::load_subnetworks(&cfg, &dir)?;
                    (langsim_core::subnet::similarity_matrix(&subs)?, files)
                }
            };
            pipeline::rank(&cfg, m, &target, top, &used)
        }
        Command::Baseline { method, corpus_dir, vocab, vectors, export, out } => {
            let kind = match method {
                BaselineMethod::Lex => {
                    BaselineKind::Lex { corpus_dir: need(corpus_dir, &cfg.corpus_dir, "--corpus-dir")?, vocab, export }
                }
                BaselineMethod::Sue => BaselineKind::Sue {
                    corpus_dir: need(corpus_dir, &cfg.corpus_dir, "--corpus-dir")?,
                    vocab: need(vocab, &None, "--vocab")?,
                    export,
                },
                BaselineMethod::Emb => BaselineKind::Emb {
                    vectors: vectors.or_else(|| cfg.vectors.clone()),
                    corpus_dir: corpus_dir.or_else(|| cfg.corpus_dir.clone()),
                },
                BaselineMethod::L2v => BaselineKind::L2v { vectors: need(vectors, &cfg.vectors, "--vectors")? },
            };
            pipeline::baseline(&cfg, kind, out)
        }
        Command::Eval { matrices, gold, task, include_self } => {
            let gold = need(gold, &cfg.gold, "--gold")?;
            analysis::eval(&cfg, &EvalArgs { matrices, gold, task, include_self })
        }
        Command::Regress { matrix, gold, task, model } => {
            let gold = need(gold, &cfg.gold, "--gold")?;
            analysis::regress(&cfg, &RegressArgs { matrix, gold, task, model })
        }
        Command::Sweep { param, values, dumps_dir, corpus_dir, gold, task } => {
            let gold = need(gold, &cfg.gold, "--gold")?;
            analysis::sweep(
                &cfg,
                &SweepArgs {
                    param,
                    values,
                    dumps_dir: dumps_dir.or_else(|| cfg.dumps_dir.clone()),
                    corpus_dir: corpus_dir.or_else(|| cfg.corpus_dir.clone()),
                    gold,
                    task,
                },
            )
        }
    }
}

/// 0 ok, 1 invalid input, 2 missing input, 3 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use langsim_core::{baselines, config, evalrank, fisher, lang, refmodel, regress, subnet, tensorstore};
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<CliError>() {
            return match c {
                CliError::MissingInput(_) => 2,
                CliError::Validation(_) => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { 2 } else { 3 };
        }
        if let Some(tensorstore::FormatError::Io { .. }) = cause.downcast_ref::<tensorstore::FormatError>() {
            continue;
        }
        if cause.is::<tensorstore::FormatError>()
            || cause.is::<config::ConfigError>()
            || cause.is::<evalrank::EvalError>()
            || cause.is::<regress::RegressError>()
            || cause.is::<subnet::SubnetError>()
            || cause.is::<fisher::FisherError>()
            || cause.is::<baselines::BaselineError>()
            || cause.is::<refmodel::RefModelError>()
            || cause.is::<lang::CodeError>()
        {
            return 1;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
