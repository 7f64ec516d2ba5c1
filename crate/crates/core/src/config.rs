//! Run configuration shared by every command.
//!
//! Sources are layered: built-in defaults, then a `key = value` file, then
//! explicit overrides. Every output embeds the resolved configuration.

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::evalrank::DEFAULT_K;
use crate::hash::fnv1a64;
use crate::lang::{CorpusTag, Objective};
use crate::subnet::DEFAULT_P;

pub const DEFAULT_SAMPLE_SIZE: usize = 1024;
pub const DEFAULT_SEEDS: [i32; 3] = [0, 1, 2];
pub const DEFAULT_MODEL_SEED: u64 = 7;
pub const DEFAULT_NUM_LABELS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub p: f64,
    pub sample_size: usize,
    pub seeds: Vec<i32>,
    pub k: usize,
    pub objective: Objective,
    pub corpus_tag: CorpusTag,
    pub model_seed: u64,
    pub num_labels: usize,
    pub head_seed: u64,
    pub dumps_dir: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            p: DEFAULT_P,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seeds: DEFAULT_SEEDS.to_vec(),
            k: DEFAULT_K,
            objective: Objective::LmMasked,
            corpus_tag: CorpusTag::TaskCorpus,
            model_seed: DEFAULT_MODEL_SEED,
            num_labels: DEFAULT_NUM_LABELS,
            head_seed: 0,
            dumps_dir: None,
            corpus_dir: None,
            gold: None,
            vectors: None,
            out_dir: PathBuf::from("."),
        }
    }
}

pub const KEYS: [&str; 14] = [
    "p",
    "sample_size",
    "seeds",
    "k",
    "objective",
    "corpus_tag",
    "model_seed",
    "num_labels",
    "head_seed",
    "dumps_dir",
    "corpus_dir",
    "gold",
    "vectors",
    "out_dir",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), value: value.into(), reason: e.to_string() })
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, text: raw.to_string() });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = || Some(PathBuf::from(value));
        match key {
            "p" => self.p = parse(key, value)?,
            "sample_size" => self.sample_size = parse(key, value)?,
            "seeds" => self.seeds = value.split(',').map(|s| parse::<i32>(key, s.trim())).collect::<Result<_, _>>()?,
            "k" => self.k = parse(key, value)?,
            "objective" => self.objective = parse(key, value)?,
            "corpus_tag" => self.corpus_tag = parse(key, value)?,
            "model_seed" => self.model_seed = parse(key, value)?,
            "num_labels" => self.num_labels = parse(key, value)?,
            "head_seed" => self.head_seed = parse(key, value)?,
            "dumps_dir" => self.dumps_dir = path(),
            "corpus_dir" => self.corpus_dir = path(),
            "gold" => self.gold = path(),
            "vectors" => self.vectors = path(),
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Defaults, then `file` contents, then `overrides`, then validation.
    pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(text) = file {
            for (k, v) in parse_pairs(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::Value { key: key.into(), value, reason: reason.into() })
        };
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad("p", self.p.to_string(), "must lie in (0, 1]");
        }
        if self.sample_size == 0 {
            return bad("sample_size", "0".into(), "must be positive");
        }
        if self.k == 0 {
            return bad("k", "0".into(), "must be positive");
        }
        if self.num_labels < 2 {
            return bad("num_labels", self.num_labels.to_string(), "need at least 2");
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.is_empty() || s.len() != self.seeds.len() {
            return bad("seeds", self.seeds_str(), "must be a nonempty list of distinct integers");
        }
        Ok(())
    }

    fn seeds_str(&self) -> String {
        self.seeds.iter().map(i32::to_string).collect::<Vec<_>>().join(",")
    }

    /// Resolved protocol parameters as `(key, value)`, in [`KEYS`] order.
    /// Paths are left out so digests do not depend on where files live.
    pub fn protocol_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("p", self.p.to_string()),
            ("sample_size", self.sample_size.to_string()),
            ("seeds", self.seeds_str()),
            ("k", self.k.to_string()),
            ("objective", self.objective.as_str().to_string()),
            ("corpus_tag", self.corpus_tag.as_str().to_string()),
            ("model_seed", self.model_seed.to_string()),
            ("num_labels", self.num_labels.to_string()),
            ("head_seed", self.head_seed.to_string()),
        ]
    }

    pub fn digest(&self) -> u64 {
        let text: String = self.protocol_pairs().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        fnv1a64(text.as_bytes())
    }

    /// `# key=value` lines for output headers, ending with the config digest.
    pub fn header_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.protocol_pairs().into_iter().map(|(k, v)| format!("# {k}={v}")).collect();
        out.push(format!("# config_digest={:016x}", self.digest()));
        out
    }
}
