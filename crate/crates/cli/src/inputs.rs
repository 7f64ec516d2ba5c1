//! File discovery, loading, and provenance headers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use langsim_core::hash::Fnv1a64;
use langsim_core::tensorstore::{read_dump, read_matrix_csv};
use langsim_core::{FisherDump, LanguageCode, RunConfig, SimilarityMatrix, TransferScoreTable};
use thiserror::Error;

/// Errors whose exit code is fixed by the CLI contract.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Validation(String),
}

pub fn validation(msg: impl Into<String>) -> anyhow::Error {
    CliError::Validation(msg.into()).into()
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()).into());
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()).into());
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CliError::MissingInput(dir.to_path_buf()).into());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    out.sort();
    Ok(out)
}

/// Language code from a file stem such as `de.txt`.
pub fn code_from_stem(path: &Path) -> Result<LanguageCode> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    LanguageCode::new(stem).map_err(|e| validation(format!("{}: {e}", path.display())))
}

/// Whitespace-separated token ids, one sentence per line.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(str::parse::<u32>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(ids);
    }
    if out.is_empty() {
        return Err(validation(format!("{}: corpus is empty", path.display())));
    }
    Ok(out)
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

pub fn load_dump(path: &Path) -> Result<FisherDump> {
    read_dump(open(path)?).with_context(|| format!("reading dump {}", path.display()))
}

pub fn load_matrix(path: &Path) -> Result<SimilarityMatrix> {
    read_matrix_csv(open(path)?).with_context(|| format!("reading matrix {}", path.display()))
}

pub fn load_gold(path: &Path) -> Result<TransferScoreTable> {
    TransferScoreTable::read_csv(open(path)?).with_context(|| format!("reading gold table {}", path.display()))
}

/// Digest of input files by name and content, independent of their directory.
pub fn input_digest(paths: &[PathBuf]) -> Result<u64> {
    let mut sorted: Vec<&PathBuf> = paths.iter().collect();
    sorted.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    let mut h = Fnv1a64::new();
    for p in sorted {
        h.update(p.file_name().and_then(|n| n.to_str()).unwrap_or_default().as_bytes());
        h.update(&[0]);
        h.update(&fs::read(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(h.finish())
}

/// Provenance for a command run: resolved config plus input digest.
pub struct Provenance {
    pub command: String,
    pub lines: Vec<String>,
    pub pairs: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str, cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Self> {
        let mut pairs: Vec<(String, String)> =
            cfg.protocol_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        pairs.push(("config_digest".into(), format!("{:016x}", cfg.digest())));
        pairs.push(("input_digest".into(), format!("{:016x}", input_digest(inputs)?)));
        let mut lines = vec![format!("# tool=langsim {} command={command}", env!("CARGO_PKG_VERSION"))];
        lines.extend(pairs.iter().map(|(k, v)| format!("# {k}={v}")));
        Ok(Self { command: command.to_string(), lines, pairs })
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for l in &self.lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    }

    pub fn print(&self) {
        let mut out = std::io::stdout().lock();
        let _ = self.write(&mut out);
    }
}
