//! Language codes and the run metadata shared by dumps and masks.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Maximum encoded length of a language code (the binary formats reserve 8 bytes).
pub const MAX_CODE_LEN: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodeError {
    #[error("language code is empty")]
    Empty,
    #[error("language code {0:?} is longer than {MAX_CODE_LEN} bytes")]
    TooLong(String),
    #[error("language code {0:?} must be printable ASCII without separators")]
    BadChar(String),
}

/// A short ASCII language identifier such as `en` or `zh-tw`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: impl Into<String>) -> Result<Self, CodeError> {
        let code = code.into();
        if code.is_empty() {
            return Err(CodeError::Empty);
        }
        if code.len() > MAX_CODE_LEN {
            return Err(CodeError::TooLong(code));
        }
        let ok = code.bytes().all(|b| b.is_ascii_graphic() && b != b',' && b != b'#' && b != b'=');
        if !ok {
            return Err(CodeError::BadChar(code));
        }
        Ok(Self(code))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Zero-padded 8-byte encoding.
    pub fn to_padded(&self) -> [u8; MAX_CODE_LEN] {
        let mut out = [0u8; MAX_CODE_LEN];
        out[..self.0.len()].copy_from_slice(self.0.as_bytes());
        out
    }

    pub fn from_padded(bytes: &[u8; MAX_CODE_LEN]) -> Result<Self, CodeError> {
        let end = bytes.iter().position(|&b| b == 0).unwrap_or(MAX_CODE_LEN);
        if bytes[end..].iter().any(|&b| b != 0) {
            return Err(CodeError::BadChar(String::from_utf8_lossy(bytes).into_owned()));
        }
        let s = std::str::from_utf8(&bytes[..end])
            .map_err(|_| CodeError::BadChar(String::from_utf8_lossy(bytes).into_owned()))?;
        Self::new(s)
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for LanguageCode {
    type Err = CodeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl AsRef<str> for LanguageCode {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Output distribution whose log-likelihood gradients feed the Fisher estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Masked language modeling with the pre-training head.
    LmMasked,
    /// A frozen randomly initialised classifier with cross-entropy.
    TaskHeadRandom,
}

impl Objective {
    pub fn to_u8(self) -> u8 {
        match self {
            Objective::LmMasked => 0,
            Objective::TaskHeadRandom => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Objective::LmMasked),
            1 => Some(Objective::TaskHeadRandom),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::LmMasked => "lm_masked",
            Objective::TaskHeadRandom => "task_head_random",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lm_masked" | "lm" => Ok(Objective::LmMasked),
            "task_head_random" | "task" => Ok(Objective::TaskHeadRandom),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

/// Which corpus the Fisher sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorpusTag {
    TaskCorpus,
    GeneralCorpus,
}

impl CorpusTag {
    pub fn to_u8(self) -> u8 {
        match self {
            CorpusTag::TaskCorpus => 0,
            CorpusTag::GeneralCorpus => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CorpusTag::TaskCorpus),
            1 => Some(CorpusTag::GeneralCorpus),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusTag::TaskCorpus => "task_corpus",
            CorpusTag::GeneralCorpus => "general_corpus",
        }
    }
}

impl fmt::Display for CorpusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task_corpus" | "task" => Ok(CorpusTag::TaskCorpus),
            "general_corpus" | "general" | "wiki" => Ok(CorpusTag::GeneralCorpus),
            other => Err(format!("unknown corpus tag {other:?}")),
        }
    }
}

/// Identifies one extraction run: which language, which configuration, which seed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RunMeta {
    pub language: LanguageCode,
    pub objective: Objective,
    pub corpus_tag: CorpusTag,
    pub seed: i32,
}

impl RunMeta {
    pub fn new(language: LanguageCode, objective: Objective, corpus_tag: CorpusTag, seed: i32) -> Self {
        Self { language, objective, corpus_tag, seed }
    }
}
