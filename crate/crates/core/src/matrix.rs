//! Language × language score matrices produced by every method.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::lang::LanguageCode;

/// Which predictor produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Jaccard overlap of Fisher sub-networks.
    Xsns,
    /// Cosine of typological language vectors.
    L2v,
    /// Jensen-Shannon divergence of subword unigram distributions.
    Lex,
    /// Subword-evenness angle of the candidate source language.
    Sue,
    /// Cosine of mean-pooled sentence embeddings.
    Emb,
}

/// Direction in which a score indicates a better transfer source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    HigherBetter,
    LowerBetter,
}

impl Polarity {
    /// Maps a raw score onto a scale where larger is always better.
    pub fn orient(self, score: f64) -> f64 {
        match self {
            Polarity::HigherBetter => score,
            Polarity::LowerBetter => -score,
        }
    }
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Xsns, Method::L2v, Method::Lex, Method::Sue, Method::Emb];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Xsns => "xsns",
            Method::L2v => "l2v",
            Method::Lex => "lex",
            Method::Sue => "sue",
            Method::Emb => "emb",
        }
    }

    /// LEX stores divergences and SuE stores angles; for both, lower is better.
    pub fn polarity(self) -> Polarity {
        match self {
            Method::Lex | Method::Sue => Polarity::LowerBetter,
            Method::Xsns | Method::L2v | Method::Emb => Polarity::HigherBetter,
        }
    }

    pub fn is_symmetric(self) -> bool {
        self != Method::Sue
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Square score matrix indexed `[target][candidate source]`.
///
/// Symmetric methods store the same value both ways. SuE is per-source, so
/// every row holds the candidates' own scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub languages: Vec<LanguageCode>,
    /// Row-major, `languages.len()²` entries.
    pub values: Vec<f64>,
    pub method: Method,
    pub seeds_averaged: u32,
    /// Free-form provenance (resolved config, input digests), written as header comments.
    pub attributes: BTreeMap<String, String>,
}

impl SimilarityMatrix {
    pub fn new(languages: Vec<LanguageCode>, values: Vec<f64>, method: Method, seeds_averaged: u32) -> Self {
        assert_eq!(values.len(), languages.len() * languages.len(), "matrix must be square");
        Self { languages, values, method, seeds_averaged, attributes: BTreeMap::new() }
    }

    pub fn size(&self) -> usize {
        self.languages.len()
    }

    pub fn index_of(&self, code: &LanguageCode) -> Option<usize> {
        self.languages.iter().position(|l| l == code)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.size() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let n = self.size();
        self.values[row * n + col] = v;
    }

    /// Score of `source` as a candidate for `target`.
    pub fn score(&self, target: &LanguageCode, source: &LanguageCode) -> Option<f64> {
        Some(self.get(self.index_of(target)?, self.index_of(source)?))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Applies `f` to every entry, keeping provenance.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }
}
