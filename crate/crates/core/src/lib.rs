//! Predicting cross-lingual transfer from language-specific sub-networks.
//!
//! The pipeline: per-example log-likelihood gradients of a shared model are
//! squared and averaged into a diagonal Fisher estimate ([`fisher`]), the top
//! `p` fraction of parameters becomes a binary sub-network mask ([`subnet`]),
//! and two languages are scored by the Jaccard overlap of their masks.
//! Candidate source languages are then ranked per target and evaluated
//! against gold transfer scores ([`evalrank`], [`regress`]).
//!
//! [`baselines`] holds the comparison methods, [`refmodel`] a small
//! masked-token model with hand-written backprop used as an in-repo oracle,
//! and [`tensorstore`] the binary interchange formats.

pub mod baselines;
pub mod bitset;
pub mod config;
pub mod evalrank;
pub mod fisher;
pub mod hash;
pub mod lang;
pub mod matrix;
pub mod refmodel;
pub mod regress;
pub mod subnet;
pub mod tensorstore;

pub use bitset::BitSet;
pub use config::RunConfig;
pub use evalrank::{EvalReport, Ranking, TransferScoreTable};
pub use fisher::FisherAccumulator;
pub use lang::{CorpusTag, LanguageCode, Objective, RunMeta};
pub use matrix::{Method, Polarity, SimilarityMatrix};
pub use regress::{FitResult, RegressionDataset};
pub use subnet::SubNetwork;
pub use tensorstore::{FisherDump, FormatError, LayoutManifest, MaskFile, TensorSpec};
