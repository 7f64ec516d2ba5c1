//! Top-p binarization of Fisher dumps and Jaccard overlap of the resulting
//! sub-networks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::bitset::BitSet;
use crate::lang::LanguageCode;
use crate::matrix::{Method, SimilarityMatrix};
use crate::tensorstore::{ceil_fraction, FisherDump, FormatError, MaskFile, MaskFlags};

/// Default sub-network ratio.
pub const DEFAULT_P: f64 = 0.15;

#[derive(Debug, Error)]
pub enum SubnetError {
    #[error("p = {0} is outside (0, 1]")]
    POutOfRange(f64),
    #[error("layout mismatch: {a:016x} vs {b:016x}")]
    LayoutMismatch { a: u64, b: u64 },
    #[error("masks built with different p: {a} vs {b}")]
    PMismatch { a: f64, b: f64 },
    #[error("language {language} has seeds {found:?}, expected {expected:?}")]
    RaggedSeeds { language: String, expected: Vec<i32>, found: Vec<i32> },
    #[error("duplicate mask for language {language}, seed {seed}")]
    DuplicateRun { language: String, seed: i32 },
    #[error("no sub-networks given")]
    Empty,
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// A language's binary sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNetwork {
    pub mask: MaskFile,
}

impl SubNetwork {
    pub fn language(&self) -> &LanguageCode {
        &self.mask.meta.language
    }

    pub fn seed(&self) -> i32 {
        self.mask.meta.seed
    }

    /// True when the source dump was all zeros.
    pub fn is_degenerate(&self) -> bool {
        self.mask.flags.contains(MaskFlags::DEGENERATE)
    }
}

/// Selects exactly `k = ceil(p·N)` parameters: every value strictly above
/// the k-th largest value, then threshold-equal values in ascending index
/// order until `k` are set.
pub fn build_mask(dump: &FisherDump, p: f64) -> Result<SubNetwork, SubnetError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SubnetError::POutOfRange(p));
    }
    dump.validate()?;
    let values = &dump.values;
    let n = values.len();
    let k = ceil_fraction(p, n as u64) as usize;

    let mut bits = BitSet::new(n);
    let mut flags = MaskFlags::default();
    if values.iter().all(|&v| v == 0.0) {
        log::warn!("all-zero Fisher dump for {}; selecting the first {k} parameters", dump.meta.language);
        flags = flags.with(MaskFlags::DEGENERATE);
    }

    if k == n {
        (0..n).for_each(|i| bits.set(i));
    } else {
        let threshold = kth_largest(values, k);
        let mut selected = 0usize;
        for (i, &v) in values.iter().enumerate() {
            if v > threshold {
                bits.set(i);
                selected += 1;
            }
        }
        for (i, &v) in values.iter().enumerate() {
            if selected == k {
                break;
            }
            if v == threshold {
                bits.set(i);
                selected += 1;
            }
        }
        debug_assert_eq!(selected, k);
    }

    Ok(SubNetwork {
        mask: MaskFile {
            manifest_hash: dump.manifest.layout_hash(),
            p,
            k_selected: k as u64,
            bits,
            meta: dump.meta.clone(),
            flags,
        },
    })
}

/// The k-th largest value (1-based) via expected-linear-time selection.
fn kth_largest(values: &[f32], k: usize) -> f32 {
    debug_assert!(k >= 1 && k <= values.len());
    let mut scratch = values.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks count as identical.
pub fn jaccard(a: &SubNetwork, b: &SubNetwork) -> Result<f64, SubnetError> {
    check_compatible(&a.mask, &b.mask)?;
    let (inter, union) = a.mask.bits.intersection_union_counts(&b.mask.bits);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

fn check_compatible(a: &MaskFile, b: &MaskFile) -> Result<(), SubnetError> {
    if a.manifest_hash != b.manifest_hash || a.bits.len() != b.bits.len() {
        return Err(SubnetError::LayoutMismatch { a: a.manifest_hash, b: b.manifest_hash });
    }
    if a.p != b.p {
        return Err(SubnetError::PMismatch { a: a.p, b: b.p });
    }
    Ok(())
}

/// Seed-averaged Jaccard matrix. Every language must have the same seed set;
/// entry `(s, t)` is the mean over seeds of `jaccard(mask_s^seed, mask_t^seed)`.
/// Languages are ordered by code.
pub fn similarity_matrix(subnets: &[SubNetwork]) -> Result<SimilarityMatrix, SubnetError> {
    let first = subnets.first().ok_or(SubnetError::Empty)?;
    let mut by_lang: BTreeMap<&LanguageCode, BTreeMap<i32, &SubNetwork>> = BTreeMap::new();
    for s in subnets {
        check_compatible(&first.mask, &s.mask)?;
        if by_lang.entry(s.language()).or_default().insert(s.seed(), s).is_some() {
            return Err(SubnetError::DuplicateRun { language: s.language().to_string(), seed: s.seed() });
        }
    }
    let expected: Vec<i32> = by_lang.values().next().unwrap().keys().copied().collect();
    for (lang, seeds) in &by_lang {
        let found: Vec<i32> = seeds.keys().copied().collect();
        if found != expected {
            return Err(SubnetError::RaggedSeeds { language: lang.to_string(), expected, found });
        }
    }

    let languages: Vec<LanguageCode> = by_lang.keys().map(|&l| l.clone()).collect();
    let runs: Vec<Vec<&SubNetwork>> = by_lang.values().map(|m| m.values().copied().collect()).collect();
    let n = languages.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let scores = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut total = 0.0;
            for (a, b) in runs[i].iter().zip(&runs[j]) {
                total += jaccard(a, b)?;
            }
            Ok(total / expected.len() as f64)
        })
        .collect::<Result<Vec<f64>, SubnetError>>()?;

    let mut m = SimilarityMatrix::new(languages, vec![0.0; n * n], Method::Xsns, expected.len() as u32);
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    for (&(i, j), &s) in pairs.iter().zip(&scores) {
        m.set(i, j, s);
        m.set(j, i, s);
    }
    m.attributes.insert("p".into(), first.mask.p.to_string());
    m.attributes.insert("layout_hash".into(), format!("{:016x}", first.mask.manifest_hash));
    m.attributes.insert("seeds".into(), expected.iter().map(i32::to_string).collect::<Vec<_>>().join(","));
    Ok(m)
}
