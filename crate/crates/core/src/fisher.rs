//! Diagonal empirical Fisher information.
//!
//! For each parameter `i`, `f[i] = (1/|D|) Σ_j (∂ log p(y_j | x_j; θ) / ∂θ_i)²`.
//! Gradients must be per-example: squaring happens before averaging, so a
//! batch-mean gradient squared is *not* a valid input.
//!
//! Sums are kept in f64 and narrowed to f32 only in [`FisherAccumulator::finalize`].

use std::io::Read;

use thiserror::Error;

use crate::lang::RunMeta;
use crate::tensorstore::{DumpFlags, FisherDump, FormatError, GradStreamHeader, GradStreamReader, LayoutManifest};

#[derive(Debug, Error)]
pub enum FisherError {
    #[error("gradient has {found} entries but the layout has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite gradient entry at index {index}")]
    NonFinite { index: usize },
    #[error("no examples absorbed")]
    Empty,
    #[error("Fisher value at index {index} overflows f32 storage")]
    Overflow { index: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Running sum of squared per-example gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherAccumulator {
    manifest: LayoutManifest,
    sum_sq: Vec<f64>,
    n: u64,
}

impl FisherAccumulator {
    pub fn new(manifest: LayoutManifest) -> Self {
        let len = manifest.len();
        Self { manifest, sum_sq: vec![0.0; len], n: 0 }
    }

    pub fn manifest(&self) -> &LayoutManifest {
        &self.manifest
    }

    pub fn sum_sq(&self) -> &[f64] {
        &self.sum_sq
    }

    /// Number of examples absorbed so far.
    pub fn count(&self) -> u64 {
        self.n
    }

    /// Adds one example's squared gradient. The accumulator is untouched on error.
    pub fn absorb(&mut self, grad: &[f64]) -> Result<(), FisherError> {
        if grad.len() != self.sum_sq.len() {
            return Err(FisherError::LengthMismatch { expected: self.sum_sq.len(), found: grad.len() });
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(FisherError::NonFinite { index });
        }
        for (s, g) in self.sum_sq.iter_mut().zip(grad) {
            *s += g * g;
        }
        self.n += 1;
        Ok(())
    }

    /// `sum_sq / n`, narrowed to f32.
    pub fn finalize(&self, meta: RunMeta, flags: DumpFlags) -> Result<FisherDump, FisherError> {
        if self.n == 0 {
            return Err(FisherError::Empty);
        }
        let n = self.n as f64;
        let mut values = Vec::with_capacity(self.sum_sq.len());
        for (index, s) in self.sum_sq.iter().enumerate() {
            let v = (s / n) as f32;
            if !v.is_finite() {
                return Err(FisherError::Overflow { index });
            }
            values.push(v);
        }
        Ok(FisherDump { manifest: self.manifest.clone(), values, example_count: self.n, meta, flags })
    }

    /// Element-wise sum of two shards over the same layout.
    pub fn merge(mut self, other: FisherAccumulator) -> Result<Self, FisherError> {
        self.manifest.ensure_same_layout(other.manifest.layout_hash())?;
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.n += other.n;
        Ok(self)
    }

    /// Merges shards in a fixed pairwise tree: `(s0+s1) + (s2+s3)`, then the
    /// results pairwise again, and so on. The result depends only on shard
    /// order, never on scheduling.
    pub fn merge_tree(mut shards: Vec<FisherAccumulator>) -> Result<Option<Self>, FisherError> {
        if let Some(first) = shards.first() {
            let hash = first.manifest.layout_hash();
            for s in &shards[1..] {
                first.manifest.ensure_same_layout(s.manifest.layout_hash())?;
                debug_assert_eq!(s.manifest.layout_hash(), hash);
            }
        }
        while shards.len() > 1 {
            let mut next = Vec::with_capacity(shards.len().div_ceil(2));
            let mut it = shards.into_iter();
            while let Some(a) = it.next() {
                match it.next() {
                    Some(b) => next.push(a.merge(b)?),
                    None => next.push(a),
                }
            }
            shards = next;
        }
        Ok(shards.pop())
    }

    /// Absorbs every record of a per-example gradient stream.
    pub fn from_stream<R: Read>(source: R) -> Result<(Self, GradStreamHeader), FisherError> {
        let mut reader = GradStreamReader::open(source)?;
        let header = reader.header().clone();
        let mut acc = Self::new(header.manifest.clone());
        while let Some(g) = reader.next_record()? {
            acc.absorb(&g)?;
        }
        Ok((acc, header))
    }
}
