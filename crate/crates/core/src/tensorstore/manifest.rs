use std::collections::HashSet;
use std::io::{Read, Write};
use std::ops::Range;

use super::wire::{WireReader, WireWriter};
use super::FormatError;
use crate::hash::Fnv1a64;

/// Upper bounds that keep a corrupted header from requesting absurd allocations.
const MAX_TENSORS: u32 = 1 << 20;
const MAX_NDIM: u32 = 16;
const MAX_GROUPS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<u64>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: impl Into<Vec<u64>>) -> Self {
        Self { name: name.into(), shape: shape.into() }
    }

    pub fn numel(&self) -> u64 {
        self.shape.iter().product()
    }
}

/// The parameter index space θ of a model: an ordered table of named tensors,
/// flattened row-major and concatenated in table order.
///
/// Embedding and task-specific layers are expected to be left out of the
/// table and named in `excluded_groups`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutManifest {
    model_id: String,
    tensors: Vec<TensorSpec>,
    excluded_groups: Vec<String>,
    total_params: u64,
    layout_hash: u64,
}

/// FNV-1a over a canonical serialization of `(model_id, ordered tensors)`:
///
/// `"LAYOUT1\0" | u32 len | model_id | u32 count | { u32 len | name | u32 ndim | u64 dims.. }*`
///
/// `excluded_groups` is descriptive and not part of the digest.
pub fn manifest_hash(model_id: &str, tensors: &[TensorSpec]) -> u64 {
    let mut h = Fnv1a64::new();
    h.update(b"LAYOUT1\0");
    h.update(&(model_id.len() as u32).to_le_bytes());
    h.update(model_id.as_bytes());
    h.update(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        h.update(&(t.name.len() as u32).to_le_bytes());
        h.update(t.name.as_bytes());
        h.update(&(t.shape.len() as u32).to_le_bytes());
        for d in &t.shape {
            h.update(&d.to_le_bytes());
        }
    }
    h.finish()
}

impl LayoutManifest {
    pub fn new(
        model_id: impl Into<String>,
        tensors: Vec<TensorSpec>,
        excluded_groups: Vec<String>,
    ) -> Result<Self, FormatError> {
        let model_id = model_id.into();
        if tensors.is_empty() {
            return Err(FormatError::Validation("manifest has no tensors".into()));
        }
        let mut seen = HashSet::new();
        let mut total: u64 = 0;
        for t in &tensors {
            if t.name.is_empty() {
                return Err(FormatError::Validation("tensor with empty name".into()));
            }
            if !seen.insert(t.name.as_str()) {
                return Err(FormatError::Validation(format!("duplicate tensor name {:?}", t.name)));
            }
            if t.shape.is_empty() || t.shape.contains(&0) {
                return Err(FormatError::Validation(format!(
                    "tensor {:?} has non-positive shape {:?}",
                    t.name, t.shape
                )));
            }
            let n = t
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|n| total.checked_add(n))
                .ok_or_else(|| FormatError::Validation("parameter count overflows u64".into()))?;
            total = n;
        }
        if usize::try_from(total).is_err() {
            return Err(FormatError::Validation("parameter count exceeds address space".into()));
        }
        let layout_hash = manifest_hash(&model_id, &tensors);
        Ok(Self { model_id, tensors, excluded_groups, total_params: total, layout_hash })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }
    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }
    pub fn excluded_groups(&self) -> &[String] {
        &self.excluded_groups
    }
    pub fn total_params(&self) -> u64 {
        self.total_params
    }
    /// `total_params` as an in-memory length.
    pub fn len(&self) -> usize {
        self.total_params as usize
    }
    pub fn is_empty(&self) -> bool {
        self.total_params == 0
    }
    pub fn layout_hash(&self) -> u64 {
        self.layout_hash
    }

    /// Flat index range of a named tensor.
    pub fn range_of(&self, name: &str) -> Option<Range<usize>> {
        let mut start = 0usize;
        for t in &self.tensors {
            let n = t.numel() as usize;
            if t.name == name {
                return Some(start..start + n);
            }
            start += n;
        }
        None
    }

    pub fn ensure_same_layout(&self, other_hash: u64) -> Result<(), FormatError> {
        if self.layout_hash != other_hash {
            return Err(FormatError::LayoutMismatch { expected: self.layout_hash, found: other_hash });
        }
        Ok(())
    }

    /// `str model_id | u32 count | tensors.. | u32 count | str groups..`
    pub(crate) fn write_block<W: Write>(&self, w: &mut WireWriter<W>) -> Result<(), FormatError> {
        w.string(&self.model_id)?;
        w.u32(self.tensors.len() as u32)?;
        for t in &self.tensors {
            w.string(&t.name)?;
            w.u32(t.shape.len() as u32)?;
            for &d in &t.shape {
                w.u64(d)?;
            }
        }
        w.u32(self.excluded_groups.len() as u32)?;
        for g in &self.excluded_groups {
            w.string(g)?;
        }
        Ok(())
    }

    pub(crate) fn read_block<R: Read>(r: &mut WireReader<R>) -> Result<Self, FormatError> {
        let start = r.offset();
        let model_id = r.string("model id")?;
        let at = r.offset();
        let count = r.u32("tensor count")?;
        if count == 0 || count > MAX_TENSORS {
            return Err(FormatError::invalid(at, format!("tensor count {count} out of range")));
        }
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let at = r.offset();
            let ndim = r.u32("tensor ndim")?;
            if ndim == 0 || ndim > MAX_NDIM {
                return Err(FormatError::invalid(at, format!("ndim {ndim} out of range")));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            for _ in 0..ndim {
                shape.push(r.u64("tensor dim")?);
            }
            tensors.push(TensorSpec { name, shape });
        }
        let at = r.offset();
        let ngroups = r.u32("excluded group count")?;
        if ngroups > MAX_GROUPS {
            return Err(FormatError::invalid(at, format!("excluded group count {ngroups} out of range")));
        }
        let mut groups = Vec::with_capacity(ngroups as usize);
        for _ in 0..ngroups {
            groups.push(r.string("excluded group")?);
        }
        Self::new(model_id, tensors, groups).map_err(|e| match e {
            FormatError::Validation(reason) => FormatError::Invalid { offset: start, reason },
            other => other,
        })
    }
}
