use std::io::{Read, Write};

use super::wire::{WireReader, WireWriter};
use super::{FormatError, FORMAT_VERSION};
use crate::bitset::{words_for, BitSet};
use crate::lang::RunMeta;

pub const MASK_MAGIC: [u8; 4] = *b"FMSK";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MaskFlags(pub u16);

impl MaskFlags {
    /// Source dump was all zeros; the mask is the lowest-index `k` parameters.
    pub const DEGENERATE: u16 = 1 << 0;

    pub fn contains(self, bit: u16) -> bool {
        self.0 & bit == bit
    }

    pub fn with(self, bit: u16) -> Self {
        Self(self.0 | bit)
    }
}

/// `ceil(p · n)`, treating products within a few ulps of an integer as that
/// integer so that e.g. `0.15 · 100` selects 15 rather than 16.
pub fn ceil_fraction(p: f64, n: u64) -> u64 {
    let x = p * n as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) { r } else { x.ceil() };
    let k = (k as u64).min(n);
    if p > 0.0 && n > 0 {
        k.max(1)
    } else {
        k
    }
}

/// A binarized sub-network over a manifest's parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFile {
    pub manifest_hash: u64,
    pub p: f64,
    pub k_selected: u64,
    pub bits: BitSet,
    pub meta: RunMeta,
    pub flags: MaskFlags,
}

impl MaskFile {
    pub fn validate(&self) -> Result<(), FormatError> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(FormatError::Validation(format!("p = {} is outside (0, 1]", self.p)));
        }
        let n = self.bits.len() as u64;
        let expected = ceil_fraction(self.p, n);
        if self.k_selected != expected {
            return Err(FormatError::Validation(format!("k_selected {} != ceil(p·N) = {expected}", self.k_selected)));
        }
        let pop = self.bits.count_ones();
        if pop != self.k_selected {
            return Err(FormatError::Validation(format!("popcount {pop} != k_selected {}", self.k_selected)));
        }
        Ok(())
    }
}

/// Writes the `FMSK` format:
///
/// ```text
/// "FMSK" | u16 version | u16 flags | f64 p | u64 k_selected | u64 layout_hash
///        | language[8] | u8 objective | u8 corpus_tag | i32 seed
///        | u64 n_bits | u64 words (ceil(n_bits / 64), little-endian, zero padding)
/// ```
pub fn write_mask<W: Write>(mask: &MaskFile, sink: W) -> Result<u64, FormatError> {
    mask.validate()?;
    let mut w = WireWriter::new(sink);
    w.bytes(&MASK_MAGIC)?;
    w.u16(FORMAT_VERSION)?;
    w.u16(mask.flags.0)?;
    w.f64(mask.p)?;
    w.u64(mask.k_selected)?;
    w.u64(mask.manifest_hash)?;
    w.run_meta(&mask.meta)?;
    w.u64(mask.bits.len() as u64)?;
    let mut buf = Vec::with_capacity(8 * 4096);
    for chunk in mask.bits.words().chunks(4096) {
        buf.clear();
        for word in chunk {
            buf.extend_from_slice(&word.to_le_bytes());
        }
        w.bytes(&buf)?;
    }
    w.flush()?;
    Ok(w.offset())
}

pub fn read_mask<R: Read>(source: R) -> Result<MaskFile, FormatError> {
    let mut r = WireReader::new(source);
    r.magic(MASK_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let flags = MaskFlags(r.u16("flags")?);
    let p_at = r.offset();
    let p = r.f64("p")?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(FormatError::invalid(p_at, format!("p = {p} is outside (0, 1]")));
    }
    let k_at = r.offset();
    let k_selected = r.u64("k_selected")?;
    let manifest_hash = r.u64("layout hash")?;
    let meta = r.run_meta()?;
    let n_at = r.offset();
    let n_bits = r.u64("bit count")?;
    let n = usize::try_from(n_bits)
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| FormatError::invalid(n_at, format!("bit count {n_bits} out of range")))?;
    if k_selected != ceil_fraction(p, n_bits) {
        return Err(FormatError::invalid(
            k_at,
            format!("k_selected {k_selected} != ceil(p·N) = {}", ceil_fraction(p, n_bits)),
        ));
    }
    let nwords = words_for(n);
    let words_at = r.offset();
    let mut words = Vec::with_capacity(nwords.min(1 << 24));
    let mut buf = vec![0u8; 8 * 4096];
    let mut remaining = nwords;
    while remaining > 0 {
        let take = remaining.min(4096);
        let bytes = &mut buf[..8 * take];
        let chunk_at = r.offset();
        let got = r.fill_partial(bytes)?;
        if got < bytes.len() {
            return Err(FormatError::Truncated {
                offset: words_at,
                what: "bitset",
                expected: 8 * nwords as u64,
                actual: chunk_at - words_at + got as u64,
            });
        }
        words.extend(bytes.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())));
        remaining -= take;
    }
    let mut trailing = [0u8; 1];
    if r.fill_partial(&mut trailing)? != 0 {
        return Err(FormatError::invalid(r.offset() - 1, "trailing bytes after bitset"));
    }
    let last_at = words_at + 8 * (nwords as u64 - 1);
    let bits = BitSet::from_words(words, n).ok_or_else(|| FormatError::invalid(last_at, "nonzero padding bits"))?;
    let pop = bits.count_ones();
    if pop != k_selected {
        return Err(FormatError::invalid(k_at, format!("popcount {pop} != k_selected {k_selected}")));
    }
    Ok(MaskFile { manifest_hash, p, k_selected, bits, meta, flags })
}
