//! Per-example gradient streams: one record of `total_params` f32 values per
//! example, following a header that matches the dump header without
//! `example_count`.

use std::io::{Read, Write};

use super::dump::{read_f32_values, DumpFlags};
use super::manifest::LayoutManifest;
use super::wire::{WireReader, WireWriter};
use super::{FormatError, FORMAT_VERSION};
use crate::lang::RunMeta;

pub const GRAD_STREAM_MAGIC: [u8; 4] = *b"FGRS";

#[derive(Debug, Clone, PartialEq)]
pub struct GradStreamHeader {
    pub manifest: LayoutManifest,
    pub meta: RunMeta,
    pub flags: DumpFlags,
}

/// ```text
/// "FGRS" | u16 version | u16 flags | language[8] | u8 objective | u8 corpus_tag
///        | i32 seed | u64 layout_hash | manifest block | { f32 × total_params }*
/// ```
pub struct GradStreamWriter<W: Write> {
    w: WireWriter<W>,
    n: usize,
    records: u64,
    scratch: Vec<f32>,
}

impl<W: Write> GradStreamWriter<W> {
    pub fn new(sink: W, header: &GradStreamHeader) -> Result<Self, FormatError> {
        let mut w = WireWriter::new(sink);
        w.bytes(&GRAD_STREAM_MAGIC)?;
        w.u16(FORMAT_VERSION)?;
        w.u16(header.flags.0)?;
        w.run_meta(&header.meta)?;
        w.u64(header.manifest.layout_hash())?;
        header.manifest.write_block(&mut w)?;
        Ok(Self { w, n: header.manifest.len(), records: 0, scratch: Vec::new() })
    }

    /// Appends one example's gradient, narrowed to f32.
    pub fn write_record(&mut self, grad: &[f64]) -> Result<(), FormatError> {
        if grad.len() != self.n {
            return Err(FormatError::Validation(format!("gradient has {} entries, layout has {}", grad.len(), self.n)));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(FormatError::Validation(format!("non-finite gradient at index {i}")));
        }
        self.scratch.clear();
        self.scratch.extend(grad.iter().map(|&g| g as f32));
        self.w.f32_slice(&self.scratch)?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> Result<u64, FormatError> {
        self.w.flush()?;
        Ok(self.w.offset())
    }
}

pub struct GradStreamReader<R: Read> {
    r: WireReader<R>,
    header: GradStreamHeader,
}

impl<R: Read> GradStreamReader<R> {
    pub fn open(source: R) -> Result<Self, FormatError> {
        let mut r = WireReader::new(source);
        r.magic(GRAD_STREAM_MAGIC)?;
        r.version(FORMAT_VERSION)?;
        let flags = DumpFlags(r.u16("flags")?);
        let meta = r.run_meta()?;
        let hash_at = r.offset();
        let layout_hash = r.u64("layout hash")?;
        let manifest = LayoutManifest::read_block(&mut r)?;
        if manifest.layout_hash() != layout_hash {
            return Err(FormatError::invalid(hash_at, "header layout hash does not match manifest"));
        }
        Ok(Self { r, header: GradStreamHeader { manifest, meta, flags } })
    }

    pub fn header(&self) -> &GradStreamHeader {
        &self.header
    }

    /// Next record widened to f64, or `None` at a clean end of stream.
    pub fn next_record(&mut self) -> Result<Option<Vec<f64>>, FormatError> {
        let mut first = [0u8; 4];
        let at = self.r.offset();
        let got = self.r.fill_partial(&mut first)?;
        if got == 0 {
            return Ok(None);
        }
        let n = self.header.manifest.len();
        if got < 4 {
            return Err(FormatError::Truncated {
                offset: at,
                what: "gradient record",
                expected: 4 * n as u64,
                actual: got as u64,
            });
        }
        let v0 = f32::from_le_bytes(first);
        if !v0.is_finite() {
            return Err(FormatError::invalid(at, format!("gradient entry 0 is {v0}")));
        }
        let rest = read_f32_values(&mut self.r, n - 1, "gradient record", false).map_err(|e| match e {
            FormatError::Truncated { what, expected, actual, .. } => {
                FormatError::Truncated { offset: at, what, expected: expected + 4, actual: actual + 4 }
            }
            other => other,
        })?;
        let mut out = Vec::with_capacity(n);
        out.push(f64::from(v0));
        out.extend(rest.into_iter().map(f64::from));
        Ok(Some(out))
    }
}
