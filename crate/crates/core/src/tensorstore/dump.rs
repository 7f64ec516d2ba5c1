use std::io::{Read, Write};

use super::manifest::LayoutManifest;
use super::wire::{WireReader, WireWriter};
use super::{FormatError, FORMAT_VERSION};
use crate::lang::RunMeta;

pub const DUMP_MAGIC: [u8; 4] = *b"FGRD";

/// Header flag bits of a Fisher dump.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct DumpFlags(pub u16);

impl DumpFlags {
    /// Dropout and other stochastic layers were disabled during extraction.
    pub const STOCHASTIC_DISABLED: u16 = 1 << 0;
    /// Input sequences were truncated by the extractor.
    pub const SEQ_TRUNCATED: u16 = 1 << 1;
    /// Sentences were sampled with replacement because the corpus was too small.
    pub const SAMPLED_WITH_REPLACEMENT: u16 = 1 << 2;

    pub fn contains(self, bit: u16) -> bool {
        self.0 & bit == bit
    }

    pub fn with(self, bit: u16) -> Self {
        Self(self.0 | bit)
    }
}

/// Diagonal empirical Fisher estimate for one (language, configuration, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct FisherDump {
    pub manifest: LayoutManifest,
    pub values: Vec<f32>,
    /// |D|, the number of examples averaged.
    pub example_count: u64,
    pub meta: RunMeta,
    pub flags: DumpFlags,
}

impl FisherDump {
    pub fn validate(&self) -> Result<(), FormatError> {
        if self.values.len() as u64 != self.manifest.total_params() {
            return Err(FormatError::Validation(format!(
                "values has {} entries but the manifest declares {} parameters",
                self.values.len(),
                self.manifest.total_params()
            )));
        }
        if self.example_count == 0 {
            return Err(FormatError::Validation("example_count must be positive".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(FormatError::Validation(format!(
                "value {} at index {i} is not a finite nonnegative number",
                self.values[i]
            )));
        }
        Ok(())
    }
}

/// Writes the `FGRD` format:
///
/// ```text
/// "FGRD" | u16 version | u16 flags | language[8] | u8 objective | u8 corpus_tag
///        | i32 seed | u64 example_count | u64 layout_hash | manifest block | f32 values..
/// ```
///
/// Returns the number of bytes written.
pub fn write_dump<W: Write>(dump: &FisherDump, sink: W) -> Result<u64, FormatError> {
    dump.validate()?;
    let mut w = WireWriter::new(sink);
    w.bytes(&DUMP_MAGIC)?;
    w.u16(FORMAT_VERSION)?;
    w.u16(dump.flags.0)?;
    w.run_meta(&dump.meta)?;
    w.u64(dump.example_count)?;
    w.u64(dump.manifest.layout_hash())?;
    dump.manifest.write_block(&mut w)?;
    w.f32_slice(&dump.values)?;
    w.flush()?;
    Ok(w.offset())
}

pub fn read_dump<R: Read>(source: R) -> Result<FisherDump, FormatError> {
    let mut r = WireReader::new(source);
    r.magic(DUMP_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let flags = DumpFlags(r.u16("flags")?);
    let meta = r.run_meta()?;
    let at = r.offset();
    let example_count = r.u64("example count")?;
    if example_count == 0 {
        return Err(FormatError::invalid(at, "example_count must be positive"));
    }
    let hash_at = r.offset();
    let layout_hash = r.u64("layout hash")?;
    let manifest = LayoutManifest::read_block(&mut r)?;
    if manifest.layout_hash() != layout_hash {
        return Err(FormatError::invalid(
            hash_at,
            format!("header layout hash {layout_hash:016x} does not match manifest {:016x}", manifest.layout_hash()),
        ));
    }
    let values = read_f32_values(&mut r, manifest.len(), "values", true)?;
    let mut trailing = [0u8; 1];
    if r.fill_partial(&mut trailing)? != 0 {
        return Err(FormatError::invalid(r.offset() - 1, "trailing bytes after values"));
    }
    Ok(FisherDump { manifest, values, example_count, meta, flags })
}

/// Reads exactly `n` f32 values, checking finiteness (and sign when `nonneg`).
pub(crate) fn read_f32_values<R: Read>(
    r: &mut WireReader<R>,
    n: usize,
    what: &'static str,
    nonneg: bool,
) -> Result<Vec<f32>, FormatError> {
    const CHUNK: usize = 1 << 14;
    let start = r.offset();
    let mut values = Vec::with_capacity(n.min(1 << 24));
    let mut buf = vec![0u8; 4 * CHUNK];
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(CHUNK);
        let bytes = &mut buf[..4 * take];
        let chunk_start = r.offset();
        let got = r.fill_partial(bytes)?;
        if got < bytes.len() {
            return Err(FormatError::Truncated {
                offset: start,
                what,
                expected: 4 * n as u64,
                actual: chunk_start - start + got as u64,
            });
        }
        for (j, b) in bytes.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !v.is_finite() || (nonneg && v < 0.0) {
                return Err(FormatError::invalid(
                    chunk_start + 4 * j as u64,
                    format!("{what} entry {} is {v}", values.len()),
                ));
            }
            values.push(v);
        }
        remaining -= take;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{CorpusTag, LanguageCode, Objective};
    use crate::tensorstore::TensorSpec;

    fn dump(values: Vec<f32>) -> FisherDump {
        let manifest = LayoutManifest::new("toy", vec![TensorSpec::new("w", [2, 3])], vec![]).unwrap();
        FisherDump {
            manifest,
            values,
            example_count: 4,
            meta: RunMeta::new(LanguageCode::new("en").unwrap(), Objective::LmMasked, CorpusTag::TaskCorpus, 7),
            flags: DumpFlags::default().with(DumpFlags::STOCHASTIC_DISABLED),
        }
    }

    fn header_len(d: &FisherDump) -> u64 {
        // fixed header + manifest block
        let fixed = 4 + 2 + 2 + 8 + 1 + 1 + 4 + 8 + 8;
        let m = &d.manifest;
        let mut block = 4 + m.model_id().len() as u64 + 4;
        for t in m.tensors() {
            block += 4 + t.name.len() as u64 + 4 + 8 * t.shape.len() as u64;
        }
        block += 4;
        fixed + block
    }

    #[test]
    fn size_is_header_plus_values() {
        let d = dump(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut buf = Vec::new();
        let n = write_dump(&d, &mut buf).unwrap();
        assert_eq!(n, buf.len() as u64);
        assert_eq!(n, header_len(&d) + 24);
    }

    #[test]
    fn round_trip() {
        let d = dump(vec![0.0, 1.5, 2.0, 3.25, 4.0, 1e-30]);
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        assert_eq!(read_dump(&buf[..]).unwrap(), d);
    }

    #[test]
    fn wrong_value_count_is_validation_error() {
        let d = dump(vec![1.0; 5]);
        assert!(matches!(write_dump(&d, Vec::new()), Err(FormatError::Validation(_))));
    }

    #[test]
    fn flipped_magic() {
        let d = dump(vec![1.0; 6]);
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        buf[1] ^= 0xff;
        assert!(matches!(read_dump(&buf[..]), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch() {
        let d = dump(vec![1.0; 6]);
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        buf[4] = 2;
        assert!(matches!(read_dump(&buf[..]), Err(FormatError::VersionMismatch { offset: 4, expected: 1, found: 2 })));
    }

    #[test]
    fn truncated_mid_values_reports_lengths() {
        let d = dump(vec![1.0; 6]);
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        buf.truncate(buf.len() - 10);
        match read_dump(&buf[..]) {
            Err(FormatError::Truncated { what, expected, actual, offset }) => {
                assert_eq!(what, "values");
                assert_eq!(expected, 24);
                assert_eq!(actual, 14);
                assert_eq!(offset, header_len(&d));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_and_nan_payload() {
        let d = dump(vec![1.0; 6]);
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        let off = header_len(&d) as usize + 8;
        for bad in [-1.0f32, f32::NAN, f32::INFINITY] {
            let mut b = buf.clone();
            b[off..off + 4].copy_from_slice(&bad.to_le_bytes());
            match read_dump(&b[..]) {
                Err(FormatError::Invalid { offset, .. }) => assert_eq!(offset, off as u64),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_trailing_bytes() {
        let d = dump(vec![1.0; 6]);
        let mut buf = Vec::new();
        write_dump(&d, &mut buf).unwrap();
        buf.push(0);
        assert!(matches!(read_dump(&buf[..]), Err(FormatError::Invalid { .. })));
    }

    #[test]
    fn sink_failure_reports_offset() {
        struct Limited(usize);
        impl Write for Limited {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                if self.0 == 0 {
                    return Err(std::io::Error::other("disk full"));
                }
                let n = buf.len().min(self.0);
                self.0 -= n;
                Ok(n)
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let d = dump(vec![1.0; 6]);
        match write_dump(&d, Limited(10)) {
            Err(FormatError::Io { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("unexpected {other:?}"),
        }
    }
}
