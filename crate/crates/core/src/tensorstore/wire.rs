use std::io::{self, Read, Write};

use super::FormatError;
use crate::lang::{CorpusTag, LanguageCode, Objective, RunMeta, MAX_CODE_LEN};

/// Upper bound on any length-prefixed string in a header.
const MAX_STRING_LEN: u32 = 1 << 16;

pub(crate) struct WireReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> WireReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    /// Fills `buf` completely; a short read becomes `Truncated` with the byte counts.
    pub fn fill(&mut self, buf: &mut [u8], what: &'static str) -> Result<(), FormatError> {
        let start = self.offset;
        let got = self.fill_partial(buf)?;
        if got < buf.len() {
            return Err(FormatError::Truncated { offset: start, what, expected: buf.len() as u64, actual: got as u64 });
        }
        Ok(())
    }

    /// Reads until `buf` is full or EOF; returns the number of bytes read.
    pub fn fill_partial(&mut self, buf: &mut [u8]) -> Result<usize, FormatError> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => {
                    got += n;
                    self.offset += n as u64;
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(source) => return Err(FormatError::Io { offset: self.offset, source }),
            }
        }
        Ok(got)
    }

    pub fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FormatError> {
        let mut b = [0u8; N];
        self.fill(&mut b, what)?;
        Ok(b)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.array::<1>(what)?[0])
    }
    pub fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }
    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    pub fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
    pub fn i32(&mut self, what: &'static str) -> Result<i32, FormatError> {
        Ok(i32::from_le_bytes(self.array(what)?))
    }
    pub fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    pub fn string(&mut self, what: &'static str) -> Result<String, FormatError> {
        let at = self.offset;
        let len = self.u32(what)?;
        if len > MAX_STRING_LEN {
            return Err(FormatError::invalid(at, format!("{what} length {len} exceeds {MAX_STRING_LEN}")));
        }
        let mut buf = vec![0u8; len as usize];
        self.fill(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| FormatError::invalid(at, format!("{what} is not UTF-8")))
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<(), FormatError> {
        let found = self.array::<4>("magic")?;
        if found != expected {
            return Err(FormatError::BadMagic { expected, found });
        }
        Ok(())
    }

    pub fn version(&mut self, expected: u16) -> Result<(), FormatError> {
        let offset = self.offset;
        let found = self.u16("version")?;
        if found != expected {
            return Err(FormatError::VersionMismatch { offset, expected, found });
        }
        Ok(())
    }

    /// language[8] | objective u8 | corpus_tag u8 | seed i32
    pub fn run_meta(&mut self) -> Result<RunMeta, FormatError> {
        let at = self.offset;
        let raw = self.array::<MAX_CODE_LEN>("language code")?;
        let language = LanguageCode::from_padded(&raw).map_err(|e| FormatError::invalid(at, e.to_string()))?;
        let at = self.offset;
        let objective = Objective::from_u8(self.u8("objective")?)
            .ok_or_else(|| FormatError::invalid(at, "unknown objective tag"))?;
        let at = self.offset;
        let corpus_tag =
            CorpusTag::from_u8(self.u8("corpus tag")?).ok_or_else(|| FormatError::invalid(at, "unknown corpus tag"))?;
        let seed = self.i32("seed")?;
        Ok(RunMeta { language, objective, corpus_tag, seed })
    }
}

pub(crate) struct WireWriter<W> {
    inner: W,
    offset: u64,
}

impl<W: Write> WireWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<(), FormatError> {
        self.inner.write_all(b).map_err(|source| FormatError::Io { offset: self.offset, source })?;
        self.offset += b.len() as u64;
        Ok(())
    }

    pub fn u8(&mut self, v: u8) -> Result<(), FormatError> {
        self.bytes(&[v])
    }
    pub fn u16(&mut self, v: u16) -> Result<(), FormatError> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u32(&mut self, v: u32) -> Result<(), FormatError> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn u64(&mut self, v: u64) -> Result<(), FormatError> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn i32(&mut self, v: i32) -> Result<(), FormatError> {
        self.bytes(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> Result<(), FormatError> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn string(&mut self, s: &str) -> Result<(), FormatError> {
        let len = u32::try_from(s.len())
            .ok()
            .filter(|&l| l <= MAX_STRING_LEN)
            .ok_or_else(|| FormatError::Validation(format!("string of {} bytes is too long", s.len())))?;
        self.u32(len)?;
        self.bytes(s.as_bytes())
    }

    pub fn run_meta(&mut self, meta: &RunMeta) -> Result<(), FormatError> {
        self.bytes(&meta.language.to_padded())?;
        self.u8(meta.objective.to_u8())?;
        self.u8(meta.corpus_tag.to_u8())?;
        self.i32(meta.seed)
    }

    /// f32 values, buffered in chunks.
    pub fn f32_slice(&mut self, values: &[f32]) -> Result<(), FormatError> {
        let mut buf = Vec::with_capacity(4 * 4096);
        for chunk in values.chunks(4096) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            self.bytes(&buf)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), FormatError> {
        self.inner.flush().map_err(|source| FormatError::Io { offset: self.offset, source })
    }
}
