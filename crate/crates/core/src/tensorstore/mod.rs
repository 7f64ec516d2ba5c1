//! Binary interchange formats: Fisher dumps (`FGRD`), per-example gradient
//! streams (`FGRS`), sub-network masks (`FMSK`), and the CSV layout for
//! similarity matrices.
//!
//! All integers and floats are little-endian. Every reader reports the byte
//! offset at which a problem was detected.

mod dump;
mod gradstream;
mod manifest;
mod mask;
mod matrix_csv;
mod wire;

use std::io;

use thiserror::Error;

pub use dump::{read_dump, write_dump, DumpFlags, FisherDump, DUMP_MAGIC};
pub use gradstream::{GradStreamHeader, GradStreamReader, GradStreamWriter, GRAD_STREAM_MAGIC};
pub use manifest::{manifest_hash, LayoutManifest, TensorSpec};
pub use mask::{ceil_fraction, read_mask, write_mask, MaskFile, MaskFlags, MASK_MAGIC};
pub use matrix_csv::{format_sig9, read_matrix_csv, write_matrix_csv};

/// Current version of every binary format in this module.
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("version mismatch at offset {offset}: expected {expected}, found {found}")]
    VersionMismatch { offset: u64, expected: u16, found: u16 },
    #[error("truncated payload at offset {offset} while reading {what}: expected {expected} bytes, got {actual}")]
    Truncated { offset: u64, what: &'static str, expected: u64, actual: u64 },
    #[error("invalid data at offset {offset}: {reason}")]
    Invalid { offset: u64, reason: String },
    #[error("I/O error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: io::Error,
    },
    #[error("layout mismatch: expected layout hash {expected:016x}, found {found:016x}")]
    LayoutMismatch { expected: u64, found: u64 },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl FormatError {
    pub(crate) fn invalid(offset: u64, reason: impl Into<String>) -> Self {
        FormatError::Invalid { offset, reason: reason.into() }
    }
}
