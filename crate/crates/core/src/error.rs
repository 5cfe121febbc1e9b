//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by hashing, matching, forging and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The byte stream is not a decodable PNG/JPEG or uses an unsupported
    /// color mode (16-bit, CMYK, animated).
    #[error("decode error: {0}")]
    Decode(String),

    /// Malformed text input (hash hex string, database line, manifest row).
    #[error("parse error: {0}")]
    Parse(String),

    /// Malformed line in a database or manifest file.
    #[error("parse error at line {line}: {msg}")]
    ParseLine { line: usize, msg: String },

    /// Attempt to enroll an id that is already present.
    #[error("duplicate id: {0}")]
    DuplicateId(String),

    /// Reference ids must be non-empty and single-line.
    #[error("invalid id: {0:?}")]
    InvalidId(String),

    /// Query against a database with no usable entries.
    #[error("empty reference database")]
    EmptyDatabase,

    /// Resize scale produces an empty output image.
    #[error("invalid scale {0}: output would be empty")]
    InvalidScale(f64),

    /// Splice donor smaller than the region to paste.
    #[error("donor image {donor_w}x{donor_h} too small for {region_w}x{region_h} region")]
    DonorTooSmall {
        donor_w: u32,
        donor_h: u32,
        region_w: u32,
        region_h: u32,
    },

    /// Metric requested over a query set with no fake-labeled entries.
    #[error("no fake-labeled queries")]
    NoFakeQueries,

    /// Average precision needs at least one positive and one negative.
    #[error("degenerate labels: need at least one fake and one real")]
    DegenerateLabels,

    /// Sweep over an empty distance set.
    #[error("empty input")]
    EmptyInput,

    /// Manifest references a file that cannot be read.
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
