use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate illuminant: zero component in {0:?}")]
    DegenerateIlluminant([f64; 3]),

    #[error("invalid illuminant {0:?}: components must be finite, non-negative and not all zero")]
    InvalidIlluminant([f64; 3]),

    #[error("gamma out of range: {0} (expected 0 < gamma <= 2)")]
    GammaOutOfRange(f64),

    #[error("encoding mismatch: expected {expected:?}, found {found:?}")]
    EncodingMismatch {
        expected: crate::color::Encoding,
        found: crate::color::Encoding,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no valid pixels left after saturation exclusion")]
    NoValidPixels,

    #[error("black image: every channel has zero energy")]
    BlackImage,

    #[error("empty input")]
    EmptyInput,

    #[error("all {0} illuminant estimations failed")]
    AllEstimationsFailed(usize),

    #[error("illuminant bank is empty")]
    EmptyBank,

    #[error("duplicate bank entry id {0:?}")]
    DuplicateId(String),

    #[error("invalid bank entry id {0:?}")]
    InvalidId(String),

    #[error("bank file line {line}: {msg}")]
    BankParse { line: usize, msg: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("single-class score list: AUC needs at least one positive and one negative")]
    SingleClass,

    #[error("score list has no positives")]
    NoPositives,

    #[error("invalid score list: {0}")]
    InvalidScores(String),

    #[error("rejection sampling exceeded {0} attempts")]
    SamplerExhausted(usize),

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    /// True for failures of the environment (files, decoding, formats)
    /// rather than of the data itself.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Image { .. }
                | Error::BankParse { .. }
                | Error::Format(_)
                | Error::UnsupportedBitDepth(_)
        )
    }
}
