use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("value {value} does not fit in {bits}-bit two's complement")]
    Overflow { value: i64, bits: u32 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed tensor header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },

    #[error("coefficient {field} = {value} overflows a 16-bit LUT field (entry {entry})")]
    LutOverflow {
        field: &'static str,
        value: i64,
        entry: usize,
    },

    #[error("value {value} outside polynomial range [{lo}, 0]")]
    OutOfRange { value: i64, lo: i64 },

    #[error("plane of {len} bits exceeds array of {rows} word lines")]
    PlaneTooLong { len: usize, rows: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("accumulator overflow: {value} needs more than {bits} bits")]
    AccumulatorOverflow { value: i64, bits: u32 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Overflow { .. } => "overflow",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Empty(_) => "empty",
            Error::MalformedHeader(_) => "malformed_header",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::LutOverflow { .. } => "lut_overflow",
            Error::OutOfRange { .. } => "out_of_range",
            Error::PlaneTooLong { .. } => "plane_too_long",
            Error::Capacity(_) => "capacity",
            Error::AccumulatorOverflow { .. } => "accumulator_overflow",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
