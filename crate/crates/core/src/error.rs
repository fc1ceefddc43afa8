use std::path::PathBuf;

/// Errors produced by the sectorbeam toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid direction: {0}")]
    Direction(String),

    #[error("invalid sector: {0}")]
    Sector(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} mismatch: expected {expected}, found {found}")]
    Mismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("index out of range: {what} {index} (count {count})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        count: usize,
    },

    #[error("regularized system is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("weight solve failed at bin {bin} ({freq_hz:.1} Hz), sector {sector}: {source}")]
    BinSolve {
        bin: usize,
        freq_hz: f64,
        sector: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("direction (az {azimuth_deg}, el {elevation_deg}) is not inside any sector")]
    OutsideSectors {
        azimuth_deg: f64,
        elevation_deg: f64,
    },

    #[error("undefined confusion score: no test items with true count {0}")]
    EmptyRow(usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed bank file: {0}")]
    BankFormat(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Singular { .. } | Error::BinSolve { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
