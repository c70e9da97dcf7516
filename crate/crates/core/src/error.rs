use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing directory: {0}")]
    MissingDirectory(PathBuf),

    #[error("zero files found in {0}")]
    NoSnapshots(PathBuf),

    #[error("{count} file(s) in {dir} do not match the YYYY.MM.DD.HH.MM.SS pattern: {names:?}")]
    BadFilenames {
        dir: PathBuf,
        count: usize,
        names: Vec<String>,
    },

    #[error("snapshot {name}: short file ({rows} rows, expected {expected})")]
    ShortFile {
        name: String,
        rows: usize,
        expected: usize,
    },

    #[error("snapshot {name}: {rows} rows, expected exactly {expected}")]
    ExtraRows {
        name: String,
        rows: usize,
        expected: usize,
    },

    #[error("snapshot {name}: line {line} has {got} columns, expected {expected}")]
    ColumnCount {
        name: String,
        line: usize,
        got: usize,
        expected: usize,
    },

    #[error("snapshot {name}: line {line}: non-numeric token {token:?}")]
    NonNumeric {
        name: String,
        line: usize,
        token: String,
    },

    #[error("snapshot {name}: non-finite value at line {line}")]
    NonFinite { name: String, line: usize },

    #[error("bad timestamp in filename {0:?}")]
    BadTimestamp(String),

    #[error("bearing {bearing} is not valid for dataset {dataset}")]
    SelectorMismatch { dataset: u8, bearing: u8 },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length {len} is not divisible by {factor}")]
    NotDivisible { len: usize, factor: usize },

    #[error("empty input")]
    Empty,

    #[error("zero variance input")]
    ZeroVariance,

    #[error("all-zero input (rms = 0)")]
    ZeroRms,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFiniteValue(&'static str),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("init batch needs exactly {expected} samples, got {got}")]
    InitBatchSize { expected: usize, got: usize },

    #[error("operation {op} not allowed in phase {phase:?}")]
    Phase {
        op: &'static str,
        phase: crate::oselm::Phase,
    },

    #[error("output weights are not initialized")]
    Uninitialized,

    #[error("information matrix lost positive definiteness")]
    NotPositiveDefinite,

    #[error("negative deviation {0}")]
    NegativeDeviation(f64),

    #[error("threshold needs at least 2 training deviations, have {0}")]
    InsufficientStats(u64),

    #[error("K must be positive, got {0}")]
    InvalidK(f64),

    #[error("empty K grid")]
    EmptyGrid,

    #[error("no inference-phase samples to judge")]
    EmptyInference,

    #[error("bearing {bearing} did not converge after {samples} samples (last %dbeta: {tail:?})")]
    NotConverged {
        bearing: String,
        samples: usize,
        tail: Vec<f64>,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
