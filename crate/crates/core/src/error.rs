use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("duplicate station id {id} at row {row}")]
    DuplicateStation { id: String, row: usize },
    #[error("non-numeric coordinate {value:?} at row {row}")]
    BadCoordinate { value: String, row: usize },
    #[error("at least 2 stations are required, found {0}")]
    TooFewStations(usize),
    #[error("unparseable timestamp {value:?} at row {row}")]
    BadTimestamp { value: String, row: usize },
    #[error("timestamp {value} at row {row} is off the {frequency} grid")]
    OffGrid { value: String, row: usize, frequency: String },
    #[error("duplicate or out-of-order timestamp {value} at row {row}")]
    NotIncreasing { value: String, row: usize },
    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    BadValue { value: String, row: usize, column: String },
    #[error("unknown station column {0}")]
    UnknownStation(String),
    #[error("station {0} has no column in the panel")]
    MissingStation(String),
    #[error("station {station} has {observed} observations; imputation needs at least 2")]
    InsufficientObservations { station: String, observed: usize },
    #[error("gap of {len} steps at station {station} starting at row {start} exceeds the linear limit")]
    GapTooLong { station: String, start: usize, len: usize },
    #[error("invalid ingest configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature configuration: {0}")]
    Config(String),
    #[error("feature computation needs a fully imputed panel")]
    Incomplete,
    #[error("panel too short: {0}")]
    TooShort(String),
    #[error("feature table is empty after dropping warm-up rows")]
    EmptyTable,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("schema mismatch: missing {missing:?}, unexpected {unexpected:?}, order differs: {reordered}")]
    SchemaMismatch { missing: Vec<String>, unexpected: Vec<String>, reordered: bool },
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("training data problem: {0}")]
    Training(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("bridge timed out after {0} s")]
    Timeout(u64),
    #[error("backend failed at step {} of the horizon: {source}", .completed.len() + 1)]
    MidHorizon {
        /// Predictions for the steps that finished, one row per step.
        completed: Vec<Vec<f64>>,
        #[source]
        source: Box<ForecastError>,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} observed vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("metric needs at least {0} values")]
    TooFew(usize),
    #[error("non-finite input")]
    NonFinite,
    #[error("MAPE undefined for this series: observed value {0} is within the zero tolerance")]
    MapeUndefined(f64),
    #[error("KGE undefined: {0}")]
    KgeUndefined(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("JSON error at {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

/// Crate-level error with a coarse classification used for exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Backend,
    Internal,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Ingest(IngestError::Config(_)) => ErrorKind::Config,
            Error::Feature(FeatureError::Config(_)) => ErrorKind::Config,
            Error::Forecast(ForecastError::Config(_)) => ErrorKind::Config,
            Error::Ingest(_) | Error::Feature(_) | Error::Model(_) | Error::Io { .. } => {
                ErrorKind::Data
            }
            Error::Forecast(ForecastError::Feature(_) | ForecastError::Training(_)) => {
                ErrorKind::Data
            }
            Error::Forecast(_) => ErrorKind::Backend,
            Error::Eval(EvalError::InfeasibleSplit(_) | EvalError::Io { .. } | EvalError::Json { .. }) => {
                ErrorKind::Data
            }
            Error::Eval(_) => ErrorKind::Internal,
        }
    }
}
