use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),

    #[error("no numeric columns in input")]
    NoNumericColumns,

    #[error("duplicate column label `{0}`")]
    DuplicateColumn(String),

    #[error("duplicate date {0}")]
    DuplicateDate(chrono::NaiveDate),

    #[error("series `{id}` has {len} observations, need at least 2")]
    TooShort { id: String, len: usize },

    #[error("invalid series `{id}`: {reason}")]
    InvalidSeries { id: String, reason: String },

    #[error("panel is empty")]
    EmptyPanel,

    #[error("alignment leaves {0} shared dates, need at least 2")]
    AlignmentTooShort(usize),

    #[error("series `{id}` has no prior observation to forward-fill on {date}")]
    NoPriorValue { id: String, date: chrono::NaiveDate },

    #[error("panel is not aligned; run `align` first")]
    NotAligned,

    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    #[error("invalid scale grid: {0}")]
    InvalidGrid(String),

    #[error("scale {scale} exceeds profile length {len}")]
    ScaleTooLarge { scale: usize, len: usize },

    #[error("invalid detrending method: {0}")]
    InvalidMethod(String),

    #[error("singular least-squares system")]
    Singular,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{needed} positive fluctuation points required, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("log-scales have zero variance")]
    DegenerateScales,

    #[error("degenerate series (zero detrended fluctuation): {}", .0.join(", "))]
    Degenerate(Vec<String>),

    #[error("rho_DCCA = {0} exceeds [-1, 1] beyond rounding tolerance")]
    RhoOutOfBounds(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("network has no positive-weight edges")]
    NoPositiveEdges,

    #[error("window {from}..{to} leaves {count} shared dates, need at least 2")]
    EmptyWindow {
        from: chrono::NaiveDate,
        to: chrono::NaiveDate,
        count: usize,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
