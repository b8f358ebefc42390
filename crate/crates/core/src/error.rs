use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("{}:{line}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("graph has no positive edges")]
    EmptyGraph,

    #[error("node {0} has an empty neighborhood")]
    EmptyNeighborhood(String),

    #[error("degenerate link-prediction training: {0}")]
    DegenerateTraining(String),

    #[error("missing embedding for {0}")]
    MissingEmbedding(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid k = {k} for {n} models")]
    InvalidK { k: usize, n: usize },

    #[error("target {dataset} skipped: accuracy std {std:.4} below {threshold}")]
    LowVariance {
        dataset: String,
        std: f64,
        threshold: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for command-line use: 2 for data and integrity
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_)
            | Error::DegenerateVector(_)
            | Error::DegenerateLabels(_)
            | Error::DegenerateTraining(_) => 3,
            Error::InvalidConfig(_) | Error::InvalidK { .. } => 1,
            _ => 2,
        }
    }
}
