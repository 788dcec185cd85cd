use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient points: need at least {needed}, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("no observable window: no cluster produced a non-degenerate convex hull")]
    NoObservableWindow,

    #[error("undefined density: {0}")]
    UndefinedDensity(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distance grids do not match")]
    GridMismatch,

    #[error("unknown function id `{0}`")]
    UnknownFunction(String),

    #[error("subject ids do not match (no phenotype: [{}]; no features: [{}])", .no_phenotype.join(", "), .no_features.join(", "))]
    SubjectMismatch {
        no_phenotype: Vec<String>,
        no_features: Vec<String>,
    },

    #[error("too few subjects: need at least {needed}, found {found}")]
    TooFewSubjects { needed: usize, found: usize },

    #[error("{}:{line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
