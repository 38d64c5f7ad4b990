use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("block structure error: {0}")]
    Structure(String),

    #[error("unknown block {0}")]
    UnknownBlock(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// The estimator does not exist for this sample (reported as `NA`).
    #[error("not computable: {0}")]
    NotComputable(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("scale error: {0}")]
    Scale(String),

    #[error("degenerate panel: {0}")]
    DegeneratePanel(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn is_not_computable(&self) -> bool {
        matches!(self, Error::NotComputable(_))
    }
}
