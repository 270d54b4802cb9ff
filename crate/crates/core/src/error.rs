use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(
        "embedding dimension {requested} exceeds positive spectrum; largest admissible dimension is {max_admissible}"
    )]
    EmbeddingDimension {
        requested: usize,
        max_admissible: usize,
    },

    #[error("block {block} has {size} member(s); at least 2 are required")]
    DegenerateBlock { block: usize, size: usize },

    #[error("every cell of the BIC grid is degenerate")]
    AllDegenerate,

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
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
