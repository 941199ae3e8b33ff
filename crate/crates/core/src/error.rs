use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("duplicate record id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("record `{record}` carries label `{label}` which is not in the taxonomy")]
    UnknownLabel { record: String, label: String },

    #[error("taxonomy: {0}")]
    Taxonomy(String),

    #[error("`{entity}`: width {found}, expected {expected}")]
    Dimension {
        entity: String,
        expected: usize,
        found: usize,
    },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("no precomputed text vector for record `{0}`")]
    MissingVector(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label order mismatch: {0}")]
    LabelOrder(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
