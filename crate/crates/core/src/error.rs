use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate trial key (item_id={item_id}, model_id={model_id}, sample_index={sample_index})")]
    DuplicateKey {
        item_id: String,
        model_id: String,
        sample_index: u32,
    },

    #[error("line {line}: sample_index {sample_index} out of range for K = {k} (item_id={item_id})")]
    SampleIndexOutOfRange {
        line: usize,
        item_id: String,
        sample_index: u32,
        k: usize,
    },

    #[error("item sets differ: {} only in v1 {:?}, {} only in v2 {:?}", only_v1.len(), only_v1, only_v2.len(), only_v2)]
    ItemSetMismatch {
        only_v1: Vec<String>,
        only_v2: Vec<String>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for faults in the input data itself (parse errors, duplicate keys,
    /// mismatched item sets) as opposed to analysis or I/O failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DuplicateKey { .. }
                | Error::SampleIndexOutOfRange { .. }
                | Error::ItemSetMismatch { .. }
                | Error::Csv(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
