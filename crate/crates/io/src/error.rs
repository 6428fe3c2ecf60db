use std::path::PathBuf;

/// Errors from file formats, configuration and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: bad {field}: {message}")]
    Format {
        file: String,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] cbc_core::Error),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Format {
            file: file.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
