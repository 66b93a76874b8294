use std::path::PathBuf;

use mavdesign_core::DesignError;

/// Errors of the file, simulation and command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// JSON that does not match the schema; `field` is the path inside the document.
    #[error("{path}: {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Design(#[from] DesignError),

    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Process exit code: 1 validation, 2 numerical failure, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Schema { .. } | Error::Invalid(_) => 1,
            Error::Design(e) => design_exit_code(e),
            Error::Verification(_) => 3,
        }
    }
}

fn design_exit_code(e: &DesignError) -> i32 {
    match e {
        DesignError::Atom { source, .. } => design_exit_code(source),
        DesignError::DegenerateEffect(_)
        | DesignError::NoCrossing { .. }
        | DesignError::FlatCrossing { .. }
        | DesignError::SingularInformation { .. }
        | DesignError::AllStartsFailed => 2,
        _ => 1,
    }
}
