use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: column `{column}`: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate patent `{0}` with conflicting fields")]
    DuplicatePatent(String),

    #[error("unknown patent `{0}`")]
    UnknownPatent(String),

    #[error("patent `{0}` is not a focal patent")]
    NotFocal(String),

    #[error("patent `{0}` has no grant date")]
    MissingDate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("perfect separation detected on covariate `{0}`")]
    PerfectSeparation(String),

    #[error("singular design matrix")]
    SingularDesign,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Usage(_) | Error::InvalidArgument(_) => 2,
            Error::Numeric(_) | Error::PerfectSeparation(_) | Error::SingularDesign => 4,
            _ => 3,
        }
    }
}
