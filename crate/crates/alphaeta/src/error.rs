use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] alphaeta_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(&'static str),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 invariant violation, 2 usage or config
    /// problem, 3 resource guard.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Core(alphaeta_core::Error::ResourceLimit { .. }) => 3,
            Error::Core(alphaeta_core::Error::Inconsistent { .. }) | Error::Invariant(_) => 1,
            _ => 2,
        }
    }
}
