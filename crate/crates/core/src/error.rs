use thiserror::Error;

/// Errors raised by the simulator, the learners and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range for {context} of length {len}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("observation has zero likelihood under every event state")]
    InconsistentObservation,

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("missing upstream artifact: {0}")]
    Dependency(String),

    #[error("cannot step an environment whose episode has terminated")]
    Terminal,

    #[error("history too short: need more than {needed} slots, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{0}")]
    Empty(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dependency(_) => 2,
            Error::Numerical(_) | Error::InconsistentObservation => 3,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
