use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} {got} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("cannot sample from an empty buffer")]
    EmptyBuffer,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("promise window under-filled: {have} of {need} steps observed")]
    WindowUnderFilled { have: usize, need: usize },

    /// NaN guard: a table update produced a non-finite entry.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("attempted to mutate a frozen policy")]
    FrozenPolicy,

    #[error("invalid environment spec: {0}")]
    InvalidEnvSpec(String),

    #[error("value iteration did not converge within {0} sweeps")]
    NoConvergence(usize),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
