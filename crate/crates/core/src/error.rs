use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("invalid ladder: {0}")]
    InvalidLadder(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidSampler(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("ladder tuning infeasible: {0}")]
    TuningInfeasible(String),

    #[error("estimate undefined: {0}")]
    UndefinedEstimate(String),

    #[error("all importance weights underflow (max log-weight {max_log_weight})")]
    DegenerateWeights { max_log_weight: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
