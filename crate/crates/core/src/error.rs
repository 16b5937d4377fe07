use thiserror::Error;

/// Errors raised by the simulator and optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("reflection order {0} not supported; at most second order reflections are traced")]
    MaxOrder(u8),

    #[error("channel response has no energy")]
    EmptyResponse,

    #[error("unknown luminaire id {0}")]
    UnknownLuminaire(usize),

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("search space of {size} assignments exceeds the brute-force guard of {limit}")]
    SearchSpaceTooLarge { size: f64, limit: f64 },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Wraps an error with the label of the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
