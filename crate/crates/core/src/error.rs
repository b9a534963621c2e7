use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed argument: bad shape, out-of-range index, invalid distribution.
    #[error("invalid input: {0}")]
    Input(String),

    /// API misuse, e.g. stepping an environment that already terminated.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric error in {what}{}: {detail}", minibatch.map(|m| format!(" (minibatch {m})")).unwrap_or_default())]
    Numeric {
        what: String,
        detail: String,
        minibatch: Option<usize>,
    },

    #[error("checkpoint format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("environment fault in actor {actor}: {source}")]
    Env {
        actor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numeric(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            what: what.into(),
            detail: detail.into(),
            minibatch: None,
        }
    }

    /// Attaches a minibatch index to a numeric error; other variants pass through.
    pub fn in_minibatch(self, index: usize) -> Self {
        match self {
            Error::Numeric { what, detail, .. } => Error::Numeric {
                what,
                detail,
                minibatch: Some(index),
            },
            other => other,
        }
    }
}
