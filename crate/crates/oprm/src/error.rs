use thiserror::Error;

/// Crate-wide error type.
///
/// `exit_code` groups these the way the CLI reports them: usage and
/// configuration problems are 2, numeric failures are 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("numeric failure at step {step}: {what}")]
    Numeric { step: usize, what: String },

    /// A failure attributed to one chunk of a chunked-inference call.
    #[error("chunk {chunk} failed during {stage}: {source}")]
    Chunk {
        chunk: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numeric(step: usize, what: impl Into<String>) -> Self {
        Error::Numeric {
            step,
            what: what.into(),
        }
    }

    /// Wrap an error with the chunk index and pipeline stage it came from.
    pub fn in_chunk(self, chunk: usize, stage: &'static str) -> Self {
        Error::Chunk {
            chunk,
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for usage/config, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } => 3,
            Error::Chunk { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
