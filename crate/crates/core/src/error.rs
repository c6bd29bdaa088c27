use thiserror::Error;

/// Errors raised by quadrature, quantization and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, mismatched spaces, or a violated precondition.
    #[error("configuration error: {0}")]
    Config(String),

    /// A non-finite value appeared inside a numerical recursion.
    #[error("numeric error at step {step}: {msg}")]
    Numeric { step: usize, msg: String },

    /// A functional failed on a particular sample.
    #[error("functional evaluation failed at sample {index}: {source}")]
    Eval {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl Error {
    pub(crate) fn at_sample(self, index: usize) -> Self {
        match self {
            e @ Error::Eval { .. } => e,
            other => Error::Eval {
                index,
                source: Box::new(other),
            },
        }
    }
}
