use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("point x = {0} lies on an interface; a side must be given")]
    AmbiguousSide(f64),

    #[error("singular linear system (condition estimate {condition:.3e}): {detail}")]
    Singular { condition: f64, detail: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training failed at step {step}: {detail}")]
    Training { step: usize, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Format(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
