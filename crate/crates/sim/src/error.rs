use thiserror::Error;

/// Run failures, split by the exit status they map to.
#[derive(Debug, Error)]
pub enum SimError {
    /// Malformed or inconsistent input files.
    #[error("schema error: {0}")]
    Schema(String),
    /// The runtime observed a state that should be impossible.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] skywatch_core::Error),
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Schema(_) | SimError::Core(_) | SimError::Io(_) => 2,
            SimError::Invariant(_) => 3,
        }
    }
}

pub type SimResult<T> = std::result::Result<T, SimError>;

pub(crate) fn schema<T>(msg: impl Into<String>) -> SimResult<T> {
    Err(SimError::Schema(msg.into()))
}
