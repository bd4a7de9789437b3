use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("malformed input: {0}")]
    Parse(serde_json::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contraction shape mismatch: {0}")]
    Shape(String),

    #[error("rule compilation failed: {0}")]
    Compile(String),

    /// No assignment satisfies the rules under the current restrictions.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The iterative scheme exhausted its injection budget.
    #[error("no solution found after {iterations} rule injections")]
    NoSolutionFound { iterations: usize },

    #[error("projected contraction needs {needed_bytes} bytes, cap is {cap_bytes} bytes")]
    MemoryCap { needed_bytes: u64, cap_bytes: u64 },

    #[error("deadline exceeded")]
    Timeout,

    #[error("instance has {states} states, enumeration limit is {limit}")]
    SizeGuard { states: u128, limit: u128 },

    #[error("case generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

// Not `#[from]`: the message already embeds the serde error, and marking it
// as the source would print it twice in error chains.
impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e)
    }
}
