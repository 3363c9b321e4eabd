//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// All failure modes of the library, grouped so the CLI can map each to a
/// stable process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lex error at byte {offset}: {message}")]
    Lex { message: String, offset: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { message: String, offset: usize },

    #[error("evaluation error in `{context}`: {message}")]
    Eval { message: String, context: String },

    #[error("model validation failed:\n  {}", violations.join("\n  "))]
    Validation { violations: Vec<String> },

    #[error("unknown builtin model `{0}`")]
    UnknownBuiltin(String),

    #[error("builtin `{builtin}`: missing parameter `{name}`")]
    MissingParameter { builtin: String, name: String },

    #[error("builtin `{builtin}`: unknown parameter `{name}`")]
    UnknownParameter { builtin: String, name: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("{what}: {value} exceeds limit {limit}")]
    Guard {
        what: &'static str,
        value: u64,
        limit: u64,
    },

    #[error("state not normalized: |norm - 1| = {deviation:.3e}")]
    Unnormalized { deviation: f64 },

    #[error("density matrix invalid: {0}")]
    InvalidDensity(String),

    #[error("non-convergence: {message} (best residual {best:.3e})")]
    NonConvergence { message: String, best: f64 },

    #[error("positivity violated: min eigenvalue {min:.3e} below floor {floor:.3e}; reduce the step size")]
    Positivity { min: f64, floor: f64 },

    #[error("non-finite value while {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Json { path: String, message: String },

    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl Error {
    /// Process exit code for the CLI: 1 I/O, 2 validation, 3 evaluation,
    /// 4 numerical non-convergence, 5 check failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Validation { .. }
            | Error::Json { .. }
            | Error::UnknownBuiltin(_)
            | Error::MissingParameter { .. }
            | Error::UnknownParameter { .. }
            | Error::Dimension { .. }
            | Error::Guard { .. }
            | Error::Unnormalized { .. }
            | Error::InvalidDensity(_) => 2,
            Error::Lex { .. } | Error::Parse { .. } | Error::Eval { .. } | Error::NonFinite(_) => 3,
            Error::NonConvergence { .. } | Error::Positivity { .. } => 4,
            Error::ChecksFailed { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
