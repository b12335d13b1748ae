//! Error types shared across the engine.

use std::path::PathBuf;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or invalid parameter combination.
    Config,
    /// Problems reading or validating input data.
    Data,
    /// LLM or embedding provider failures.
    Provider,
    /// Internal invariant violations; always a bug.
    Internal,
}

/// Unified error type for the engine.
#[derive(Debug, thiserror::Error)]
pub enum HiveError {
    #[error("dimension mismatch: expected {expected}, got {got}{}", ctx_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("zero-magnitude vector for '{id}': embeddings must have nonzero norm")]
    DegenerateVector { id: String },

    #[error("non-finite component in vector for '{id}'")]
    NonFiniteVector { id: String },

    #[error("duplicate id '{id}' in {what}")]
    DuplicateId { id: String, what: String },

    #[error("no embedding found for '{id}'")]
    MissingEmbedding { id: String },

    #[error("{path}:{line}: {message}")]
    ParseLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad magic in embedding file {path}: not a HIVEEMB1 payload")]
    BadMagic { path: PathBuf },

    #[error("truncated or corrupt embedding file {path}: {message}")]
    TruncatedPayload { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("authentication not configured: {0}")]
    AuthConfig(String),

    #[error("provider authentication rejected (HTTP {status})")]
    AuthRejected { status: u16 },

    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },

    #[error("provider returned a malformed payload: {0}")]
    MalformedPayload(String),

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("mock oracle cannot interpret request: {0}")]
    OracleMismatch(String),

    #[error("query sets differ: {only_a:?} only in A, {only_b:?} only in B")]
    QuerySetMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

fn ctx_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl HiveError {
    /// Failure class for exit-code mapping and retry decisions.
    pub fn class(&self) -> ErrorClass {
        use HiveError::*;
        match self {
            DimensionMismatch { .. } | InvalidConfig(_) | AuthConfig(_) => ErrorClass::Config,
            DegenerateVector { .. }
            | NonFiniteVector { .. }
            | DuplicateId { .. }
            | MissingEmbedding { .. }
            | ParseLine { .. }
            | BadMagic { .. }
            | TruncatedPayload { .. }
            | QuerySetMismatch { .. }
            | Io { .. }
            | Json { .. } => ErrorClass::Data,
            AuthRejected { .. }
            | RateLimited { .. }
            | MalformedPayload(_)
            | Transport { .. }
            | OracleMismatch(_) => ErrorClass::Provider,
            Internal(_) => ErrorClass::Internal,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HiveError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HiveError>;
