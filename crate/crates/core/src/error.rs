use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("zero-probability evidence at t={t}")]
    ZeroEvidence { t: usize },

    #[error("training aborted after {skips} consecutive non-finite steps (epoch {epoch})")]
    TrainingAborted { epoch: usize, skips: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
