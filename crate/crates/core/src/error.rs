use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("action overlaps body {body_id}")]
    Overlap { body_id: usize },

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("template {template_id} task {index}: {draws} consecutive overlapping draws")]
    TemplateExhausted {
        template_id: usize,
        index: usize,
        draws: usize,
    },

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("non-finite loss in {stage} at epoch {epoch}: {detail}")]
    NonFiniteLoss {
        stage: &'static str,
        epoch: usize,
        detail: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported weight format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
