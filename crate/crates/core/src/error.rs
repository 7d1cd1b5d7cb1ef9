use thiserror::Error;

/// Errors raised by the planning engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("agent unavailable ({agent}): {reason}")]
    AgentUnavailable { agent: String, reason: String },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("plan failed validation: {0}")]
    Validation(String),

    #[error("heatmap format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable code, used by the service layer.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::AgentUnavailable { .. } => "AGENT_UNAVAILABLE",
            Error::Pipeline(_) => "PIPELINE_ERROR",
            Error::Validation(_) => "PLAN_INVALID",
            Error::Format(_) => "FORMAT_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
            Error::Config(_) => "CONFIG_ERROR",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
