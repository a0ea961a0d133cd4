use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Numeric(#[from] maryland::Error),

    #[error("check failed: {0}")]
    Failed(String),

    #[error("cannot write {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Config { .. } => "invalid_config",
            CliError::Usage(_) => "usage",
            CliError::Numeric(_) => "numeric",
            CliError::Failed(_) => "check_failed",
            CliError::Io { .. } => "io",
        };
        let mut v = json!({ "error": kind, "message": self.to_string(), "exit_code": self.exit_code() });
        match self {
            CliError::Config { field, .. } => v["field"] = json!(field),
            CliError::Numeric(maryland::Error::InvalidInput { field, .. }) => v["field"] = json!(field),
            _ => {}
        }
        v.to_string()
    }
}
