use thiserror::Error;

use crate::engine::TraceRecord;

/// Errors produced by the simulator and its analysis helpers.
#[derive(Debug, Error)]
pub enum SimError {
    /// A configuration value is missing or out of its valid range.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    /// The event loop reached a state the instance state machine forbids.
    /// `recent` holds the last events processed before the violation.
    #[error("internal state violation at t={time}: {detail}")]
    Logic {
        time: f64,
        detail: String,
        recent: Vec<TraceRecord>,
    },

    /// Parameter estimation from a request log could not proceed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A request log could not be read.
    #[error("malformed request log: {0}")]
    TraceFormat(String),
}

impl SimError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, SimError::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
