use thiserror::Error;

use crate::graddescent::RefineOutcome;
use crate::learner::FitReport;
use crate::momentdescent::DescentState;

pub type Result<T, E = MlrError> = std::result::Result<T, E>;

/// Work completed before a data source ran dry.
#[derive(Debug, Clone)]
pub enum Partial {
    Descent(DescentState),
    Refine(RefineOutcome),
    Fit(FitReport),
}

#[derive(Debug, Error)]
pub enum MlrError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dataset carries hidden component ids; strip them before fitting")]
    HiddenLabels,

    #[error("data source exhausted during {stage}: {reason}")]
    Exhausted {
        stage: &'static str,
        reason: String,
        partial: Option<Box<Partial>>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MlrError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        MlrError::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        MlrError::Parameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        MlrError::Data(msg.into())
    }

    /// Attach a partial result to an exhaustion error, replacing any
    /// partial carried from a nested stage.
    pub(crate) fn with_partial(self, stage: &'static str, partial: Partial) -> Self {
        match self {
            MlrError::Exhausted { reason, .. } => MlrError::Exhausted {
                stage,
                reason,
                partial: Some(Box::new(partial)),
            },
            other => other,
        }
    }

    pub fn is_exhausted(&self) -> bool {
        matches!(self, MlrError::Exhausted { .. })
    }

    pub fn partial(&self) -> Option<&Partial> {
        match self {
            MlrError::Exhausted { partial, .. } => partial.as_deref(),
            _ => None,
        }
    }
}
