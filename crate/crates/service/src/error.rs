use fairlicit_core::analysis::AnalysisError;
use fairlicit_core::elicitation::ElicitationError;
use fairlicit_core::metrics::MetricsError;
use fairlicit_core::similarity::SimilarityError;
use fairlicit_core::training::TrainingError;
use fairlicit_core::DataError;
use serde::Serialize;
use thiserror::Error;

/// How a failure should be reported to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The request itself is malformed or fails validation.
    Invalid,
    NotFound,
    /// Valid request that conflicts with the current state.
    Conflict,
    /// Valid request whose computation could not produce a finite result.
    Unprocessable,
    /// Store or IO failure.
    Internal,
}

/// A failure carrying the name of the module error it came from.
#[derive(Debug, Clone, Error)]
#[error("{message}")]
pub struct ApiError {
    pub kind: ErrorKind,
    pub name: &'static str,
    pub message: String,
}

/// Wire shape of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    pub fn new(kind: ErrorKind, name: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            kind,
            name,
            message: message.into(),
        }
    }

    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::Invalid, name, message)
    }

    pub fn not_found(name: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::NotFound, name, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(ErrorKind::Internal, "StoreError", message)
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: self.name.to_string(),
            message: self.message.clone(),
        }
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        let kind = match e {
            DataError::Io(_) => ErrorKind::Internal,
            _ => ErrorKind::Invalid,
        };
        ApiError::new(kind, e.name(), e.to_string())
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        let kind = match e {
            MetricsError::MissingPredictions | MetricsError::MissingLabels => ErrorKind::Conflict,
            _ => ErrorKind::Invalid,
        };
        ApiError::new(kind, e.name(), e.to_string())
    }
}

impl From<SimilarityError> for ApiError {
    fn from(e: SimilarityError) -> Self {
        let kind = match e {
            SimilarityError::UnknownCase(_) => ErrorKind::NotFound,
            SimilarityError::MissingPredictions => ErrorKind::Conflict,
            _ => ErrorKind::Invalid,
        };
        ApiError::new(kind, e.name(), e.to_string())
    }
}

impl From<ElicitationError> for ApiError {
    fn from(e: ElicitationError) -> Self {
        use ElicitationError::*;
        let kind = match e {
            UnknownDataset(_) => ErrorKind::NotFound,
            MissingPredictions(_) | SessionClosed | DuplicateResponse(_) | WrongStage { .. }
            | IncompleteStage(..) => ErrorKind::Conflict,
            _ => ErrorKind::Invalid,
        };
        ApiError::new(kind, e.name(), e.to_string())
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        let kind = match e {
            AnalysisError::EmptyMatrix(_) | AnalysisError::NoAnswers(..) => ErrorKind::Conflict,
            _ => ErrorKind::Invalid,
        };
        ApiError::new(kind, e.name(), e.to_string())
    }
}

impl From<TrainingError> for ApiError {
    fn from(e: TrainingError) -> Self {
        let kind = match e {
            TrainingError::NonFinite(_) => ErrorKind::Unprocessable,
            TrainingError::MissingLabels | TrainingError::EmptyDataset => ErrorKind::Conflict,
            _ => ErrorKind::Invalid,
        };
        ApiError::new(kind, e.name(), e.to_string())
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::invalid("JsonError", e.to_string())
    }
}
