use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

use sampling_core::ingestion::IngestError;
use sampling_core::sequencer::SequencerError;
use sampling_core::store::StoreError;
use sampling_core::workflow::WorkflowError;

/// Response body: exactly one of `payload` and `error` is present.
#[derive(Debug, Serialize)]
pub struct ApiEnvelope<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

pub struct Reply<T>(pub StatusCode, pub T, pub Option<u64>);

impl<T: Serialize> IntoResponse for Reply<T> {
    fn into_response(self) -> Response {
        let body = ApiEnvelope {
            payload: Some(self.1),
            version: self.2,
            error: None,
        };
        (self.0, Json(body)).into_response()
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn bad_date(value: &str) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadDate", format!("`{value}` is not a YYYY-MM-DD date"))
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body: ApiEnvelope<()> = ApiEnvelope {
            payload: None,
            version: None,
            error: Some(ErrorBody {
                code: self.code,
                message: self.message,
                details: self.details,
            }),
        };
        (self.status, Json(body)).into_response()
    }
}

/// Stale versions surface as `Conflict`; every other engine error keeps its
/// own code.
impl From<WorkflowError> for ApiError {
    fn from(e: WorkflowError) -> Self {
        let message = e.to_string();
        match e {
            WorkflowError::StaleVersion { expected, actual } => {
                ApiError::new(StatusCode::CONFLICT, "Conflict", message).with_details(
                    serde_json::json!({ "expected_version": expected, "current_version": actual }),
                )
            }
            WorkflowError::UnknownTask(_)
            | WorkflowError::UnknownWorksheet(_)
            | WorkflowError::UnknownTarget(_) => {
                ApiError::new(StatusCode::NOT_FOUND, e.code(), message)
            }
            WorkflowError::UnauthorizedRole { .. } => {
                ApiError::new(StatusCode::FORBIDDEN, e.code(), message)
            }
            WorkflowError::IncompleteSampling { ref tasks } => {
                let details = serde_json::json!({ "tasks": tasks });
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), message)
                    .with_details(details)
            }
            _ => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), message),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let code = match e {
            IngestError::MalformedHeader { .. } => "MalformedHeader",
            IngestError::InvalidRecords(_) => "InvalidRecords",
            IngestError::Delimited(_) => "Unreadable",
            IngestError::Io { .. } => "Unreadable",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<SequencerError> for ApiError {
    fn from(e: SequencerError) -> Self {
        let code = match e {
            SequencerError::KTooLarge { .. } => "KTooLarge",
            SequencerError::ZeroClusters => "ZeroClusters",
            SequencerError::UnknownPoint(_) => "UnknownPoint",
            SequencerError::EmptyCluster => "NoTasks",
            SequencerError::TooLarge(_) => "TooLarge",
            SequencerError::InvalidPenalty(_) => "InvalidPenalty",
        };
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

/// Every error code the API can emit, with its HTTP status.
pub const ERROR_CODES: &[(&str, u16)] = &[
    ("BadRequest", 400),
    ("BadDate", 400),
    ("MissingRole", 400),
    ("EmptyBody", 400),
    ("NotFound", 404),
    ("UnknownTask", 404),
    ("UnknownWorksheet", 404),
    ("UnknownTarget", 404),
    ("NoTasks", 404),
    ("UnauthorizedRole", 403),
    ("Conflict", 409),
    ("StatusRegression", 422),
    ("ClockSkew", 422),
    ("WrongPhase", 422),
    ("EmptyCheckIn", 422),
    ("UnknownStep", 422),
    ("PhaseSkip", 422),
    ("IncompleteSampling", 422),
    ("EmptyText", 422),
    ("UnknownAction", 422),
    ("DuplicateTask", 422),
    ("InvalidNewTask", 422),
    ("MalformedHeader", 422),
    ("InvalidRecords", 422),
    ("Unreadable", 422),
    ("KTooLarge", 422),
    ("ZeroClusters", 422),
    ("UnknownPoint", 422),
    ("TooLarge", 422),
    ("InvalidPenalty", 422),
    ("Internal", 500),
];
