use alloop_core::data::DataError;
use alloop_core::engine::EngineError;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::Value;

/// Error body shared by every endpoint: `{code, message, detail}`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_owned(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "NOT_FOUND",
            format!("unknown {what} {id}"),
        )
        .with_detail(serde_json::json!({ what: id }))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }

    /// Upload-time parse failures are the client's fault.
    pub fn from_upload(e: &DataError) -> Self {
        let status = match e {
            DataError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.code(), e.to_string())
    }

    /// Malformed JSON is a 400; well-formed JSON of the wrong shape is a 422.
    pub fn from_json(e: &serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => {
                Self::new(StatusCode::BAD_REQUEST, "INVALID_JSON", e.to_string())
            }
            Category::Data => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "INVALID_CONFIG",
                e.to_string(),
            ),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::WrongPhase { .. } => StatusCode::CONFLICT,
            EngineError::Persist(_) => StatusCode::INTERNAL_SERVER_ERROR,
            EngineError::Data(DataError::Io { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let detail = match &e {
            EngineError::WrongPhase { expected, actual } => {
                serde_json::json!({ "expected": expected, "actual": actual })
            }
            EngineError::UnexpectedSample(id) => serde_json::json!({ "sample_id": id }),
            EngineError::InvalidLabel {
                id,
                label,
                class_count,
            } => {
                serde_json::json!({ "sample_id": id, "label": label, "class_count": class_count })
            }
            _ => Value::Null,
        };
        Self::new(status, e.code(), e.to_string()).with_detail(detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
