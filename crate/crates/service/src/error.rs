use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] lit_tag_core::Error),
    #[error("no database named {0:?}")]
    UnknownDatabase(String),
    #[error("database {name:?} has no version {file:?}")]
    UnknownVersion { name: String, file: String },
    #[error("database {0:?} already exists")]
    DatabaseExists(String),
    #[error("invalid database name {0:?}")]
    InvalidName(String),
    #[error("timed out waiting to write {0:?}")]
    WriterBusy(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Core(e) => e.code(),
            ServiceError::UnknownDatabase(_) => "UnknownDatabase",
            ServiceError::UnknownVersion { .. } => "UnknownVersion",
            ServiceError::DatabaseExists(_) => "DatabaseExists",
            ServiceError::InvalidName(_) => "InvalidName",
            ServiceError::WriterBusy(_) => "WriterBusy",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Storage(_) => "StorageError",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Core(lit_tag_core::Error::UnknownKey(_)) => StatusCode::NOT_FOUND,
            ServiceError::Core(_) | ServiceError::InvalidName(_) | ServiceError::BadRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::UnknownDatabase(_) | ServiceError::UnknownVersion { .. } => StatusCode::NOT_FOUND,
            ServiceError::DatabaseExists(_) | ServiceError::WriterBusy(_) => StatusCode::CONFLICT,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub(crate) fn storage(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        ServiceError::Storage(format!("{context}: {err}"))
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code(), "detail": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}
