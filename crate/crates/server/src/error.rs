use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dce_core::{EmbedError, SearchError, StoreError};
use serde::Serialize;

/// Error body: `{"error": "...", "parameter": "limit"}`.
#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    parameter: Option<&'a str>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub parameter: Option<&'static str>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            parameter: None,
        }
    }

    pub fn bad_param(parameter: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            parameter: Some(parameter),
        }
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "not found")
    }

    pub fn starting() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "collection is still loading")
    }

    pub fn internal(message: impl std::fmt::Display) -> Self {
        tracing::error!("{message}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error")
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        let status = match &e {
            EmbedError::EmptyText => StatusCode::BAD_REQUEST,
            EmbedError::EmptyImage | EmbedError::Rejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::SERVICE_UNAVAILABLE,
        };
        if status == StatusCode::SERVICE_UNAVAILABLE {
            tracing::warn!("embedding provider: {e}");
        }
        Self::new(status, format!("embedding provider: {e}"))
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Limit { .. } => Self::bad_param("limit", e.to_string()),
            // The provider returned something unusable as a query.
            other => Self::new(StatusCode::SERVICE_UNAVAILABLE, format!("embedding provider: {other}")),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            parameter: self.parameter,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Failures that stop the server.
#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("loading collection: {0}")]
    Load(#[from] StoreError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
    #[error("collection loader crashed: {0}")]
    Loader(String),
}
