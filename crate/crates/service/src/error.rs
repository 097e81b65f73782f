use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chromalens_core::{DomainError, PipelineError};
use serde::{Deserialize, Serialize};

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                kind: kind.to_string(),
                message: message.into(),
                request_id: None,
            },
        }
    }

    pub fn with_request_id(mut self, id: &str) -> Self {
        self.body.request_id = Some(id.to_string());
        self
    }

    pub fn kind(&self) -> &str {
        &self.body.kind
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn profile_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "profile_not_found", format!("no profile with id `{id}`"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

fn status_for(kind: &str) -> StatusCode {
    match kind {
        "empty_name" | "empty_utterance" | "invalid_image" | "unknown_cvd_type" => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        "payload_too_large" => StatusCode::PAYLOAD_TOO_LARGE,
        "timeout" => StatusCode::GATEWAY_TIMEOUT,
        "rate_limited" => StatusCode::SERVICE_UNAVAILABLE,
        "invalid_config" | "prompt_template_error" => StatusCode::INTERNAL_SERVER_ERROR,
        // Upstream, parse and validation failures: the model side misbehaved.
        _ => StatusCode::BAD_GATEWAY,
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let kind = e.kind();
        ApiError::new(status_for(kind), kind, e.to_string())
    }
}

impl From<DomainError> for ApiError {
    fn from(e: DomainError) -> Self {
        PipelineError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chromalens_core::{GatewayError, ParseError, ValidationError};

    #[test]
    fn statuses_by_kind() {
        let cases: Vec<(PipelineError, StatusCode, &str)> = vec![
            (DomainError::EmptyUtterance.into(), StatusCode::UNPROCESSABLE_ENTITY, "empty_utterance"),
            (
                DomainError::PayloadTooLarge { size: 2, limit: 1 }.into(),
                StatusCode::PAYLOAD_TOO_LARGE,
                "payload_too_large",
            ),
            (GatewayError::Timeout { attempts: 3 }.into(), StatusCode::GATEWAY_TIMEOUT, "timeout"),
            (GatewayError::AuthFailure { status: 401 }.into(), StatusCode::BAD_GATEWAY, "auth_failure"),
            (ParseError::NoJsonFound.into(), StatusCode::BAD_GATEWAY, "no_json_found"),
            (
                ValidationError::WordLimitExceeded(12).into(),
                StatusCode::BAD_GATEWAY,
                "word_limit_exceeded",
            ),
        ];
        for (err, status, kind) in cases {
            let api = ApiError::from(err);
            assert_eq!(api.status, status, "{kind}");
            assert_eq!(api.kind(), kind);
        }
    }
}
