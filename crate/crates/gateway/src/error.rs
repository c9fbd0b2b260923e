use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use bacip_core::credential::DocumentError;
use bacip_core::ledger::InvalidReason;
use bacip_core::node::NodeError;

use crate::auth::AuthError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ViolationBody {
    pub path: String,
    pub reason: String,
}

/// Error response: `{"error": <code>, "message": <text>, ...}`.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<ViolationBody>,
    /// Set when the request reached the ledger as a rejected transaction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            error,
            message: message.into(),
            violations: Vec::new(),
            tx_id: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "MalformedBody", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::FORBIDDEN, "Forbidden", message)
    }

    pub fn not_found(error: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, error, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn with_tx(mut self, tx_id: impl ToString) -> Self {
        self.tx_id = Some(tx_id.to_string());
        self
    }
}

pub fn reason_status(reason: &InvalidReason) -> StatusCode {
    use InvalidReason::*;
    match reason {
        SchemaViolation(_) | UnknownPermissionBits(_) => StatusCode::BAD_REQUEST,
        MissingPermission(_) | NotAdmin | NotSubject | NotCredentialIssuer | IssuerMismatch | UnknownSender => {
            StatusCode::FORBIDDEN
        }
        UnknownCredential => StatusCode::NOT_FOUND,
        DuplicateId | DuplicateTransaction | AlreadyRevoked | ConsentNotGiven | ConsentStillGiven => {
            StatusCode::CONFLICT
        }
        BadSignature | InvalidDocumentSignature => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<InvalidReason> for ApiError {
    fn from(reason: InvalidReason) -> Self {
        ApiError::new(reason_status(&reason), reason.code(), reason.to_string())
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, e.code(), e.to_string())
    }
}

impl From<DocumentError> for ApiError {
    fn from(e: DocumentError) -> Self {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "SchemaViolation", e.to_string());
        err.violations = e
            .violations()
            .iter()
            .map(|v| ViolationBody {
                path: v.path.clone(),
                reason: v.reason.to_string(),
            })
            .collect();
        err
    }
}

impl From<NodeError> for ApiError {
    fn from(e: NodeError) -> Self {
        match e {
            NodeError::Rejected(reason) => reason.into(),
            NodeError::Consensus(c) => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "ConsensusUnavailable", c.to_string()),
            NodeError::Document(d) => d.into(),
            NodeError::NoSigningKey(who) => ApiError::new(
                StatusCode::FORBIDDEN,
                "NoCustodialKey",
                format!("the gateway holds no signing key for {who}"),
            ),
            other => {
                tracing::error!(error = %other, "request failed");
                ApiError::internal(other.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}
