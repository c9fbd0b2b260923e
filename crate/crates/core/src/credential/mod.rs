//! Credential document model.

mod document;
mod id;
mod schema;

pub use document::{
    canonicalize, temporal_status, CredentialDocument, IsoInstant, Recipient, ValidityStatus,
};
pub use id::{CredentialId, Did, IdError, PointerId};
pub use schema::{
    is_uri_or_did, parse_issue_request, parse_value, validate_document, validate_issue_request,
    DocumentError, IssueRequest, Violation, ViolationReason, DEFAULT_CONTEXT,
};

use rand::RngCore;

/// Draws a fresh credential id.
pub fn generate_credential_id<R: RngCore + ?Sized>(rng: &mut R) -> CredentialId {
    CredentialId::generate(rng)
}
