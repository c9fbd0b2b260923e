use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::Json;
use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use bacip_core::anchor::{InclusionProof, PublicAnchor};
use bacip_core::credential::{validate_document, validate_issue_request, CredentialId};
use bacip_core::ledger::{AuditEvent, AuditFilter, EventName, LedgerState, PermissionBits, RevocationKey, TxPayload};
use bacip_core::node::{ConsentAction, NodeError, RegistryNode};
use bacip_core::store::StoredRef;
use bacip_core::Hash32;

use crate::auth::{authenticate, bearer, Principal, Role};
use crate::error::ApiError;
use crate::Gateway;

pub const AUDIT_DEFAULT_LIMIT: usize = 100;
pub const AUDIT_MAX_LIMIT: usize = 1000;

type Shared = State<Arc<Gateway>>;

fn principal(gw: &Gateway, headers: &HeaderMap, state: &LedgerState) -> Result<Principal, ApiError> {
    let value = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
    Ok(authenticate(bearer(value)?, state, gw.now())?)
}

fn require(p: &Principal, role: Role, bits: PermissionBits) -> Result<(), ApiError> {
    if p.role != role {
        return Err(ApiError::forbidden(format!("requires role {}", role.as_str())));
    }
    if !p.permissions.contains(bits) {
        return Err(ApiError::forbidden(format!("{} lacks {bits:?}", p.did)));
    }
    Ok(())
}

/// Runs a blocking node operation off the async executor.
async fn blocking<T: Send + 'static>(
    node: &Arc<RegistryNode>,
    f: impl FnOnce(&RegistryNode) -> Result<T, NodeError> + Send + 'static,
) -> Result<T, ApiError> {
    let node = node.clone();
    tokio::task::spawn_blocking(move || f(&node))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

fn json_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn event_for(state: &LedgerState, tx_id: &Hash32) -> Option<AuditEvent> {
    state.audit_log().iter().rev().find(|e| e.tx_id == *tx_id).cloned()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IssueResponse {
    pub credential: Value,
    pub credential_id: CredentialId,
    pub tx_id: Hash32,
    pub height: u64,
    pub event: Option<AuditEvent>,
}

pub async fn issue(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Result<(StatusCode, Json<IssueResponse>), ApiError> {
    let p = principal(&gw, &headers, &gw.node.state())?;
    require(&p, Role::Issuer, PermissionBits::ISSUE)?;
    let request = validate_issue_request(&body)?;
    let (now, seal) = (gw.now(), gw.seal_payloads);
    let issuer = p.did.clone();
    let issued = blocking(&gw.node, move |n| n.issue(request, &issuer, seal, now)).await?;
    let credential_id = issued.document.id.clone().expect("issued documents carry an id");
    Ok((
        StatusCode::CREATED,
        Json(IssueResponse {
            credential: issued.document.to_json(),
            credential_id,
            tx_id: issued.tx_id,
            height: issued.height,
            event: issued.events.into_iter().next(),
        }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RevokeRequest {
    pub credential_id: String,
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RevokeResponse {
    pub credential_id: CredentialId,
    pub revoked: bool,
    pub already_revoked: bool,
    pub tx_id: Hash32,
    pub event: Option<AuditEvent>,
}

pub async fn revoke(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Result<Json<RevokeResponse>, ApiError> {
    let state = gw.node.state();
    let p = principal(&gw, &headers, &state)?;
    require(&p, Role::Issuer, PermissionBits::REVOKE)?;
    let req: RevokeRequest = json_body(&body)?;
    let id: CredentialId = req.credential_id.parse().map_err(|e| ApiError::bad_request(format!("credentialId: {e}")))?;
    if state.credential(&id).is_none() {
        return Err(ApiError::not_found("UnknownCredential", format!("no credential {id}")));
    }
    if let Some(reason) = &req.reason {
        tracing::info!(credential = %id, reason, "revocation requested");
    }
    let now = gw.now();
    let revoker = p.did.clone();
    let key = RevocationKey::of(&id);
    let (tx_id, result) = blocking(&gw.node, move |n| {
        let tx = n.sign_tx(&revoker, TxPayload::RevokeCredential { key }, now)?;
        let report = n.submit(vec![tx.clone()], now)?;
        Ok((tx.tx_id(), report.outcome(&tx).map(|_| ()).map_err(|e| e.rejection().cloned())))
    })
    .await?;
    let event = event_for(&gw.node.state(), &tx_id);
    let already_revoked = match result {
        Ok(()) => false,
        Err(Some(bacip_core::ledger::InvalidReason::AlreadyRevoked)) => true,
        Err(Some(reason)) => return Err(ApiError::from(reason).with_tx(tx_id)),
        Err(None) => return Err(ApiError::internal("transaction missing from finalized blocks").with_tx(tx_id)),
    };
    Ok(Json(RevokeResponse {
        credential_id: id,
        revoked: true,
        already_revoked,
        tx_id,
        event,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsentVerb {
    Give,
    Withdraw,
    Delete,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsentRequest {
    pub action: ConsentVerb,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsentResponse {
    pub action: &'static str,
    pub subject: String,
    pub consent_given: Option<bool>,
    pub tx_id: Hash32,
    pub event: Option<AuditEvent>,
}

pub async fn consent(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Result<Json<ConsentResponse>, ApiError> {
    let p = principal(&gw, &headers, &gw.node.state())?;
    if p.role != Role::Student {
        return Err(ApiError::forbidden("consent is managed by the data subject"));
    }
    let req: ConsentRequest = json_body(&body)?;
    let (action, name) = match req.action {
        ConsentVerb::Give => (ConsentAction::Give, "give"),
        ConsentVerb::Withdraw => (ConsentAction::Withdraw, "withdraw"),
        ConsentVerb::Delete => (ConsentAction::Delete, "delete"),
    };
    let now = gw.now();
    let subject = p.did.clone();
    let outcome = blocking(&gw.node, move |n| n.consent(&subject, action, now)).await?;
    Ok(Json(ConsentResponse {
        action: name,
        subject: p.did.to_string(),
        consent_given: gw.node.state().consent(&p.did),
        tx_id: outcome.tx_id,
        event: outcome.events.into_iter().next(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyResponse {
    pub status: String,
    pub credential_id: Option<String>,
    pub checked_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_proof: Option<InclusionProof>,
}

fn anchor_proof(node: &RegistryNode, state: &LedgerState, id: &CredentialId) -> Option<InclusionProof> {
    state.credential(id)?;
    node.inclusion_proof(id).ok().map(|(proof, _)| proof)
}

/// Status of a registered credential looked up by id. The stored document
/// is re-verified when it is still readable; after erasure only the
/// revocation registry is consulted.
pub fn status_by_id(node: &RegistryNode, state: &LedgerState, id: &CredentialId, now: chrono::DateTime<chrono::Utc>) -> &'static str {
    let Some(record) = state.credential(id) else {
        return "unknown";
    };
    if state.is_revoked(&RevocationKey::of(id)) {
        return "revoked";
    }
    let stored = StoredRef {
        address: record.content_address,
        sealed: record.sealed,
    };
    match node.fetch(&stored).ok().and_then(|bytes| validate_document(&bytes).ok()) {
        Some(doc) => state.verify_credential(&doc, now).as_str(),
        None => "valid",
    }
}

pub async fn verify(State(gw): Shared, body: Bytes) -> Result<Json<VerifyResponse>, ApiError> {
    let value: Value = json_body(&body)?;
    let Value::Object(fields) = &value else {
        return Err(ApiError::bad_request("body must be a JSON object"));
    };
    let state = gw.node.state();
    let now = gw.now();
    let checked_at = now.to_rfc3339_opts(SecondsFormat::Secs, true);
    let node = gw.node.clone();

    if fields.len() == 1 && fields.contains_key("credentialId") {
        let id: CredentialId = fields["credentialId"]
            .as_str()
            .ok_or_else(|| ApiError::bad_request("credentialId must be a string"))?
            .parse()
            .map_err(|e| ApiError::bad_request(format!("credentialId: {e}")))?;
        if state.credential(&id).is_none() {
            return Err(ApiError::not_found("UnknownCredential", format!("no credential {id}")));
        }
        let response = tokio::task::spawn_blocking(move || VerifyResponse {
            status: status_by_id(&node, &state, &id, now).to_string(),
            anchor_proof: anchor_proof(&node, &state, &id),
            credential_id: Some(id.to_string()),
            checked_at,
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?;
        return Ok(Json(response));
    }

    let status = state.verify_credential_json(&body, now);
    let id = fields
        .get("id")
        .and_then(Value::as_str)
        .and_then(|s| s.parse::<CredentialId>().ok());
    let response = tokio::task::spawn_blocking(move || VerifyResponse {
        status: status.as_str().to_string(),
        anchor_proof: id.as_ref().and_then(|id| anchor_proof(&node, &state, id)),
        credential_id: id.map(|i| i.to_string()),
        checked_at,
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(response))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AuditQuery {
    pub event_name: Option<String>,
    pub subject: Option<String>,
    pub from_height: Option<u64>,
    pub to_height: Option<u64>,
    pub limit: Option<usize>,
}

#[derive(Serialize)]
pub struct AuditResponse {
    pub total: usize,
    pub events: Vec<AuditEvent>,
}

pub async fn audit(State(gw): Shared, headers: HeaderMap, Query(q): Query<AuditQuery>) -> Result<Json<AuditResponse>, ApiError> {
    let state = gw.node.state();
    let p = principal(&gw, &headers, &state)?;
    if !p.permissions.contains(PermissionBits::VERIFY) && !p.permissions.contains(PermissionBits::ADMIN) {
        return Err(ApiError::forbidden("audit access requires VERIFY or ADMIN"));
    }
    let event_name = q
        .event_name
        .as_deref()
        .map(str::parse::<EventName>)
        .transpose()
        .map_err(ApiError::bad_request)?;
    let filter = AuditFilter {
        event_name,
        subject: q.subject,
        from_height: q.from_height,
        to_height: q.to_height,
    };
    let mut events = state.audit_query(&filter);
    let total = events.len();
    events.truncate(q.limit.unwrap_or(AUDIT_DEFAULT_LIMIT).min(AUDIT_MAX_LIMIT));
    Ok(Json(AuditResponse { total, events }))
}

pub async fn anchor(State(gw): Shared, Path(index): Path<u64>) -> Result<Json<PublicAnchor>, ApiError> {
    gw.node
        .anchor(index)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("UnknownAnchor", format!("no anchor {index}")))
}
