mod common;

use axum::http::{Method, StatusCode};
use base64::engine::general_purpose::{STANDARD, URL_SAFE_NO_PAD};
use base64::Engine;
use bacip_gateway::auth::{mint_token, Claims, Role};
use common::{issue_request, Harness, START};
use serde_json::{json, Value};

async fn issue(h: &Harness) -> Value {
    let r = h.post("/issueCredential", Some(&h.token(Role::Issuer)), &issue_request()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
    r.body
}

#[tokio::test]
async fn issue_returns_a_signed_document_recorded_in_the_audit_log() {
    let h = Harness::new(1);
    let body = issue(&h).await;
    let doc = &body["credential"];
    assert_eq!(doc["credentialSubject"]["course"], "BSc Computer Science");
    assert_eq!(doc["recipient"]["id"], "did:example:123");
    assert_eq!(doc["issueDate"], "2024-01-01");
    assert_eq!(doc["id"], body["credentialId"]);
    assert_eq!(doc["proof"]["type"], "ES256");

    let audit = h
        .call(Method::GET, "/audit?eventName=CredentialIssued", Some(&h.token(Role::Verifier)), None)
        .await;
    assert_eq!(audit.status, StatusCode::OK, "{}", audit.raw);
    let events = audit.body["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0]["txId"], body["txId"]);
    assert_eq!(events[0]["subject"], body["credentialId"]);
}

#[tokio::test]
async fn schema_violations_name_the_missing_path() {
    let h = Harness::new(1);
    let mut req = issue_request();
    req["recipient"].as_object_mut().unwrap().remove("id");
    let r = h.post("/issueCredential", Some(&h.token(Role::Issuer)), &req).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["violations"][0]["path"], "/recipient/id");
    let r = h.call_raw(Method::POST, "/issueCredential", Some(&h.token(Role::Issuer)), Some("{".into())).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn verify_tracks_the_credential_lifecycle() {
    let h = Harness::new(1);
    let body = issue(&h).await;
    let doc = body["credential"].clone();
    let id = body["credentialId"].clone();

    let r = h.post("/verifyCredential", None, &doc).await;
    assert_eq!(r.body["status"], "valid", "{}", r.raw);
    assert_eq!(r.body["anchorProof"]["credentialId"], id);

    let by_id = h.post("/verifyCredential", None, &json!({"credentialId": id})).await;
    assert_eq!(by_id.body["status"], "valid", "{}", by_id.raw);
    let index = by_id.body["anchorProof"]["anchorIndex"].as_u64().unwrap();
    let anchor = h.call(Method::GET, &format!("/anchors/{index}"), None, None).await;
    assert_eq!(anchor.status, StatusCode::OK);
    assert_eq!(anchor.body["anchorIndex"].as_u64(), Some(index));

    let mut tampered = doc.clone();
    tampered["credentialSubject"]["course"] = json!("PhD Computer Science");
    assert_eq!(h.post("/verifyCredential", None, &tampered).await.body["status"], "invalid_signature");

    let revoke = h
        .post("/revokeCredential", Some(&h.token(Role::Issuer)), &json!({"credentialId": id, "reason": "error"}))
        .await;
    assert_eq!(revoke.status, StatusCode::OK, "{}", revoke.raw);
    assert_eq!(revoke.body["alreadyRevoked"], false);
    assert_eq!(revoke.body["event"]["eventName"], "CertificateRevoked");
    assert_eq!(h.post("/verifyCredential", None, &doc).await.body["status"], "revoked");
    assert_eq!(h.post("/verifyCredential", None, &json!({"credentialId": id})).await.body["status"], "revoked");

    let again = h.post("/revokeCredential", Some(&h.token(Role::Issuer)), &json!({"credentialId": id})).await;
    assert_eq!(again.status, StatusCode::OK);
    assert_eq!(again.body["alreadyRevoked"], true);
    assert_eq!(again.body["event"]["eventName"], "TxRejected");
}

#[tokio::test]
async fn verify_reports_structural_problems() {
    let h = Harness::new(1);
    let r = h.post("/verifyCredential", None, &json!({"issuer": 7})).await;
    assert_eq!((r.status, r.body["status"].as_str()), (StatusCode::OK, Some("malformed")));
    assert_eq!(h.call_raw(Method::POST, "/verifyCredential", None, Some("[1".into())).await.status, StatusCode::BAD_REQUEST);
    let unknown = json!({"credentialId": "3b241101-e2bb-4255-8caf-4136c566a962"});
    assert_eq!(h.post("/verifyCredential", None, &unknown).await.status, StatusCode::NOT_FOUND);
    assert_eq!(h.post("/verifyCredential", None, &json!({"credentialId": "nope"})).await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn expiry_follows_the_clock() {
    let h = Harness::new(1);
    let mut req = issue_request();
    req["expirationDate"] = json!("2025-01-01");
    let r = h.post("/issueCredential", Some(&h.token(Role::Issuer)), &req).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
    let doc = r.body["credential"].clone();
    assert_eq!(h.post("/verifyCredential", None, &doc).await.body["status"], "valid");
    h.set_time(START + 400 * 86_400);
    assert_eq!(h.post("/verifyCredential", None, &doc).await.body["status"], "expired");
}

#[tokio::test]
async fn revoke_of_unknown_credential_is_not_found() {
    let h = Harness::new(1);
    let r = h
        .post(
            "/revokeCredential",
            Some(&h.token(Role::Issuer)),
            &json!({"credentialId": "3b241101-e2bb-4255-8caf-4136c566a962"}),
        )
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn consent_guards_and_erasure() {
    let h = Harness::new(1);
    let body = issue(&h).await;
    let id = body["credentialId"].clone();
    let student = h.token(Role::Student);
    let consent = |action: &'static str| {
        let student = student.clone();
        let h = &h;
        async move { h.post("/consent", Some(&student), &json!({"action": action})).await }
    };

    let r = consent("withdraw").await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::CONFLICT, Some("ConsentNotGiven")));
    assert!(r.body["txId"].is_null());
    assert_eq!(consent("give").await.status, StatusCode::OK);
    let r = consent("delete").await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::CONFLICT, Some("ConsentStillGiven")));
    let r = consent("withdraw").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["consentGiven"], false);
    let r = consent("delete").await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
    assert_eq!(r.body["event"]["eventName"], "DataDeleted");

    let state = h.gateway.node.state();
    let cid = id.as_str().unwrap().parse().unwrap();
    let record = state.credential(&cid).expect("ledger record survives erasure");
    assert!(!h.gateway.node.store().contains(&record.content_address));
    let by_id = h.post("/verifyCredential", None, &json!({"credentialId": id})).await;
    assert_eq!(by_id.body["status"], "valid");
    assert_eq!(h.post("/consent", Some(&student), &json!({"action": "shred"})).await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn audit_filters_and_limits() {
    let h = Harness::new(1);
    for _ in 0..3 {
        issue(&h).await;
    }
    let token = h.token(Role::Verifier);
    let all = h.call(Method::GET, "/audit", Some(&token), None).await;
    assert_eq!(all.body["total"], 3);
    let limited = h.call(Method::GET, "/audit?limit=2", Some(&token), None).await;
    assert_eq!(limited.body["events"].as_array().unwrap().len(), 2);
    let ranged = h.call(Method::GET, "/audit?fromHeight=2&toHeight=2", Some(&token), None).await;
    assert_eq!(ranged.body["total"], 1);
    let bad = h.call(Method::GET, "/audit?eventName=Nope", Some(&token), None).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(h.call(Method::GET, "/audit", None, None).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(
        h.call(Method::GET, "/audit", Some(&h.token(Role::Student)), None).await.status,
        StatusCode::FORBIDDEN
    );
    assert_eq!(h.call(Method::GET, "/anchors/999", None, None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn lost_quorum_is_unavailable() {
    let h = Harness::new(4);
    issue(&h).await;
    h.gateway.node.set_validator_online(1, false);
    h.gateway.node.set_validator_online(2, false);
    let r = h.post("/issueCredential", Some(&h.token(Role::Issuer)), &issue_request()).await;
    assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE, "{}", r.raw);
    h.gateway.node.set_validator_online(2, true);
    let r = h.post("/issueCredential", Some(&h.token(Role::Issuer)), &issue_request()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
}

#[tokio::test]
async fn verify_never_changes_state() {
    let h = Harness::new(1);
    let body = issue(&h).await;
    let before = h.gateway.node.state();
    let (root, log) = (before.state_commitment(), before.audit_log().len());
    let mut doc = body["credential"].clone();
    for i in 0..20 {
        h.post("/verifyCredential", None, &doc).await;
        h.post("/verifyCredential", None, &json!({"credentialId": body["credentialId"]})).await;
        doc["recipient"]["name"] = json!(format!("Name {i}"));
    }
    let after = h.gateway.node.state();
    assert_eq!(after.state_commitment(), root);
    assert_eq!(after.audit_log().len(), log);
    assert_eq!(h.gateway.node.anchors().len(), 1);
}

#[tokio::test]
async fn responses_never_carry_key_material() {
    let h = Harness::new(1);
    let mut bodies = Vec::new();
    let body = issue(&h).await;
    bodies.push(body.to_string());
    let id = body["credentialId"].clone();
    for r in [
        h.post("/verifyCredential", None, &body["credential"]).await,
        h.post("/verifyCredential", None, &json!({"credentialId": id})).await,
        h.post("/revokeCredential", Some(&h.token(Role::Issuer)), &json!({"credentialId": id})).await,
        h.post("/consent", Some(&h.token(Role::Student)), &json!({"action": "give"})).await,
        h.call(Method::GET, "/audit", Some(&h.token(Role::Verifier)), None).await,
        h.call(Method::GET, "/anchors/0", None, None).await,
        h.post("/issueCredential", Some("garbage"), &issue_request()).await,
    ] {
        bodies.push(r.raw);
    }
    let cid = id.as_str().unwrap().parse().unwrap();
    let record = h.gateway.node.state().credential(&cid).unwrap().clone();
    let blob_key = h
        .gateway
        .node
        .with_keystore(|ks| ks.blob_key(&record.content_address))
        .expect("payload was sealed");
    let mut secrets: Vec<Vec<u8>> = vec![blob_key.to_vec()];
    for role in Role::ALL {
        secrets.push(h.actor(role).key.secret_bytes().to_vec());
    }
    for secret in &secrets {
        let forms = [hex::encode(secret), STANDARD.encode(secret), URL_SAFE_NO_PAD.encode(secret)];
        for body in &bodies {
            for form in &forms {
                assert!(!body.contains(form.as_str()), "secret leaked in {body}");
            }
        }
    }
}

#[tokio::test]
async fn forged_claims_do_not_elevate() {
    let h = Harness::new(1);
    // The student's own key cannot mint an issuer: permission bits come from the ledger.
    let s = &h.student;
    let token = mint_token(&Claims::new(s.subject.clone(), "x", Role::Issuer, START), &s.key).unwrap();
    let r = h.post("/issueCredential", Some(&token), &issue_request()).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    let token = mint_token(&Claims::new(h.issuer.subject.clone(), "x", Role::Issuer, START), &h.outsider).unwrap();
    let r = h.post("/issueCredential", Some(&token), &issue_request()).await;
    assert_eq!((r.status, r.body["error"].as_str()), (StatusCode::UNAUTHORIZED, Some("BadSignature")));
}
