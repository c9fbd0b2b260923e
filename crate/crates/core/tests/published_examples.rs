//! The published metadata, verifiable-credential and issue-request examples
//! parse, and each required field of the request schema is enforced at the
//! right path.

use bacip_core::credential::{
    parse_issue_request, validate_document, validate_issue_request, ViolationReason,
};
use bacip_core::crypto::{Proof, ProofType};
use serde_json::Value;

const METADATA: &str = include_str!("data/metadata_example.json");
const VC: &str = include_str!("data/vc_example.json");
const REQUEST: &str = include_str!("data/issue_request_example.json");
const SIGNATURE: &str = include_str!("data/signature_example.json");

#[test]
fn metadata_example() {
    let doc = validate_document(METADATA.as_bytes()).unwrap();
    assert_eq!(doc.context, "https://schema.org");
    assert_eq!(doc.credential_type, "EducationalOccupationalCredential");
    assert_eq!(doc.issuer, "https://university.example.edu");
    assert_eq!(doc.recipient.id.to_string(), "did:example:abcdef");
    assert_eq!(doc.recipient.name.as_deref(), Some("Juan Pérez"));
    assert_eq!(doc.credential_subject["degree"], "MSc Computer Science");
    assert_eq!(doc.issue_date.as_str(), "2021-05-01");
    assert_eq!(doc.expiration_date.as_ref().unwrap().as_str(), "2026-05-01");
    let proof = doc.proof.unwrap();
    assert_eq!(proof.proof_type, ProofType::Es256);
    assert_eq!(proof.signature_value, "base64EncodedSignatureValueHere");
    assert!(doc.id.is_none());
}

#[test]
fn verifiable_credential_example() {
    let doc = validate_document(VC.as_bytes()).unwrap();
    assert_eq!(doc.context, "https://www.w3.org/2018/credentials/v1");
    assert_eq!(doc.credential_type, "VerifiableCredential");
    assert_eq!(doc.external_id.as_deref(), Some("did:example:123"));
    assert_eq!(doc.issuer, "did:example:456");
    assert_eq!(doc.recipient.id.to_string(), "did:example:789");
    assert_eq!(doc.issue_date.as_str(), "2020-04-22T11:52:25Z");
    assert_eq!(
        doc.credential_subject["degree"],
        "Bachelor of Science in Blockchain Technology"
    );
    let proof = doc.proof.unwrap();
    assert_eq!(proof.proof_type, ProofType::Unsupported("RsaSignature2018".into()));
    assert_eq!(proof.verification_method.as_deref(), Some("https://example.edu/keys/1"));
}

#[test]
fn signature_object_example() {
    let proof: Proof = serde_json::from_str(SIGNATURE).unwrap();
    assert_eq!(proof.proof_type, ProofType::Es256);
    assert_eq!(proof.signature_value, "Base64EncodedSignature");
}

#[test]
fn issue_request_example() {
    let req = validate_issue_request(REQUEST.as_bytes()).unwrap();
    assert_eq!(req.issuer, "https://university.example.edu");
    assert_eq!(req.recipient_id.to_string(), "did:example:123");
    assert_eq!(req.recipient_name.as_deref(), Some("John Doe"));
    assert_eq!(req.credential_type, "Diploma");
}

#[test]
fn each_required_request_field_is_reported_at_its_path() {
    let full: Value = serde_json::from_str(REQUEST).unwrap();
    for (parent, field) in [
        ("", "issuer"),
        ("", "recipient"),
        ("", "credential"),
        ("/recipient", "id"),
        ("/credential", "type"),
        ("/credential", "course"),
    ] {
        let mut v = full.clone();
        v.pointer_mut(parent).unwrap().as_object_mut().unwrap().remove(field);
        let err = parse_issue_request(&v).unwrap_err();
        let got: Vec<_> = err.violations().iter().map(|x| (x.path.as_str(), x.reason.clone())).collect();
        assert_eq!(got, vec![(format!("{parent}/{field}").as_str(), ViolationReason::Required)]);
    }
}

#[test]
fn optional_request_name_may_be_omitted() {
    let mut v: Value = serde_json::from_str(REQUEST).unwrap();
    v["recipient"].as_object_mut().unwrap().remove("name");
    assert!(parse_issue_request(&v).is_ok());
}
