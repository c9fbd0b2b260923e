//! Schema validation for credential documents and issuance requests.
//!
//! Validation never stops at the first problem: every violation is reported
//! with a JSON-pointer path and a reason.
//!
//! Input alias table (W3C VC names accepted on input, normalised on output):
//!
//! | input                  | normalised to          |
//! |------------------------|------------------------|
//! | `type` (string/array)  | `@type` (last entry)   |
//! | `@context` (array)     | `@context` (first)     |
//! | `issuanceDate`         | `issueDate`            |
//! | `credentialSubject.id` | `recipient.id`         |
//! | `signature`            | `proof`                |
//! | `proof.jws`            | `proof.signatureValue` |
//! | non-UUID `id`          | `externalId`           |

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{Map, Value};

use super::document::{CredentialDocument, IsoInstant, Recipient};
use super::id::{CredentialId, Did};
use crate::crypto::{Proof, ProofType};

pub const DEFAULT_CONTEXT: &str = "https://schema.org";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationReason {
    Required,
    WrongType { expected: &'static str },
    InvalidFormat { expected: &'static str },
    NestedValue,
    MissingQualification,
    DateOrder,
}

impl fmt::Display for ViolationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationReason::Required => f.write_str("required"),
            ViolationReason::WrongType { expected } => write!(f, "expected {expected}"),
            ViolationReason::InvalidFormat { expected } => write!(f, "invalid {expected}"),
            ViolationReason::NestedValue => f.write_str("nested values are not allowed"),
            ViolationReason::MissingQualification => {
                f.write_str("must contain \"degree\" or \"course\"")
            }
            ViolationReason::DateOrder => f.write_str("issueDate must precede expirationDate"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub reason: ViolationReason,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {}", join(.0))]
    SchemaViolation(Vec<Violation>),
}

impl DocumentError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            DocumentError::SchemaViolation(v) => v,
            DocumentError::MalformedJson(_) => &[],
        }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Default)]
struct Collector {
    violations: Vec<Violation>,
}

impl Collector {
    fn push(&mut self, path: impl Into<String>, reason: ViolationReason) {
        self.violations.push(Violation {
            path: path.into(),
            reason,
        });
    }

    fn string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key) {
            None | Some(Value::Null) => {
                self.push(path, ViolationReason::Required);
                None
            }
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(path, ViolationReason::WrongType { expected: "string" });
                None
            }
        }
    }

    fn opt_string(&mut self, obj: &Map<String, Value>, key: &str, path: &str) -> Option<String> {
        match obj.get(key) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                self.push(path, ViolationReason::WrongType { expected: "string" });
                None
            }
        }
    }

    fn object<'v>(
        &mut self,
        obj: &'v Map<String, Value>,
        key: &str,
        path: &str,
        required: bool,
    ) -> Option<&'v Map<String, Value>> {
        match obj.get(key) {
            None | Some(Value::Null) => {
                if required {
                    self.push(path, ViolationReason::Required);
                }
                None
            }
            Some(Value::Object(m)) => Some(m),
            Some(_) => {
                self.push(path, ViolationReason::WrongType { expected: "object" });
                None
            }
        }
    }

    fn date(&mut self, raw: Option<String>, path: &str) -> Option<IsoInstant> {
        let raw = raw?;
        let parsed = IsoInstant::parse(&raw);
        if parsed.is_none() {
            self.push(path, ViolationReason::InvalidFormat { expected: "ISO-8601 date" });
        }
        parsed
    }

    fn did(&mut self, raw: Option<String>, path: &str) -> Option<Did> {
        let raw = raw?;
        match raw.parse() {
            Ok(d) => Some(d),
            Err(_) => {
                self.push(path, ViolationReason::InvalidFormat { expected: "did" });
                None
            }
        }
    }

    fn finish<T>(self, value: Option<T>) -> Result<T, DocumentError> {
        match value {
            Some(v) if self.violations.is_empty() => Ok(v),
            _ => Err(DocumentError::SchemaViolation(self.violations)),
        }
    }
}

/// Absolute URI (`scheme:rest`) or DID.
pub fn is_uri_or_did(s: &str) -> bool {
    if s.parse::<Did>().is_ok() {
        return true;
    }
    !s.chars().any(char::is_whitespace) && url::Url::parse(s).is_ok()
}

/// `type` may be a string or an array of strings; arrays yield their last
/// (most specific) entry.
fn string_or_array(v: &Value, c: &mut Collector, path: &str, take_last: bool) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) if !items.is_empty() && items.iter().all(Value::is_string) => {
            let pick = if take_last { items.last() } else { items.first() };
            pick.and_then(Value::as_str).map(str::to_string)
        }
        _ => {
            c.push(path, ViolationReason::WrongType { expected: "string" });
            None
        }
    }
}

fn parse_proof(v: &Value, path: &str, c: &mut Collector) -> Option<Proof> {
    let Some(obj) = v.as_object() else {
        c.push(path, ViolationReason::WrongType { expected: "object" });
        return None;
    };
    let proof_type = c.string(obj, "type", &format!("{path}/type"));
    let created = c.opt_string(obj, "created", &format!("{path}/created"));
    let verification_method =
        c.opt_string(obj, "verificationMethod", &format!("{path}/verificationMethod"));
    let signature_value = if obj.contains_key("signatureValue") || !obj.contains_key("jws") {
        c.string(obj, "signatureValue", &format!("{path}/signatureValue"))
    } else {
        c.string(obj, "jws", &format!("{path}/jws"))
    };
    Some(Proof {
        proof_type: ProofType::parse(&proof_type?),
        created,
        verification_method,
        signature_value: signature_value?,
    })
}

/// Parses an already-decoded JSON value into a document.
pub fn parse_value(value: &Value) -> Result<CredentialDocument, DocumentError> {
    let mut c = Collector::default();
    let Some(obj) = value.as_object() else {
        c.push("", ViolationReason::WrongType { expected: "object" });
        return c.finish(None);
    };

    let context = match obj.get("@context") {
        None | Some(Value::Null) => {
            c.push("/@context", ViolationReason::Required);
            None
        }
        Some(v) => string_or_array(v, &mut c, "/@context", false),
    };

    let credential_type = match (obj.get("@type"), obj.get("type")) {
        (Some(v), _) => string_or_array(v, &mut c, "/@type", true),
        (None, Some(v)) => string_or_array(v, &mut c, "/type", true),
        (None, None) => {
            c.push("/@type", ViolationReason::Required);
            None
        }
    };

    let mut id = None;
    let mut external_id = c.opt_string(obj, "externalId", "/externalId");
    match obj.get("id") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) => match s.parse::<CredentialId>() {
            Ok(parsed) => id = Some(parsed),
            Err(_) if is_uri_or_did(s) && external_id.is_none() => external_id = Some(s.clone()),
            Err(_) => c.push("/id", ViolationReason::InvalidFormat { expected: "UUIDv4" }),
        },
        Some(_) => c.push("/id", ViolationReason::WrongType { expected: "string" }),
    }

    let issuer = c.string(obj, "issuer", "/issuer");
    if let Some(i) = &issuer {
        if !is_uri_or_did(i) {
            c.push("/issuer", ViolationReason::InvalidFormat { expected: "URI or DID" });
        }
    }

    let mut subject = BTreeMap::new();
    let subject_obj = c.object(obj, "credentialSubject", "/credentialSubject", true);
    if let Some(map) = subject_obj {
        for (k, v) in map {
            match v {
                Value::String(s) => {
                    subject.insert(k.clone(), s.clone());
                }
                Value::Object(_) | Value::Array(_) => {
                    c.push(format!("/credentialSubject/{k}"), ViolationReason::NestedValue)
                }
                _ => c.push(
                    format!("/credentialSubject/{k}"),
                    ViolationReason::WrongType { expected: "string" },
                ),
            }
        }
    }

    let recipient = match c.object(obj, "recipient", "/recipient", false) {
        Some(r) => {
            let rid = c.string(r, "id", "/recipient/id");
            let rid = c.did(rid, "/recipient/id");
            let name = c.opt_string(r, "name", "/recipient/name");
            let kind = c.opt_string(r, "type", "/recipient/type");
            rid.map(|id| Recipient { id, name, kind })
        }
        None if obj.contains_key("recipient") && !obj["recipient"].is_null() => None,
        None => {
            // VC layout: the holder is credentialSubject.id.
            match subject.remove("id") {
                Some(raw) => {
                    c.did(Some(raw), "/credentialSubject/id")
                        .map(|id| Recipient { id, name: None, kind: None })
                }
                None => {
                    c.push("/recipient", ViolationReason::Required);
                    None
                }
            }
        }
    };

    if subject_obj.is_some() && !subject.contains_key("degree") && !subject.contains_key("course")
    {
        c.push("/credentialSubject", ViolationReason::MissingQualification);
    }

    let issue_date = if obj.contains_key("issueDate") || !obj.contains_key("issuanceDate") {
        let raw = c.string(obj, "issueDate", "/issueDate");
        c.date(raw, "/issueDate")
    } else {
        let raw = c.string(obj, "issuanceDate", "/issuanceDate");
        c.date(raw, "/issuanceDate")
    };
    let expiration_raw = c.opt_string(obj, "expirationDate", "/expirationDate");
    let expiration_date = c.date(expiration_raw, "/expirationDate");
    if let (Some(i), Some(e)) = (&issue_date, &expiration_date) {
        if i.instant() >= e.instant() {
            c.push("/expirationDate", ViolationReason::DateOrder);
        }
    }

    let proof = match (obj.get("proof"), obj.get("signature")) {
        (Some(Value::Null), _) | (None, None) | (None, Some(Value::Null)) => None,
        (Some(p), _) => parse_proof(p, "/proof", &mut c),
        (None, Some(p)) => parse_proof(p, "/signature", &mut c),
    };

    let doc = (|| {
        Some(CredentialDocument {
            context: context?,
            credential_type: credential_type?,
            id,
            external_id,
            issuer: issuer?,
            recipient: recipient?,
            credential_subject: subject,
            issue_date: issue_date?,
            expiration_date,
            proof,
        })
    })();
    c.finish(doc)
}

/// Parses and validates a credential document from JSON text.
pub fn validate_document(raw: &[u8]) -> Result<CredentialDocument, DocumentError> {
    let value: Value =
        serde_json::from_slice(raw).map_err(|e| DocumentError::MalformedJson(e.to_string()))?;
    parse_value(&value)
}

/// Body of a credential issuance request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IssueRequest {
    pub issuer: String,
    pub recipient_id: Did,
    pub recipient_name: Option<String>,
    pub credential_type: String,
    /// `course` plus any further string members of `credential`.
    pub subject: BTreeMap<String, String>,
    pub id: Option<CredentialId>,
    pub expiration_date: Option<IsoInstant>,
    pub context: Option<String>,
}

/// Validates an issuance request body:
///
/// ```json
/// { "issuer": "<uri>", "recipient": { "name": "...", "id": "<did>" },
///   "credential": { "type": "...", "course": "..." } }
/// ```
///
/// `issuer`, `recipient` and `credential` are required, as are
/// `recipient.id`, `credential.type` and `credential.course`. Optional
/// members: `id` (UUIDv4), `expirationDate`, `@context`.
pub fn validate_issue_request(raw: &[u8]) -> Result<IssueRequest, DocumentError> {
    let value: Value =
        serde_json::from_slice(raw).map_err(|e| DocumentError::MalformedJson(e.to_string()))?;
    parse_issue_request(&value)
}

pub fn parse_issue_request(value: &Value) -> Result<IssueRequest, DocumentError> {
    let mut c = Collector::default();
    let Some(obj) = value.as_object() else {
        c.push("", ViolationReason::WrongType { expected: "object" });
        return c.finish(None);
    };
    let issuer = c.string(obj, "issuer", "/issuer");
    if let Some(i) = &issuer {
        if !is_uri_or_did(i) {
            c.push("/issuer", ViolationReason::InvalidFormat { expected: "uri" });
        }
    }
    let (recipient_id, recipient_name) =
        match c.object(obj, "recipient", "/recipient", true) {
            Some(r) => {
                let name = c.opt_string(r, "name", "/recipient/name");
                let id = c.string(r, "id", "/recipient/id");
                (c.did(id, "/recipient/id"), name)
            }
            None => (None, None),
        };
    let mut subject = BTreeMap::new();
    let credential_type = match c.object(obj, "credential", "/credential", true) {
        Some(cred) => {
            let t = c.string(cred, "type", "/credential/type");
            let course = c.string(cred, "course", "/credential/course");
            for (k, v) in cred {
                if k == "type" || k == "course" {
                    continue;
                }
                match v {
                    Value::String(s) => {
                        subject.insert(k.clone(), s.clone());
                    }
                    Value::Object(_) | Value::Array(_) => {
                        c.push(format!("/credential/{k}"), ViolationReason::NestedValue)
                    }
                    _ => c.push(
                        format!("/credential/{k}"),
                        ViolationReason::WrongType { expected: "string" },
                    ),
                }
            }
            if let Some(course) = course {
                subject.insert("course".to_string(), course);
            }
            t
        }
        None => None,
    };
    let id = match c.opt_string(obj, "id", "/id") {
        Some(s) => match s.parse::<CredentialId>() {
            Ok(id) => Some(id),
            Err(_) => {
                c.push("/id", ViolationReason::InvalidFormat { expected: "UUIDv4" });
                None
            }
        },
        None => None,
    };
    let exp_raw = c.opt_string(obj, "expirationDate", "/expirationDate");
    let expiration_date = c.date(exp_raw, "/expirationDate");
    let context = c.opt_string(obj, "@context", "/@context");

    let req = (|| {
        Some(IssueRequest {
            issuer: issuer?,
            recipient_id: recipient_id?,
            recipient_name,
            credential_type: credential_type?,
            subject,
            id,
            expiration_date,
            context,
        })
    })();
    c.finish(req)
}

impl IssueRequest {
    /// Builds the unsigned document for this request.
    pub fn into_document(
        self,
        id: CredentialId,
        issue_date: IsoInstant,
    ) -> Result<CredentialDocument, DocumentError> {
        if let Some(exp) = &self.expiration_date {
            if issue_date.instant() >= exp.instant() {
                return Err(DocumentError::SchemaViolation(vec![Violation {
                    path: "/expirationDate".into(),
                    reason: ViolationReason::DateOrder,
                }]));
            }
        }
        Ok(CredentialDocument {
            context: self.context.unwrap_or_else(|| DEFAULT_CONTEXT.to_string()),
            credential_type: self.credential_type,
            id: Some(id),
            external_id: None,
            issuer: self.issuer,
            recipient: Recipient {
                id: self.recipient_id,
                name: self.recipient_name,
                kind: None,
            },
            credential_subject: self.subject,
            issue_date,
            expiration_date: self.expiration_date,
            proof: None,
        })
    }
}
