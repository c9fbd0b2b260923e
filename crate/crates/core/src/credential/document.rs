use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::id::{CredentialId, Did};
use crate::canonical::to_canonical_bytes;
use crate::crypto::{Hash32, Proof};

/// An ISO-8601 date or date-time. The original text is kept so that a parsed
/// document re-serializes to the same bytes it was signed over; dates
/// without a time component denote midnight UTC.
#[derive(Clone, PartialEq, Eq)]
pub struct IsoInstant {
    raw: String,
    instant: DateTime<Utc>,
}

impl IsoInstant {
    pub fn parse(raw: &str) -> Option<Self> {
        let instant = if let Ok(date) = NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
            if raw.len() != 10 {
                return None;
            }
            date.and_hms_opt(0, 0, 0)?.and_utc()
        } else {
            DateTime::parse_from_rfc3339(raw).ok()?.with_timezone(&Utc)
        };
        Some(IsoInstant {
            raw: raw.to_string(),
            instant,
        })
    }

    /// Date-only form (`YYYY-MM-DD`) of a UTC instant.
    pub fn date_of(instant: DateTime<Utc>) -> Self {
        let raw = instant.format("%Y-%m-%d").to_string();
        IsoInstant::parse(&raw).expect("formatted date parses")
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.instant
    }
}

impl fmt::Debug for IsoInstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IsoInstant({})", self.raw)
    }
}

impl Serialize for IsoInstant {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Recipient {
    pub id: Did,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// A signed academic credential.
///
/// Field names on the wire follow the JSON-LD metadata layout (`@context`,
/// `@type`, `recipient`, `issueDate`, ...). Documents using the W3C VC names
/// are accepted on input and normalised by [`super::validate_document`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CredentialDocument {
    #[serde(rename = "@context")]
    pub context: String,
    #[serde(rename = "@type")]
    pub credential_type: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<CredentialId>,
    /// A non-UUID identifier supplied by a foreign document (for example a
    /// VC whose `id` is a DID).
    #[serde(rename = "externalId", skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub issuer: String,
    pub recipient: Recipient,
    #[serde(rename = "credentialSubject")]
    pub credential_subject: BTreeMap<String, String>,
    #[serde(rename = "issueDate")]
    pub issue_date: IsoInstant,
    #[serde(rename = "expirationDate", skip_serializing_if = "Option::is_none")]
    pub expiration_date: Option<IsoInstant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proof: Option<Proof>,
}

impl<'de> Deserialize<'de> for CredentialDocument {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        super::schema::parse_value(&value).map_err(serde::de::Error::custom)
    }
}

impl CredentialDocument {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("documents serialize")
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    /// Hash of the canonical document without its proof; this is what the
    /// ledger records and what the anchors commit to.
    pub fn doc_hash(&self) -> Hash32 {
        Hash32::of(&canonicalize(self, true))
    }

    pub fn holder(&self) -> &Did {
        &self.recipient.id
    }
}

/// Canonical bytes of a document: keys sorted at every depth, no
/// insignificant whitespace. With `exclude_proof` the proof member is left
/// out, which gives the bytes that are signed.
pub fn canonicalize(doc: &CredentialDocument, exclude_proof: bool) -> Vec<u8> {
    let mut value = doc.to_json();
    if exclude_proof {
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("proof");
        }
    }
    to_canonical_bytes(&value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValidityStatus {
    Valid,
    NotYetValid,
    Expired,
}

/// Half-open validity window `[issueDate, expirationDate)`.
pub fn temporal_status(doc: &CredentialDocument, now: DateTime<Utc>) -> ValidityStatus {
    if now < doc.issue_date.instant() {
        ValidityStatus::NotYetValid
    } else if doc
        .expiration_date
        .as_ref()
        .is_some_and(|exp| now >= exp.instant())
    {
        ValidityStatus::Expired
    } else {
        ValidityStatus::Valid
    }
}
