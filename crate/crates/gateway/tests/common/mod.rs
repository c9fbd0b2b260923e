#![allow(dead_code)]

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use bacip_core::anchor::AnchorLog;
use bacip_core::credential::Did;
use bacip_core::crypto::{generate_keypair, Algorithm, KeyPair, KeyStore};
use bacip_core::ledger::{Genesis, Participant, PermissionBits};
use bacip_core::node::{NodeComponents, RegistryNode};
use bacip_core::store::{MemoryStore, PointerTable};
use bacip_gateway::auth::{mint_token, Claims, Role};
use bacip_gateway::{router, Gateway};
use chrono::DateTime;
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use tower::ServiceExt;

pub const ISSUER_URI: &str = "https://university.example.edu";
/// 2024-01-01T00:00:00Z.
pub const START: i64 = 1_704_067_200;

pub struct Actor {
    pub did: Did,
    pub key: KeyPair,
    pub subject: String,
    pub name: String,
}

impl Actor {
    fn new(did: &str, subject: &str, name: &str, rng: &mut ChaCha20Rng) -> Self {
        Actor {
            did: did.parse().unwrap(),
            key: generate_keypair(Algorithm::Es256, format!("{did}#key-1"), rng),
            subject: subject.into(),
            name: name.into(),
        }
    }
}

pub struct Harness {
    pub gateway: Arc<Gateway>,
    pub app: Router,
    pub clock: Arc<AtomicI64>,
    pub issuer: Actor,
    pub verifier: Actor,
    pub student: Actor,
    pub outsider: KeyPair,
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
    pub raw: String,
}

impl Harness {
    pub fn new(validators: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        let issuer = Actor::new("did:example:issuer123", "issuer123", "University of Blockchain", &mut rng);
        let verifier = Actor::new("did:example:employer", "employer", "Acme Hiring", &mut rng);
        let student = Actor::new("did:example:123", "student123", "John Doe", &mut rng);
        let outsider = generate_keypair(Algorithm::Es256, "did:example:mallory#key-1", &mut rng);

        let mut genesis = Genesis::new("gateway-tests", issuer.did.clone());
        genesis.participants.push(
            Participant::from_keypair(issuer.did.clone(), &issuer.key, Some(ISSUER_URI.into()))
                .with_subject(issuer.subject.clone()),
        );
        genesis
            .participants
            .push(Participant::from_keypair(verifier.did.clone(), &verifier.key, None).with_subject(verifier.subject.clone()));
        genesis
            .participants
            .push(Participant::from_keypair(student.did.clone(), &student.key, None).with_subject(student.subject.clone()));
        genesis.roles.insert(
            issuer.did.clone(),
            (PermissionBits::ISSUE | PermissionBits::REVOKE | PermissionBits::VERIFY).bits(),
        );
        genesis.roles.insert(verifier.did.clone(), PermissionBits::VERIFY.bits());

        let mut keystore = KeyStore::in_memory("test passphrase", &mut rng);
        for actor in [&issuer, &verifier, &student] {
            keystore.insert_keypair(&actor.key, None, &mut rng).unwrap();
        }
        let node = RegistryNode::new(NodeComponents {
            genesis,
            validators,
            validator_seed: 9,
            store: Arc::new(MemoryStore::new()),
            pointers: PointerTable::in_memory(),
            keystore,
            anchors: AnchorLog::in_memory(),
            journal: None,
        })
        .unwrap();
        let clock = Arc::new(AtomicI64::new(START));
        let tick = clock.clone();
        let gateway = Arc::new(
            Gateway::new(Arc::new(node))
                .with_clock(Arc::new(move || DateTime::from_timestamp(tick.load(Ordering::SeqCst), 0).unwrap())),
        );
        Harness {
            app: router(gateway.clone()),
            gateway,
            clock,
            issuer,
            verifier,
            student,
            outsider,
        }
    }

    pub fn set_time(&self, unix: i64) {
        self.clock.store(unix, Ordering::SeqCst);
    }

    pub fn now(&self) -> i64 {
        self.clock.load(Ordering::SeqCst)
    }

    pub fn actor(&self, role: Role) -> &Actor {
        match role {
            Role::Issuer => &self.issuer,
            Role::Verifier => &self.verifier,
            Role::Student => &self.student,
        }
    }

    /// A valid token for the actor that naturally holds `role`.
    pub fn token(&self, role: Role) -> String {
        let a = self.actor(role);
        mint_token(&Claims::new(a.subject.clone(), a.name.clone(), role, self.now() - 10), &a.key).unwrap()
    }

    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<&Value>) -> Reply {
        self.call_raw(method, path, token, body.map(|b| b.to_string())).await
    }

    pub async fn call_raw(&self, method: Method, path: &str, token: Option<&str>, body: Option<String>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b)),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let raw = String::from_utf8(bytes.to_vec()).unwrap();
        let body = serde_json::from_str(&raw).unwrap_or(Value::Null);
        Reply { status, body, raw }
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: &Value) -> Reply {
        self.call(Method::POST, path, token, Some(body)).await
    }
}

pub fn issue_request() -> Value {
    serde_json::from_str(include_str!("../../../core/tests/data/issue_request_example.json")).unwrap()
}
