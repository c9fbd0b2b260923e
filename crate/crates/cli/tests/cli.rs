use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const REQUEST: &str = include_str!("../../core/tests/data/issue_request_example.json");
const SCENARIO: &str = include_str!("../../../scenarios/n4-f1-equivocate.json");

struct Env {
    dir: TempDir,
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Env {
    fn new() -> Self {
        Env {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Run {
        let out: Output = Command::new(env!("CARGO_BIN_EXE_bacip"))
            .arg("--data-dir")
            .arg(self.path("node"))
            .args(args)
            .env("BACIP_KEYSTORE_PASSPHRASE", "correct horse")
            .env_remove("BACIP_CONFIG")
            .output()
            .unwrap();
        Run {
            code: out.status.code().unwrap(),
            stdout: String::from_utf8(out.stdout).unwrap(),
            stderr: String::from_utf8(out.stderr).unwrap(),
        }
    }

    fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert_eq!(r.code, 0, "{args:?}\nstdout: {}\nstderr: {}", r.stdout, r.stderr);
        r.stdout
    }

    /// Registers an issuer with the university URI and the example student.
    fn registry(&self) {
        self.ok(&[
            "keygen",
            "--alg",
            "es256",
            "--key-id",
            "did:example:issuer123#key-1",
            "--issuer-uri",
            "https://university.example.edu",
            "--subject",
            "issuer123",
            "--permissions",
            "issue,revoke,verify",
        ]);
        self.ok(&["keygen", "--alg", "es256", "--key-id", "did:example:123#key-1", "--subject", "student123"]);
    }

    fn issue(&self) -> (PathBuf, Value) {
        let req = self.write("request.json", REQUEST);
        let doc_path = self.path("credential.json");
        self.ok(&["issue", req.to_str().unwrap(), "--out", doc_path.to_str().unwrap()]);
        let doc: Value = serde_json::from_str(&fs::read_to_string(&doc_path).unwrap()).unwrap();
        (doc_path, doc)
    }
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn keygen_prints_the_public_key_and_rejects_duplicates() {
    let env = Env::new();
    let out = env.ok(&["keygen", "--alg", "ed25519", "--key-id", "did:example:456#key-1"]);
    use base64::Engine as _;
    let raw = base64::engine::general_purpose::STANDARD.decode(out.trim());
    assert_eq!(raw.map(|r| r.len()).ok(), Some(32));

    let dup = env.run(&["keygen", "--alg", "ed25519", "--key-id", "did:example:456#key-1"]);
    assert_eq!(dup.code, 1);
    assert!(dup.stderr.contains("already exists"), "{}", dup.stderr);

    let rsa = env.run(&["keygen", "--alg", "rsa", "--key-id", "did:example:456#key-2"]);
    assert_eq!(rsa.code, 2, "{}", rsa.stderr);

    let genesis: Value = serde_json::from_str(&fs::read_to_string(env.path("node/genesis.json")).unwrap()).unwrap();
    assert_eq!(genesis["admin"], "did:example:456");
    assert_eq!(genesis["participants"].as_array().unwrap().len(), 1);
}

#[test]
fn issue_verify_revoke_round_trip() {
    let env = Env::new();
    env.registry();
    let (doc_path, doc) = env.issue();
    assert_eq!(doc["credentialSubject"]["course"], "BSc Computer Science");
    let id = doc["id"].as_str().unwrap().to_string();

    let r = env.run(&["verify", arg(&doc_path)]);
    assert_eq!((r.code, r.stdout.trim()), (0, "valid"));

    let mut tampered = doc.clone();
    tampered["credentialSubject"]["course"] = "BSc Computer Sciencf".into();
    let t = env.write("tampered.json", &tampered.to_string());
    let r = env.run(&["verify", arg(&t)]);
    assert_eq!((r.code, r.stdout.trim()), (1, "invalid_signature"));

    let r = env.run(&["verify", "--id", &id]);
    assert_eq!((r.code, r.stdout.trim()), (0, "valid"));

    let revoked: Value = serde_json::from_str(&env.ok(&["revoke", &id])).unwrap();
    assert_eq!(revoked["alreadyRevoked"], false);
    let again: Value = serde_json::from_str(&env.ok(&["revoke", &id])).unwrap();
    assert_eq!(again["alreadyRevoked"], true);

    let r = env.run(&["verify", arg(&doc_path)]);
    assert_eq!((r.code, r.stdout.trim()), (1, "revoked"));

    let audit: Value = serde_json::from_str(&env.ok(&["audit", "--event", "CertificateRevoked"])).unwrap();
    assert_eq!(audit["total"], 1);
    let subject = audit["events"][0]["subject"].as_str().unwrap();
    assert!(subject.len() == 64 && subject.bytes().all(|b| b.is_ascii_hexdigit()), "revocations are keyed by hash: {subject}");

    let proof: Value = serde_json::from_str(&env.ok(&["anchor-proof", &id])).unwrap();
    assert_eq!(proof["proof"]["credentialId"], id.as_str());
    assert!(proof["anchor"]["stateRoot"].is_string());
}

#[test]
fn the_registry_is_frozen_once_the_ledger_starts() {
    let env = Env::new();
    env.registry();
    env.issue();
    let r = env.run(&["keygen", "--alg", "es256", "--key-id", "did:example:late#key-1"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("fixed"), "{}", r.stderr);
}

#[test]
fn consent_guards_surface_as_domain_failures() {
    let env = Env::new();
    env.registry();
    let given: Value = serde_json::from_str(&env.ok(&["consent", "give", "--subject", "did:example:123"])).unwrap();
    assert_eq!(given["consentGiven"], true);
    let r = env.run(&["consent", "delete", "--subject", "did:example:123"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("ConsentStillGiven"), "{}", r.stderr);
    env.ok(&["consent", "withdraw", "--subject", "did:example:123"]);
    assert_eq!(env.run(&["consent", "withdraw", "--subject", "did:example:123"]).code, 1);
}

#[test]
fn canonical_output_is_compact_and_sorted() {
    let env = Env::new();
    env.registry();
    let req = env.write("request.json", REQUEST);
    let out = env.ok(&["--canonical", "issue", arg(&req)]);
    let line = out.trim_end();
    assert!(!line.contains('\n') && !line.contains(": "));
    let v: Value = serde_json::from_str(line).unwrap();
    assert_eq!(line, serde_json::to_string(&v).unwrap());
}

#[test]
fn tokens_are_minted_for_local_es256_keys() {
    let env = Env::new();
    env.registry();
    let token = env.ok(&["token", "--subject", "issuer123", "--role", "issuer"]);
    assert_eq!(token.trim().split('.').count(), 3);
    let r = env.run(&["token", "--subject", "nobody", "--role", "issuer"]);
    assert_eq!(r.code, 1);
}

#[test]
fn simulate_bundled_scenario_is_safe_and_reproducible() {
    let env = Env::new();
    let scenario = env.write("scenario.json", SCENARIO);
    let (a, b) = (env.path("a.json"), env.path("b.json"));
    let summary = env.ok(&["simulate", "--scenario", arg(&scenario), "--report", arg(&a)]);
    assert!(summary.contains("safetyViolations=0"), "{summary}");
    env.ok(&["simulate", "--scenario", arg(&scenario), "--report", arg(&b)]);
    let (ra, rb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ra, rb);
    let report: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["safetyViolations"], 0);
    assert_eq!(report["byzantine"][0]["behavior"], "EquivocateLeader");

    let bad = env.write("bad.json", "{\"n\": \"four\"");
    assert_eq!(env.run(&["simulate", "--scenario", arg(&bad)]).code, 2);
}

#[test]
fn usage_and_configuration_errors_exit_two() {
    let env = Env::new();
    assert_eq!(env.run(&["verify", "missing.json"]).code, 2, "no genesis yet");
    assert_eq!(env.run(&["frobnicate"]).code, 2);
    let cfg = env.write("node.toml", "validators = 0\n");
    assert_eq!(env.run(&["--config", arg(&cfg), "audit"]).code, 2);
}
