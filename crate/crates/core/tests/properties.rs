use std::collections::BTreeSet;

use bacip_core::canonical::to_canonical_bytes;
use bacip_core::consensus::{max_faulty, quorum_size};
use bacip_core::credential::{
    canonicalize, temporal_status, validate_document, CredentialDocument, CredentialId, IsoInstant, Recipient,
    ValidityStatus,
};
use bacip_core::crypto::{
    decrypt_payload, encrypt_payload, generate_keypair, sign_message, verify_signature, Algorithm, CryptoError,
};
use bacip_core::ledger::{
    InvalidReason, LedgerState, PermissionBits, RevocationKey, Transaction, TxPayload, ValidatorId,
};
use bacip_core::merkle::{fold_path, merkle_path, merkle_root};
use bacip_core::store::{BlobStore, MemoryStore, PointerTable, PointerTarget};
use bacip_core::workload::Workload;
use bacip_core::{content_hash, Hash32};
use chrono::Duration;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

fn arb_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 éüñ.'-]{1,24}".prop_map(|s| s.trim().to_string()).prop_filter("non-empty", |s| !s.is_empty())
}

fn arb_date() -> impl Strategy<Value = (i32, u32, u32)> {
    (1990i32..2080, 1u32..=12, 1u32..=28)
}

prop_compose! {
    fn arb_document()(
        name in proptest::option::of(arb_text()),
        ident in "[a-z0-9]{3,16}",
        degree in arb_text(),
        extra in proptest::collection::btree_map("[a-z]{3,10}", arb_text(), 0..3),
        issued in arb_date(),
        span in proptest::option::of(1i64..20_000),
        id_seed in any::<u64>(),
    ) -> CredentialDocument {
        let issue = format!("{:04}-{:02}-{:02}", issued.0, issued.1, issued.2);
        let issue_date = IsoInstant::parse(&issue).unwrap();
        let expiration_date = span.map(|d| IsoInstant::date_of(issue_date.instant() + Duration::days(d)));
        let mut subject = extra;
        subject.remove("degree");
        subject.insert("degree".into(), degree);
        CredentialDocument {
            context: "https://schema.org".into(),
            credential_type: "EducationalOccupationalCredential".into(),
            id: Some(CredentialId::generate(&mut ChaCha20Rng::seed_from_u64(id_seed))),
            external_id: None,
            issuer: "https://university.example.edu".into(),
            recipient: Recipient {
                id: format!("did:example:{ident}").parse().unwrap(),
                name,
                kind: None,
            },
            credential_subject: subject,
            issue_date,
            expiration_date,
            proof: None,
        }
    }
}

/// Renders `v` as JSON text with object keys in an order chosen by `rng`
/// and random insignificant whitespace.
fn render_shuffled(v: &Value, rng: &mut ChaCha20Rng, out: &mut String) {
    let ws = |rng: &mut ChaCha20Rng, out: &mut String| {
        for _ in 0..rng.gen_range(0..3) {
            out.push([' ', '\n', '\t'][rng.gen_range(0..3)]);
        }
    };
    match v {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            for i in (1..entries.len()).rev() {
                entries.swap(i, rng.gen_range(0..=i));
            }
            out.push('{');
            for (i, (k, val)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                ws(rng, out);
                out.push_str(&serde_json::to_string(k).unwrap());
                ws(rng, out);
                out.push(':');
                ws(rng, out);
                render_shuffled(val, rng, out);
            }
            ws(rng, out);
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                ws(rng, out);
                render_shuffled(item, rng, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// Textbook recursive Merkle root, independent of the library's level loop.
fn naive_root(leaves: &[Hash32]) -> Hash32 {
    fn level(nodes: Vec<Hash32>) -> Hash32 {
        if nodes.len() == 1 {
            return nodes[0];
        }
        let mut next = Vec::new();
        let mut i = 0;
        while i < nodes.len() {
            if i + 1 < nodes.len() {
                let mut buf = nodes[i].0.to_vec();
                buf.extend_from_slice(&nodes[i + 1].0);
                next.push(Hash32::of(&buf));
            } else {
                next.push(nodes[i]);
            }
            i += 2;
        }
        level(next)
    }
    if leaves.is_empty() {
        Hash32::of(b"")
    } else {
        level(leaves.to_vec())
    }
}

fn uuid_v4_shape(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 36
        && [8, 13, 18, 23].iter().all(|&i| b[i] == b'-')
        && b[14] == b'4'
        && matches!(b[19], b'8' | b'9' | b'a' | b'b')
        && b.iter().enumerate().all(|(i, c)| [8, 13, 18, 23].contains(&i) || c.is_ascii_digit() || (b'a'..=b'f').contains(c))
}

#[test]
fn canonical_json_matches_independent_serializer() {
    // Digests computed with Python: json.dumps(sort_keys=True, separators=(',', ':'), ensure_ascii=False).
    for (raw, expected) in [
        (include_str!("data/metadata_example.json"), "0a71027c0bfbe4f4ed21f3ad7977045fa0d0bc0d915db146c343ec0d9aed4a48"),
        (include_str!("data/vc_example.json"), "609ae6849bdbc491df3fa3683dc3b408593a14dd09f92fd99d39f452e84573cc"),
        (include_str!("data/issue_request_example.json"), "645108127f67e7cd489a0c8a71b24dbea9616964d22ceedc362e1111844a55ad"),
    ] {
        let v: Value = serde_json::from_str(raw).unwrap();
        assert_eq!(Hash32::of(&to_canonical_bytes(&v)).to_hex(), expected);
    }
}

#[test]
fn nonces_never_repeat_under_one_key() {
    let key = [7u8; 32];
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let nonces: BTreeSet<_> = (0..10_000).map(|_| encrypt_payload(b"x", &key, &mut rng).unwrap().nonce).collect();
    assert_eq!(nonces.len(), 10_000);
}

#[test]
fn quorums_always_share_an_honest_validator() {
    for n in 1..200 {
        let (q, f) = (quorum_size(n), max_faulty(n));
        assert!(q <= n - f, "n={n}: quorum must be reachable by honest nodes alone");
        assert!(2 * q > n + f, "n={n}: two quorums overlap in at least f+1");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn document_roundtrip(doc in arb_document()) {
        let text = doc.to_json().to_string();
        let back = validate_document(text.as_bytes()).unwrap();
        prop_assert_eq!(back, doc);
    }

    #[test]
    fn canonical_form_ignores_layout(doc in arb_document(), seed in any::<u64>()) {
        let mut text = String::new();
        render_shuffled(&doc.to_json(), &mut ChaCha20Rng::seed_from_u64(seed), &mut text);
        let reparsed = validate_document(text.as_bytes()).unwrap();
        prop_assert_eq!(canonicalize(&reparsed, false), canonicalize(&doc, false));
    }

    #[test]
    fn temporal_status_is_a_partition(doc in arb_document(), mut offsets in proptest::collection::vec(-40_000i64..40_000, 1..40)) {
        offsets.sort_unstable();
        let base = doc.issue_date.instant();
        let rank = |s: ValidityStatus| match s {
            ValidityStatus::NotYetValid => 0,
            ValidityStatus::Valid => 1,
            ValidityStatus::Expired => 2,
        };
        let ranks: Vec<u8> = offsets.iter().map(|d| rank(temporal_status(&doc, base + Duration::days(*d)))).collect();
        prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{:?}", ranks);
    }

    #[test]
    fn generated_ids_are_uuid_v4(seed in any::<u64>()) {
        let id = CredentialId::generate(&mut ChaCha20Rng::seed_from_u64(seed));
        prop_assert!(uuid_v4_shape(id.as_str()), "{}", id.as_str());
    }

    #[test]
    fn signatures_roundtrip_and_bind_the_message(
        seed in any::<u64>(),
        es256 in any::<bool>(),
        msg in proptest::collection::vec(any::<u8>(), 0..256),
        other in proptest::collection::vec(any::<u8>(), 0..256),
    ) {
        let alg = if es256 { Algorithm::Es256 } else { Algorithm::Ed25519 };
        let key = generate_keypair(alg, "k", &mut ChaCha20Rng::seed_from_u64(seed));
        let sig = sign_message(&msg, &key);
        prop_assert!(verify_signature(alg, &msg, &sig, key.public_key()));
        if other != msg {
            prop_assert!(!verify_signature(alg, &other, &sig, key.public_key()));
        }
    }

    #[test]
    fn sealing_roundtrips_and_rejects_other_keys(
        plaintext in proptest::collection::vec(any::<u8>(), 0..512),
        key in any::<[u8; 32]>(),
        other in any::<[u8; 32]>(),
        seed in any::<u64>(),
    ) {
        let sealed = encrypt_payload(&plaintext, &key, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(decrypt_payload(&sealed, &key).unwrap(), plaintext);
        if other != key {
            prop_assert_eq!(decrypt_payload(&sealed, &other), Err(CryptoError::AuthFailure));
        }
    }

    #[test]
    fn content_hash_is_stable_and_collision_free(blobs in proptest::collection::btree_set(proptest::collection::vec(any::<u8>(), 0..64), 1..64)) {
        let addrs: BTreeSet<_> = blobs.iter().map(|b| content_hash(b)).collect();
        prop_assert_eq!(addrs.len(), blobs.len());
        for b in &blobs {
            prop_assert_eq!(content_hash(b), content_hash(&b.clone()));
        }
    }

    #[test]
    fn store_reads_are_self_certifying(ops in proptest::collection::vec((0u8..3, 0usize..8), 1..80)) {
        let store = MemoryStore::new();
        let blobs: Vec<Vec<u8>> = (0..8u8).map(|i| vec![i; i as usize * 3]).collect();
        for (op, i) in ops {
            let addr = content_hash(&blobs[i]);
            match op {
                0 => { store.put(&blobs[i]).unwrap(); }
                1 => { let _ = store.erase(&addr); }
                _ => {
                    if let Ok(bytes) = store.get(&addr) {
                        prop_assert_eq!(content_hash(&bytes), addr);
                    } else {
                        prop_assert!(!store.contains(&addr));
                    }
                }
            }
        }
    }

    #[test]
    fn invalidated_pointers_only_grow(ops in proptest::collection::vec((any::<bool>(), 0usize..6), 1..60), seed in any::<u64>()) {
        let table = PointerTable::in_memory();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ids: Vec<_> = (0..6).map(|_| bacip_core::credential::PointerId::generate(&mut rng)).collect();
        let mut dead = BTreeSet::new();
        for (create, i) in ops {
            if create {
                table.create(ids[i].clone(), content_hash(&[i as u8])).unwrap();
            } else if table.invalidate(&ids[i]).is_ok() {
                dead.insert(i);
            }
            for &d in &dead {
                prop_assert_eq!(table.resolve(&ids[d]).unwrap(), PointerTarget::Invalidated);
            }
            prop_assert_eq!(table.invalidated_count(), dead.len());
        }
    }

    #[test]
    fn merkle_paths_fold_to_the_root(leaves in proptest::collection::vec(any::<[u8; 32]>().prop_map(Hash32), 0..40)) {
        let root = merkle_root(&leaves);
        prop_assert_eq!(root, naive_root(&leaves));
        for (i, leaf) in leaves.iter().enumerate() {
            let path = merkle_path(&leaves, i).unwrap();
            prop_assert_eq!(fold_path(*leaf, &path), root);
        }
        prop_assert!(merkle_path(&leaves, leaves.len()).is_none());
    }
}

fn apply_all(state: &mut LedgerState, txs: &[Transaction]) -> Vec<bool> {
    txs.iter().map(|tx| state.apply_transaction(tx).is_ok()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ledger_is_deterministic(seed in any::<u64>(), count in 1usize..60) {
        let mut w = Workload::new(seed, 3);
        let txs = w.transactions(count);
        let mut a = LedgerState::from_genesis(&w.genesis).unwrap();
        let mut b = LedgerState::from_genesis(&w.genesis).unwrap();
        prop_assert_eq!(apply_all(&mut a, &txs), apply_all(&mut b, &txs));
        prop_assert_eq!(a.state_commitment(), b.state_commitment());
        prop_assert_eq!(
            serde_json::to_string(a.audit_log()).unwrap(),
            serde_json::to_string(b.audit_log()).unwrap()
        );
        let block_a = a.build_block(&w.transactions(10), ValidatorId(0), 5);
        let block_b = b.build_block(&[], ValidatorId(0), 5);
        prop_assert_eq!(block_b.state_root, b.state_commitment());
        prop_assert!(a.check_block(&block_a).is_ok());
    }

    #[test]
    fn revocation_is_monotone(seed in any::<u64>(), count in 1usize..120) {
        let mut w = Workload::new(seed, 3);
        let mut state = LedgerState::from_genesis(&w.genesis).unwrap();
        let mut revoked: BTreeSet<RevocationKey> = BTreeSet::new();
        for tx in w.transactions(count) {
            let _ = state.apply_transaction(&tx);
            for key in &revoked {
                prop_assert!(state.is_revoked(key));
            }
            for id in state.credentials().keys() {
                let key = RevocationKey::of(id);
                if state.is_revoked(&key) {
                    revoked.insert(key);
                }
            }
        }
    }

    #[test]
    fn default_deny_without_roles(seed in any::<u64>(), count in 1usize..60) {
        let mut w = Workload::new(seed, 3);
        w.genesis.roles.clear();
        let genesis = w.genesis.clone();
        let mut state = LedgerState::from_genesis(&genesis).unwrap();
        for tx in w.transactions(count) {
            let privileged = matches!(tx.payload, TxPayload::IssueCredential { .. } | TxPayload::RevokeCredential { .. })
                || (matches!(tx.payload, TxPayload::SetPermissions { .. }) && tx.sender != genesis.admin);
            let result = state.validate_transaction(&tx);
            if privileged {
                prop_assert!(matches!(
                    result,
                    Err(InvalidReason::MissingPermission(_)) | Err(InvalidReason::NotAdmin)
                ), "{:?}", result);
            }
            let _ = state.apply_transaction(&tx);
        }
        prop_assert!(state.credentials().is_empty());
    }

    #[test]
    fn commitment_reacts_to_every_leaf(seed in any::<u64>(), n in 1usize..8) {
        let mut w = Workload::new(seed, 3);
        let mut state = LedgerState::from_genesis(&w.genesis).unwrap();
        for i in 0..n {
            let doc = w.credential_for(i);
            let tx = w.issue_tx(doc);
            state.apply_transaction(&tx).unwrap();
        }
        let root = state.state_commitment();
        let leaves: Vec<Hash32> = state
            .credentials()
            .iter()
            .map(|(id, rec)| LedgerState::leaf_hash(id, &rec.doc_hash, false))
            .collect();
        prop_assert_eq!(root, naive_root(&leaves));
        for (i, (id, rec)) in state.credentials().iter().enumerate() {
            let mut flipped = leaves.clone();
            flipped[i] = LedgerState::leaf_hash(id, &rec.doc_hash, true);
            prop_assert_ne!(naive_root(&flipped), root);
            let mut other_doc = leaves.clone();
            let mut h = rec.doc_hash;
            h.0[0] ^= 1;
            other_doc[i] = LedgerState::leaf_hash(id, &h, false);
            prop_assert_ne!(naive_root(&other_doc), root);
        }
        let target = state.credentials().keys().next().unwrap().clone();
        let revoke = w.revoke_tx(RevocationKey::of(&target));
        state.apply_transaction(&revoke).unwrap();
        prop_assert_ne!(state.state_commitment(), root);
    }
}

#[test]
fn permission_bits_have_fixed_positions() {
    assert_eq!(PermissionBits::ISSUE.bits(), 1);
    assert_eq!(PermissionBits::REVOKE.bits(), 2);
    assert_eq!(PermissionBits::VERIFY.bits(), 4);
    assert_eq!(PermissionBits::ADMIN.bits(), 8);
}
