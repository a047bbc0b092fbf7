use super::*;
use crate::chain::tests::funded_chain;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn blob(tag: u8, len: usize) -> Vec<u8> {
    (0..len).map(|i| tag.wrapping_add(i as u8)).collect()
}

fn keepers(caps: &[u64]) -> StorageDirectory {
    let mut d = StorageDirectory::new();
    for (i, &c) in caps.iter().enumerate() {
        d.add_keeper(&format!("k{i}"), c).unwrap();
    }
    d
}

fn holders(d: &StorageDirectory, id: &Hash512) -> Vec<String> {
    d.object(id).unwrap().assignment.holders.iter().cloned().collect()
}

#[test]
fn greedy_by_free_space() {
    let mut d = keepers(&[20, 100, 40, 80, 60]);
    let b = blob(1, 10);
    let a = d.assign_replicas(&b, ObjectKind::Model, 3).unwrap();
    assert_eq!(a.holders, BTreeSet::from(["k1".into(), "k3".into(), "k4".into()]));
    assert_eq!(d.keeper("k1").unwrap().used, 10);
    assert_eq!(d.stored("k3", &a.object_id), Some(&b[..]));
    d.check_invariants().unwrap();
}

#[test]
fn ties_by_id() {
    let mut d = keepers(&[50, 50, 50]);
    let a = d.assign_replicas(&blob(0, 5), ObjectKind::Model, 2).unwrap();
    assert_eq!(a.holders, BTreeSet::from(["k0".into(), "k1".into()]));
}

#[test]
fn single_and_insufficient() {
    let mut d = keepers(&[10]);
    let a = d.assign_replicas(&blob(0, 5), ObjectKind::Model, 1).unwrap();
    assert_eq!(a.holders.len(), 1);

    let mut d = keepers(&[100, 100, 3]);
    let err = d.assign_replicas(&blob(0, 5), ObjectKind::Model, 3).unwrap_err();
    assert!(matches!(err, StorageError::InsufficientKeepers { placed: 2, required: 3, .. }));
    assert_eq!(d.under_replicated_count(), 1);
    assert!(d.has_model(&Hash512::digest(&blob(0, 5))));
}

#[test]
fn departure_heals_in_one_pass() {
    let mut d = keepers(&[100; 6]);
    let ids: Vec<Hash512> = (0..4)
        .map(|i| d.assign_replicas(&blob(i, 10), ObjectKind::Model, 3).unwrap().object_id)
        .collect();
    let victim = holders(&d, &ids[0])[0].clone();
    let plan = d.on_keeper_departure(&victim).unwrap();
    assert!(plan.lost.is_empty() && plan.under_replicated.is_empty());
    for id in &ids {
        assert_eq!(holders(&d, id).len(), 3);
        assert!(!holders(&d, id).contains(&victim));
    }
    assert_eq!(d.keeper(&victim).unwrap().used, 0);
    d.check_invariants().unwrap();
}

#[test]
fn all_holders_leaving_loses_object() {
    let mut d = keepers(&[100; 5]);
    let id = d.assign_replicas(&blob(3, 10), ObjectKind::Model, 3).unwrap().object_id;
    let hs = holders(&d, &id);
    let refs: Vec<&str> = hs.iter().map(String::as_str).collect();
    let plan = d.depart_many(&refs).unwrap();
    assert_eq!(plan.lost, vec![id]);
    assert_eq!(d.lost_count(), 1);
}

#[test]
fn empty_keeper_departure() {
    let mut d = keepers(&[100, 100, 100, 1]);
    d.assign_replicas(&blob(3, 10), ObjectKind::Model, 3).unwrap();
    assert_eq!(d.on_keeper_departure("k3").unwrap(), HealingPlan::default());
    assert!(d.on_keeper_departure("nobody").is_err());
}

#[test]
fn audits() {
    let mut d = keepers(&[100; 4]);
    let id = d.assign_replicas(&blob(9, 32), ObjectKind::Model, 3).unwrap().object_id;
    let hs = holders(&d, &id);
    assert_eq!(d.audit(&hs[0], &id), AuditOutcome::Pass);
    assert!(d.corrupt(&hs[1], &id, 7, 0x80));
    assert_eq!(d.audit(&hs[1], &id), AuditOutcome::TamperDetected);
    assert!(d.discard_silently(&hs[2], &id));
    assert_eq!(d.audit(&hs[2], &id), AuditOutcome::MissingReplica);
}

#[test]
fn failed_audit_penalizes_and_heals() {
    let (mut chain, _, _) = funded_chain();
    let mut d = keepers(&[100; 4]);
    let id = d.assign_replicas(&blob(9, 32), ObjectKind::Model, 3).unwrap().object_id;
    let policy = StoragePolicy::default();
    d.pay_rent(&mut chain, &policy).unwrap();
    let bad = holders(&d, &id)[0].clone();
    d.corrupt(&bad, &id, 0, 1);
    let r = d.audit_and_enforce(&bad, &id, &mut chain, &policy);
    assert_eq!(r.outcome, AuditOutcome::TamperDetected);
    assert_eq!(r.penalty, 1); // balance was only the rent
    assert_eq!(r.healing.copies.len(), 1);
    assert_ne!(r.healing.copies[0].to, bad);
    assert_eq!(holders(&d, &id).len(), 3);
    assert!(!holders(&d, &id).contains(&bad));
    assert_eq!(chain.ledger().balance(&bad), 0);
    d.check_invariants().unwrap();
    crate::chain::validate_chain(&chain).unwrap();

    let ok = holders(&d, &id)[0].clone();
    let r = d.audit_and_enforce(&ok, &id, &mut chain, &policy);
    assert_eq!((r.outcome, r.penalty), (AuditOutcome::Pass, 0));
}

#[test]
fn healing_skips_tampered_sources() {
    let mut d = keepers(&[100; 5]);
    let id = d.assign_replicas(&blob(2, 16), ObjectKind::Model, 3).unwrap().object_id;
    let hs = holders(&d, &id);
    d.corrupt(&hs[0], &id, 3, 0xff);
    d.on_keeper_departure(&hs[2]).unwrap();
    for h in holders(&d, &id) {
        if h != hs[0] {
            assert_eq!(d.audit(&h, &id), AuditOutcome::Pass, "{h}");
        }
    }
}

#[test]
fn rent_per_held_object() {
    let (mut chain, _, _) = funded_chain();
    let mut d = keepers(&[100; 4]);
    d.assign_replicas(&blob(0, 10), ObjectKind::Model, 3).unwrap();
    d.assign_replicas(&blob(1, 10), ObjectKind::Model, 3).unwrap();
    let policy = StoragePolicy { rent_per_object: 2, penalty: 5 };
    let paid = d.pay_rent(&mut chain, &policy).unwrap();
    assert_eq!(paid, 6 * 2);
    let held: u64 = d.keepers().map(|k| d.stores()[&k.id].len() as u64).sum();
    assert_eq!(paid, held * 2);
    assert_eq!(chain.ledger().total_supply(), chain.ledger().expected_supply());
}

#[test]
fn datasets_and_caches() {
    let mut d = keepers(&[1000; 6]);
    let miners = vec!["m0".to_string(), "m1".to_string()];
    let a = d.store_dataset(&blob(5, 100), 5, 3, &miners).unwrap();
    assert_eq!(a.holders.len(), 5);
    assert!(a.holders.iter().all(|h| !h.starts_with('m')));
    assert!(d.cache("m0").unwrap().contains_key(&a.object_id));
    assert!(!d.has_model(&a.object_id));
    assert_eq!(
        d.store_dataset(&blob(6, 10), 2, 3, &miners),
        Err(StorageError::DatasetReplicationTooLow { r_data: 2, r: 3 })
    );
}

#[test]
fn rejoin_is_empty_and_heal_all_tops_up() {
    let mut d = keepers(&[100; 3]);
    let id = d.assign_replicas(&blob(0, 10), ObjectKind::Model, 3).unwrap().object_id;
    let plan = d.on_keeper_departure("k0").unwrap();
    assert_eq!(plan.under_replicated, vec![id]);
    d.rejoin("k0").unwrap();
    assert_eq!(d.keeper("k0").unwrap().used, 0);
    let plan = d.heal_all();
    assert_eq!(plan.copies.len(), 1);
    assert_eq!(d.under_replicated_count(), 0);
}

#[test]
fn audit_sampling() {
    let mut d = keepers(&[1000; 6]);
    for i in 0..10 {
        d.assign_replicas(&blob(i, 10), ObjectKind::Model, 3).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(d.sample_audit_pairs(0.1, &mut rng).len(), 3);
    assert_eq!(d.sample_audit_pairs(0.0, &mut rng).len(), 1);
    assert_eq!(d.sample_audit_pairs(1.0, &mut rng).len(), 30);
    let a = d.sample_audit_pairs(0.5, &mut ChaCha8Rng::seed_from_u64(4));
    let b = d.sample_audit_pairs(0.5, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(a, b);
}

#[test]
fn stores_persist() {
    let mut d = keepers(&[100; 3]);
    d.assign_replicas(&blob(0, 10), ObjectKind::Model, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_keeper_stores(dir.path(), &d).unwrap();
    assert_eq!(&load_keeper_stores(dir.path()).unwrap(), d.stores());
}

proptest! {
    #[test]
    fn churn_keeps_r_replicas(
        ops in proptest::collection::vec((0u8..3, 0usize..8), 1..60),
    ) {
        // Departures happen one at a time with a healing pass in between, so
        // at most one holder of any object is lost per pass.
        let mut d = keepers(&[10_000; 8]);
        let mut next = 0u8;
        for (op, k) in ops {
            let name = format!("k{k}");
            match op {
                0 => { d.assign_replicas(&blob(next, 20), ObjectKind::Model, 3).ok(); next = next.wrapping_add(1); }
                1 => { if d.keepers().filter(|k| k.alive).count() > 3 { d.on_keeper_departure(&name).unwrap(); } }
                _ => { d.rejoin(&name).unwrap(); }
            }
            d.heal_all();
            prop_assert!(d.check_invariants().is_ok());
            prop_assert_eq!(d.lost_count(), 0);
            for o in d.objects().values() {
                prop_assert_eq!(o.assignment.holders.len(), 3);
            }
        }
    }

    #[test]
    fn every_corruption_detected(len in 1usize..200, idx in 0usize..200, mask in 1u8..=255) {
        let mut d = keepers(&[1000; 3]);
        let id = d.assign_replicas(&blob(7, len), ObjectKind::Model, 3).unwrap().object_id;
        let idx = idx % len;
        prop_assert!(d.corrupt("k1", &id, idx, mask));
        prop_assert_eq!(d.audit("k1", &id), AuditOutcome::TamperDetected);
        prop_assert_eq!(d.audit("k0", &id), AuditOutcome::Pass);
        prop_assert_eq!(d.audit("k2", &id), AuditOutcome::Pass);
    }
}
