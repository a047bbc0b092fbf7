use std::path::Path;

use super::*;
use crate::model::{write_problem, xor_problem};

fn xor_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_problem(dir.path(), &xor_problem()).unwrap();
    dir
}

fn scenario(dir: &Path, body: &str) -> Scenario {
    let text = format!(
        r#"
seed = 7
ticks = 60

[[problems]]
id = "xor"
dir = "."

[balances]
alice = 1000
bob = 1000
carol = 1000

{body}
"#
    );
    parse_scenario(&text, dir).unwrap()
}

const MINERS: &str = r#"
[[miners]]
id = "m1"
train = { epochs = 3, batch_size = 4, optimizer = { kind = "sgd" } }

[[miners]]
id = "m2"
train = { epochs = 3, batch_size = 4, optimizer = { kind = "sgd" } }

[[keepers]]
id = "k1"
[[keepers]]
id = "k2"
[[keepers]]
id = "k3"
[[keepers]]
id = "k4"
[[keepers]]
id = "k5"

[threshold]
t0 = 0.5
floor = 0.5
"#;

#[test]
fn no_miners_no_blocks() {
    let dir = xor_dir();
    let sc = scenario(dir.path(), "[[keepers]]\nid = \"k1\"\n");
    let out = run(&sc);
    assert_eq!(out.metrics.len(), 60);
    assert_eq!(out.chain.height(), 0);
    assert!(out.metrics.rows.iter().all(|r| r.winner_score.is_none()));
}

#[test]
fn miners_append_blocks_that_replay() {
    let dir = xor_dir();
    let sc = scenario(dir.path(), MINERS);
    let out = run(&sc);
    assert!(out.chain.height() > 0, "events: {:?}", out.events);
    assert_eq!(out.records.len() as u64, out.chain.height());
    replay_run(&sc, &out).unwrap();
    let supply = out.chain.ledger();
    assert_eq!(supply.total_supply(), supply.expected_supply());
    out.storage.check_invariants().unwrap();
}

#[test]
fn runs_are_deterministic() {
    let dir = xor_dir();
    let sc = scenario(dir.path(), MINERS);
    let a = run(&sc);
    let b = run(&sc);
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
    assert_eq!(crate::chain::encode_chain(&a.chain), crate::chain::encode_chain(&b.chain));
}

#[test]
fn replay_catches_a_forged_threshold() {
    let dir = xor_dir();
    let sc = scenario(dir.path(), MINERS);
    let mut out = run(&sc);
    assert!(!out.records.is_empty());
    out.records[0].threshold = 1.5;
    assert!(matches!(
        replay_run(&sc, &out),
        Err(ReplayError::Candidate { check: Some(CheckName::Score), .. })
    ));
}

#[test]
fn tampering_keeper_is_caught() {
    let dir = xor_dir();
    let body = format!(
        "{MINERS}\n[[keepers]]\nid = \"evil\"\nbehavior = {{ kind = \"tamper\", rate = 1.0 }}\n\n[network]\naudit_rate = 1.0\n"
    );
    let sc = scenario(dir.path(), &body);
    let out = run(&sc);
    assert!(out
        .events
        .iter()
        .any(|(_, e)| matches!(e, Event::AuditFailed { keeper, .. } if keeper == "evil")));
    assert!(out.chain.ledger().tallies()["evil"].penalties > 0);
    assert_eq!(out.lost_objects(), 0);
}

#[test]
fn node_rngs_are_independent_streams() {
    let mut a = node_rng(1, "miner:a");
    let mut b = node_rng(1, "miner:b");
    let mut a2 = node_rng(1, "miner:a");
    let x: u64 = a.gen();
    assert_ne!(x, b.gen::<u64>());
    assert_eq!(x, a2.gen::<u64>());
}

#[test]
fn config_errors_name_the_field() {
    let dir = xor_dir();
    let cases = [
        ("ticks = 5\n[[problems]]\nid = \"xor\"\ndir = \".\"\n", "seed"),
        (
            "seed = 1\n[[problems]]\nid = \"xor\"\ndir = \".\"\n[network]\nreplication = 4\ndataset_replication = 3\n",
            "network.dataset_replication",
        ),
        (
            "seed = 1\n[[problems]]\nid = \"xor\"\ndir = \".\"\n[[miners]]\nid = \"m\"\ntrain = { batch_size = 16 }\n",
            "miners[0].train.batch_size",
        ),
        ("seed = 1\nbogus = 3\n[[problems]]\nid = \"xor\"\ndir = \".\"\n", "bogus"),
        ("seed = 1\n[[problems]]\nid = \"nope\"\ndir = \".\"\n", "problems[0]"),
        (
            "seed = 1\n[[problems]]\nid = \"xor\"\ndir = \".\"\n[governance]\nselection_policy = \"max\"\n",
            "governance.selection_policy",
        ),
    ];
    for (text, path) in cases {
        let e = parse_scenario(text, dir.path()).unwrap_err();
        assert_eq!(e.path, path, "{e}");
    }
}

#[test]
fn metrics_summary() {
    let dir = xor_dir();
    let sc = scenario(dir.path(), MINERS);
    let out = run(&sc);
    let s = report(&out.metrics, Some(out.chain.ledger())).unwrap();
    assert_eq!(s.blocks, out.chain.height());
    assert_eq!(s.ticks, 60);
    assert!(s.threshold_min <= s.threshold_max);
    assert!(s.to_string().contains("blocks"));
    assert!(report(&MetricsLog::default(), None).is_none());
}
