use std::collections::BTreeSet;

use super::*;
use crate::chain::tests::funded_chain;
use crate::chain::{Chain, Mempool, Transaction};
use crate::grammar::{bundled_grammar, Grammar};
use crate::model::{deserialize, evaluate, stripes_problem, two_spirals_problem, xor_problem, Optimizer, Problem};
use crate::Hash512;

fn quick_cfg() -> MinerConfig {
    MinerConfig {
        train_config: TrainConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 0.05,
            optimizer: Optimizer::Sgd,
            seed: 1,
            time_budget: None,
        },
        ..MinerConfig::default()
    }
}

struct World {
    chain: Chain,
    pool: Mempool,
    models: BTreeSet<Hash512>,
    grammar: Grammar,
    rules: ArchRules,
}

impl World {
    fn new() -> World {
        let (chain, mut pool, models) = funded_chain();
        for i in 0..5 {
            let tx = Transaction::new("alice", "bob", 10 + i, i, 0, i);
            pool.submit(tx, |id| chain.contains_tx(id)).unwrap();
        }
        World {
            chain,
            pool,
            models,
            grammar: bundled_grammar(),
            rules: ArchRules::default(),
        }
    }

    fn ctx<'a>(&'a self, miner: &'a str, problem: &'a Problem) -> MiningContext<'a> {
        MiningContext {
            miner,
            chain: &self.chain,
            mempool: &self.pool,
            grammar: &self.grammar,
            problem,
            rules: &self.rules,
        }
    }

    fn validate(&self, c: &CandidateBlock, problem: &Problem, threshold: f64) -> ValidationReport {
        validate_candidate(c, &self.chain, &self.pool, &self.grammar, problem, &self.rules, threshold)
    }

    fn append(&mut self, c: &CandidateBlock) {
        self.models.insert(c.block.model_digest);
        self.chain.append_block(c.block.clone(), &mut self.pool, &self.models).unwrap();
    }
}

#[test]
fn zero_threshold_always_yields_a_candidate() {
    let w = World::new();
    let p = two_spirals_problem(1);
    for seed in 0..5 {
        let c = mine_attempt(&w.ctx("m", &p), &quick_cfg(), seed, 0.0, 1).unwrap();
        assert_eq!(c.block.height, 1);
        assert_eq!(c.block.model_digest, model_digest_of(&c));
    }
}

fn model_digest_of(c: &CandidateBlock) -> Hash512 {
    crate::model::model_digest(c.blob.as_bytes())
}

#[test]
fn impossible_threshold_never_yields() {
    let w = World::new();
    let p = xor_problem();
    for seed in 0..5 {
        assert!(matches!(
            mine_attempt(&w.ctx("m", &p), &quick_cfg(), seed, 1.01, 1),
            Err(NoCandidate::BelowThreshold { .. })
        ));
    }
}

#[test]
fn stripes_candidate_score_reproduces() {
    let w = World::new();
    let p = stripes_problem(2);
    let c = mine_attempt(&w.ctx("m", &p), &MinerConfig::default(), 7, 0.0, 3).unwrap();
    let net = deserialize(c.blob.as_bytes(), &w.grammar).unwrap();
    assert_eq!(evaluate(&net, &p.validation).to_bits(), c.block.reported_score.to_bits());
    assert_eq!(net.sentence(), &c.derivation_sentence);
    let r = w.validate(&c, &p, 0.0);
    assert!(r.is_accept(), "{r:?}");
    assert_eq!(r.checks.len(), 7);
}

#[test]
fn candidate_invariants_hold() {
    let w = World::new();
    let p = xor_problem();
    let c = mine_attempt(&w.ctx("m", &p), &quick_cfg(), 11, 0.0, 2).unwrap();
    let d = crate::grammar::derive_from_hash(&w.grammar, &c.block.hash(), &w.rules.derivation).unwrap();
    assert_eq!(d.sentence, c.derivation_sentence);
    assert_eq!(c.block.transactions.len(), 5);
    // Fee order.
    let fees: Vec<u64> = c.block.transactions.iter().map(|t| t.fee).collect();
    assert_eq!(fees, vec![4, 3, 2, 1, 0]);
}

#[test]
fn stale_candidate_rejected_at_prev_hash() {
    let mut w = World::new();
    let p = xor_problem();
    let a = mine_attempt(&w.ctx("a", &p), &quick_cfg(), 1, 0.0, 1).unwrap();
    let b = mine_attempt(&w.ctx("b", &p), &quick_cfg(), 2, 0.0, 1).unwrap();
    assert!(w.validate(&a, &p, 0.0).is_accept());
    assert!(w.validate(&b, &p, 0.0).is_accept());
    w.append(&a);
    let r = w.validate(&b, &p, 0.0);
    assert_eq!(r.failed_check(), Some(CheckName::PrevHash));
    assert_eq!(r.checks.len(), 1);
}

#[test]
fn tampered_blob_rejected_at_digest() {
    let w = World::new();
    let p = xor_problem();
    let mut c = mine_attempt(&w.ctx("m", &p), &quick_cfg(), 4, 0.0, 1).unwrap();
    let last = c.blob.0.len() - 1;
    c.blob.0[last] ^= 0x01;
    assert_eq!(w.validate(&c, &p, 0.0).failed_check(), Some(CheckName::Digest));
}

#[test]
fn other_rejections() {
    let w = World::new();
    let p = xor_problem();
    let good = mine_attempt(&w.ctx("m", &p), &quick_cfg(), 5, 0.0, 1).unwrap();

    let mut c = good.clone();
    c.block.reported_score = 1.0 - c.block.reported_score + 0.125;
    assert_eq!(w.validate(&c, &p, 0.0).failed_check(), Some(CheckName::Score));

    assert_eq!(w.validate(&good, &p, 1.01).failed_check(), Some(CheckName::Score));

    let mut c = good.clone();
    c.block.nonce ^= 1;
    let r = w.validate(&c, &p, 0.0);
    assert_ne!(r.recomputed_hash, Some(good.block.hash()));
    assert_eq!(r.failed_check(), Some(CheckName::Derivation));

    let mut c = good.clone();
    c.block.transactions.push(c.block.transactions[0].clone());
    assert_eq!(w.validate(&c, &p, 0.0).failed_check(), Some(CheckName::Transactions));

    let mut c = good.clone();
    c.block.transactions[0].amount += 1;
    assert_eq!(w.validate(&c, &p, 0.0).failed_check(), Some(CheckName::BlockHash));

    let mut c = good.clone();
    c.block.prev_hash = Hash512::digest(b"elsewhere");
    assert_eq!(w.validate(&c, &p, 0.0).failed_check(), Some(CheckName::PrevHash));
    assert_ne!(c.block.hash(), good.block.hash());

    let other = stripes_problem(0);
    assert_eq!(w.validate(&good, &other, 0.0).failed_check(), Some(CheckName::BlobShape));

    let mut c = good.clone();
    c.blob.0.truncate(c.blob.0.len() - 8);
    assert_eq!(w.validate(&c, &p, 0.0).failed_check(), Some(CheckName::BlobShape));
}

#[test]
fn tx_combination_pins_nonce() {
    let w = World::new();
    let p = xor_problem();
    let cfg = MinerConfig {
        nonce_mode: NonceMode::TxCombination,
        ..quick_cfg()
    };
    let c = mine_attempt(&w.ctx("m", &p), &cfg, 9, 0.0, 1).unwrap();
    assert_eq!(c.block.nonce, 0);
    assert!(!c.block.transactions.is_empty());
    assert!(w.validate(&c, &p, 0.0).is_accept());

    let (chain, pool, _) = funded_chain();
    let empty = World {
        chain,
        pool,
        ..World::new()
    };
    assert_eq!(
        mine_attempt(&empty.ctx("m", &p), &cfg, 9, 0.0, 1),
        Err(NoCandidate::EmptyMempoolWhenRequired)
    );
}

#[test]
fn unaffordable_transactions_skipped() {
    let mut w = World::new();
    let tx = Transaction::new("carol", "bob", 5, 100, 0, 99);
    w.pool.submit(tx.clone(), |_| false).unwrap();
    let p = xor_problem();
    let c = mine_attempt(&w.ctx("m", &p), &quick_cfg(), 1, 0.0, 1).unwrap();
    assert!(!c.block.transactions.contains(&tx));
}

#[test]
fn retries_exhaust() {
    let w = World::new();
    let p = xor_problem();
    let rules = ArchRules {
        resources: crate::grammar::ResourceLimits { max_parameters: 1 },
        ..ArchRules::default()
    };
    let ctx = MiningContext { rules: &rules, ..w.ctx("m", &p) };
    let cfg = MinerConfig {
        max_arch_retries: 10,
        ..quick_cfg()
    };
    assert_eq!(
        mine_attempt(&ctx, &cfg, 0, 0.0, 1),
        Err(NoCandidate::InfeasibleExhausted { attempts: 10 })
    );
}

fn entry(w: &World, p: &Problem, miner: &str, seed: u64, tick: u64, score: f64) -> (CandidateBlock, ValidationReport) {
    let c = mine_attempt(&w.ctx(miner, p), &quick_cfg(), seed, 0.0, tick).unwrap();
    let mut r = w.validate(&c, p, 0.0);
    r.recomputed_score = Some(score);
    (c, r)
}

#[test]
fn resolution_order() {
    let w = World::new();
    let p = xor_problem();
    let es = vec![
        entry(&w, &p, "a", 1, 1, 0.91),
        entry(&w, &p, "b", 2, 1, 0.95),
        entry(&w, &p, "c", 3, 1, 0.93),
    ];
    assert_eq!(resolve_round(&es), Some(1));

    let es = vec![entry(&w, &p, "a", 1, 7, 0.5), entry(&w, &p, "b", 2, 5, 0.5)];
    assert_eq!(resolve_round(&es), Some(1));

    let mut es = vec![entry(&w, &p, "a", 1, 5, 0.5), entry(&w, &p, "b", 2, 5, 0.5)];
    let expect = if es[0].0.block.hash() < es[1].0.block.hash() { 0 } else { 1 };
    assert_eq!(resolve_round(&es), Some(expect));

    es.push(entry(&w, &p, "a", 3, 1, 0.99));
    assert_eq!(resolve_round(&es), Some(expect));
}

#[test]
fn round_window_and_duplicates() {
    let mut w = World::new();
    let p = xor_problem();
    let mut round = Round::new(0, 5);
    let (a, ra) = entry(&w, &p, "a", 1, 2, 0.5);
    let (a2, ra2) = entry(&w, &p, "a", 2, 3, 0.9);
    let (b, rb) = entry(&w, &p, "b", 3, 7, 0.7);
    let (c, rc) = entry(&w, &p, "c", 4, 8, 0.99);
    assert!(!round.is_due(100));
    assert_eq!(round.submit(a, ra), SubmitOutcome::Considered);
    assert_eq!(round.closes_at(), Some(7));
    assert_eq!(round.submit(a2, ra2), SubmitOutcome::DuplicateMiner);
    assert_eq!(round.submit(b, rb), SubmitOutcome::Considered);
    assert_eq!(round.submit(c, rc), SubmitOutcome::Late);
    assert!(round.is_due(7));
    let (winner, _) = round.resolve().unwrap();
    assert_eq!(winner.miner(), "b");
    w.append(&winner);
}

#[test]
fn invalid_submissions_do_not_open_window() {
    let w = World::new();
    let p = xor_problem();
    let mut round = Round::new(0, 5);
    let (mut a, _) = entry(&w, &p, "a", 1, 2, 0.5);
    a.block.reported_score = 2.0;
    let r = w.validate(&a, &p, 0.0);
    assert!(matches!(round.submit(a, r), SubmitOutcome::Invalid(_)));
    assert_eq!(round.closes_at(), None);
    assert!(round.resolve().is_none());
}

#[test]
fn winner_always_appends() {
    let mut w = World::new();
    let p = xor_problem();
    for h in 1..=4u64 {
        let mut round = Round::new(h, 5);
        for (i, m) in ["a", "b", "c"].iter().enumerate() {
            let c = mine_attempt(&w.ctx(m, &p), &quick_cfg(), h * 10 + i as u64, 0.0, h).unwrap();
            let r = w.validate(&c, &p, 0.0);
            round.submit(c, r);
        }
        let losers: Vec<CandidateBlock> = round.entries().iter().map(|e| e.0.clone()).collect();
        let (winner, report) = round.resolve().unwrap();
        assert!(report.is_accept());
        w.append(&winner);
        for l in losers {
            assert_eq!(w.validate(&l, &p, 0.0).failed_check(), Some(CheckName::PrevHash));
        }
    }
    assert_eq!(w.chain.height(), 4);
    crate::chain::validate_chain(&w.chain).unwrap();
}
