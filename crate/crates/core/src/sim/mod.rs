//! Deterministic tick-based simulation of miners, keepers and governance.
//!
//! Every random choice draws from a per-node ChaCha stream seeded with the
//! first 32 bytes of `SHA3-512(root_seed as u64 BE ‖ stream name)`. Stream
//! names are `miner:<id>`, `keeper:<id>`, `sys:workload`, `sys:governance`
//! and `sys:audit`.
//!
//! Each tick runs, in order: keeper churn, transaction workload, scheduled
//! proposals and governance switches, miners (one training slice each),
//! validation of new submissions, round resolution, the storage epoch
//! (tampering, audits, healing, rent), and finally one metrics row.

mod config;
mod metrics;
mod report;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{validate_chain, Chain, ChainDefect, Mempool, Transaction};
use crate::governance::{GovernanceState, Proposal, ProposalKind, Track};
use crate::mining::{
    validate_candidate, CandidateBlock, CheckName, MiningContext, MiningJob, NoCandidate, Round, SubmitOutcome,
    ThresholdSchedule,
};
use crate::storage::{AuditOutcome, HealingPlan, ObjectKind, StorageDirectory};
use crate::Hash512;

pub use config::{
    load_scenario, parse_scenario, ConfigError, GrammarEntry, KeeperBehavior, KeeperSpec, MinerBehavior, MinerSpec,
    NetworkParams, ProblemEntry, Scenario, ScheduledProposal, Workload,
};
pub use metrics::{MetricsError, MetricsLog, MetricsRow, METRICS_HEADER};
pub use report::{report, Summary};

/// The RNG stream for one named node.
pub fn node_rng(root_seed: u64, stream: &str) -> ChaCha8Rng {
    let h = Hash512::digest_parts(&[&root_seed.to_be_bytes(), stream.as_bytes()]);
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&h.as_bytes()[..32]);
    ChaCha8Rng::from_seed(seed)
}

/// Something notable that happened during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    BlockAppended { height: u64, miner: String, score: f64 },
    AppendFailed { miner: String, reason: String },
    NoCandidate { miner: String, reason: String },
    SubmissionRejected { miner: String, reason: String },
    RoundAborted { reason: String },
    KeeperDeparted { keeper: String, copies: usize },
    KeeperRejoined { keeper: String },
    ObjectLost { object: Hash512 },
    UnderReplicated { object: Hash512 },
    AuditFailed { keeper: String, object: Hash512, outcome: AuditOutcome, penalty: u64 },
    ProposalRejected { proposal: String, reason: String },
    Switched { track: Track, proposal: String, target: String },
}

/// What a node needs to re-validate an appended block later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub candidate: CandidateBlock,
    /// Threshold in force at the candidate's submission tick.
    pub threshold: f64,
    pub problem: String,
    pub grammar: String,
    pub appended_at: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: MetricsLog,
    pub chain: Chain,
    pub storage: StorageDirectory,
    pub records: Vec<BlockRecord>,
    pub events: Vec<(u64, Event)>,
    pub governance: GovernanceState,
}

impl SimOutcome {
    pub fn lost_objects(&self) -> usize {
        self.events
            .iter()
            .filter(|(_, e)| matches!(e, Event::ObjectLost { .. }))
            .count()
    }
}

struct MinerState {
    spec: MinerSpec,
    rng: ChaCha8Rng,
    job: Option<MiningJob>,
}

struct KeeperState {
    spec: KeeperSpec,
    rng: ChaCha8Rng,
    back_at: Option<u64>,
}

struct Sim<'a> {
    sc: &'a Scenario,
    chain: Chain,
    pool: Mempool,
    storage: StorageDirectory,
    gov: GovernanceState,
    /// Proposal id -> problem or grammar id.
    targets: BTreeMap<String, String>,
    schedule: ThresholdSchedule,
    last_block_at: u64,
    round: Round,
    thresholds: BTreeMap<String, f64>,
    miners: Vec<MinerState>,
    keepers: Vec<KeeperState>,
    workload_rng: ChaCha8Rng,
    gov_rng: ChaCha8Rng,
    audit_rng: ChaCha8Rng,
    tx_seq: u64,
    records: Vec<BlockRecord>,
    events: Vec<(u64, Event)>,
    metrics: MetricsLog,
}

/// Runs `sc` to completion.
pub fn run(sc: &Scenario) -> SimOutcome {
    let mut sim = Sim::new(sc);
    for tick in 1..=sc.ticks {
        sim.tick(tick);
    }
    SimOutcome {
        metrics: sim.metrics,
        chain: sim.chain,
        storage: sim.storage,
        records: sim.records,
        events: sim.events,
        governance: sim.gov,
    }
}

fn problem_kind(id: &str) -> ProposalKind {
    ProposalKind::Problem {
        train: format!("{id}.train.csv"),
        validation: format!("{id}.valid.csv"),
        metric: crate::model::Metric::Accuracy,
    }
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Self {
        let mut storage = StorageDirectory::new();
        for k in &sc.keepers {
            storage.add_keeper(&k.id, k.capacity).expect("keeper ids are unique");
        }
        let grammar_digest = Hash512::digest(sc.grammars[&sc.active_grammar].source.as_bytes());
        let gov = GovernanceState::new(
            sc.governance,
            Proposal::new(sc.active_problem.clone(), problem_kind(&sc.active_problem), "genesis", 0),
            Proposal::new(
                sc.active_grammar.clone(),
                ProposalKind::Grammar { digest: grammar_digest },
                "genesis",
                0,
            ),
        );
        let targets = BTreeMap::from([
            (sc.active_problem.clone(), sc.active_problem.clone()),
            (sc.active_grammar.clone(), sc.active_grammar.clone()),
        ]);
        let mut miners: Vec<MinerState> = sc
            .miners
            .iter()
            .map(|m| MinerState {
                spec: m.clone(),
                rng: node_rng(sc.seed, &format!("miner:{}", m.id)),
                job: None,
            })
            .collect();
        miners.sort_by(|a, b| a.spec.id.cmp(&b.spec.id));
        let keepers = sc
            .keepers
            .iter()
            .map(|k| KeeperState {
                spec: k.clone(),
                rng: node_rng(sc.seed, &format!("keeper:{}", k.id)),
                back_at: None,
            })
            .collect();
        let mut sim = Sim {
            sc,
            chain: Chain::new(sc.network.chain, sc.balances.clone()),
            pool: Mempool::new(),
            storage,
            gov,
            targets,
            schedule: sc.schedule.clone(),
            last_block_at: 0,
            round: Round::new(0, sc.network.window),
            thresholds: BTreeMap::new(),
            miners,
            keepers,
            workload_rng: node_rng(sc.seed, "sys:workload"),
            gov_rng: node_rng(sc.seed, "sys:governance"),
            audit_rng: node_rng(sc.seed, "sys:audit"),
            tx_seq: 0,
            records: Vec::new(),
            events: Vec::new(),
            metrics: MetricsLog::default(),
        };
        sim.store_datasets(0, &sc.active_problem.clone());
        sim
    }

    fn problem_id(&self) -> &str {
        &self.targets[self.gov.active_problem()]
    }

    fn grammar_id(&self) -> &str {
        &self.targets[self.gov.active_grammar()]
    }

    fn log(&mut self, tick: u64, e: Event) {
        self.events.push((tick, e));
    }

    fn log_plan(&mut self, tick: u64, plan: &HealingPlan) {
        for o in &plan.lost {
            self.log(tick, Event::ObjectLost { object: *o });
        }
        for o in &plan.under_replicated {
            self.log(tick, Event::UnderReplicated { object: *o });
        }
    }

    fn store_datasets(&mut self, tick: u64, problem: &str) {
        let miners: Vec<String> = self.miners.iter().map(|m| m.spec.id.clone()).collect();
        let net = &self.sc.network;
        for bytes in &self.sc.problems[problem].files {
            let placed = self
                .storage
                .store_dataset(bytes, net.dataset_replication, net.replication, &miners);
            if placed.is_err() {
                self.events.push((tick, Event::UnderReplicated { object: Hash512::digest(bytes) }));
            }
        }
    }

    fn abort_round(&mut self, tick: u64, reason: &str) {
        for m in &mut self.miners {
            m.job = None;
        }
        if !self.round.entries().is_empty() || self.round.first_valid_at().is_some() {
            self.log(tick, Event::RoundAborted { reason: reason.to_string() });
        }
        self.round = Round::new(self.last_block_at, self.sc.network.window);
        self.thresholds.clear();
    }

    fn tick(&mut self, tick: u64) {
        self.churn(tick);
        self.workload(tick);
        self.governance(tick);
        let submissions = self.mine(tick);
        let submitted = submissions.len() as u32;
        self.collect(tick, submissions);
        let winner_score = self.resolve(tick);
        let (audits_run, audits_failed) = self.storage_epoch(tick);
        let row = MetricsRow {
            tick,
            chain_height: self.chain.height(),
            current_threshold: self.schedule.current(tick, self.last_block_at),
            candidates_submitted: submitted,
            winner_score,
            mempool_depth: self.pool.len(),
            under_replicated_objects: self.storage.under_replicated_count(),
            audits_run,
            audits_failed,
            active_problem: self.problem_id().to_string(),
            total_supply: self.chain.ledger().total_supply(),
        };
        self.metrics.push(row);
    }

    fn churn(&mut self, tick: u64) {
        let mut departing = Vec::new();
        let mut rejoined = false;
        for k in &mut self.keepers {
            let KeeperBehavior::Churn { interval, downtime, phase } = k.spec.behavior else {
                continue;
            };
            if k.back_at.is_some_and(|t| tick >= t) {
                k.back_at = None;
                self.storage.rejoin(&k.spec.id).unwrap();
                self.events.push((tick, Event::KeeperRejoined { keeper: k.spec.id.clone() }));
                rejoined = true;
            }
            let due = tick >= phase && (tick - phase).is_multiple_of(interval) && tick > 0;
            if due && k.back_at.is_none() {
                k.back_at = Some(tick + downtime.max(1));
                departing.push(k.spec.id.clone());
            }
        }
        for id in departing {
            let plan = self.storage.on_keeper_departure(&id).unwrap();
            self.log(
                tick,
                Event::KeeperDeparted {
                    keeper: id,
                    copies: plan.copies.len(),
                },
            );
            self.log_plan(tick, &plan);
        }
        if rejoined {
            let plan = self.storage.heal_all();
            self.log_plan(tick, &plan);
        }
    }

    fn workload(&mut self, tick: u64) {
        let w = &self.sc.workload;
        if w.tx_per_tick <= 0.0 {
            return;
        }
        let rng = &mut self.workload_rng;
        let whole = w.tx_per_tick.floor() as u64;
        let extra = u64::from(rng.gen::<f64>() < w.tx_per_tick.fract());
        for _ in 0..whole + extra {
            let n = w.accounts.len() as u64;
            let s = rng.gen_range(0..n) as usize;
            let r = (s + 1 + rng.gen_range(0..n - 1) as usize) % n as usize;
            let amount = rng.gen_range(w.amount.0..=w.amount.1);
            let fee = rng.gen_range(w.fee.0..=w.fee.1);
            let tx = Transaction::new(&w.accounts[s], &w.accounts[r], amount, fee, tick, self.tx_seq);
            self.tx_seq += 1;
            let chain = &self.chain;
            // Ids are unique by sequence number, so this cannot fail.
            self.pool.submit(tx, |id| chain.contains_tx(id)).expect("fresh transaction");
        }
    }

    fn governance(&mut self, tick: u64) {
        let due: Vec<&ScheduledProposal> = self.sc.proposals.iter().filter(|p| p.at == tick).collect();
        for sp in due {
            let kind = if self.sc.problems.contains_key(&sp.target) {
                problem_kind(&sp.target)
            } else {
                let source = &self.sc.grammars[&sp.target].source;
                ProposalKind::Grammar {
                    digest: Hash512::digest(source.as_bytes()),
                }
            };
            let p = Proposal::new(sp.id.clone(), kind, sp.proposer.clone(), tick);
            if let Err(e) = self.gov.submit_proposal(p, self.chain.ledger()) {
                self.log(
                    tick,
                    Event::ProposalRejected {
                        proposal: sp.id.clone(),
                        reason: e.to_string(),
                    },
                );
                continue;
            }
            self.targets.insert(sp.id.clone(), sp.target.clone());
            for s in &sp.supporters {
                if let Err(e) = self.gov.support(&sp.id, s, self.chain.ledger()) {
                    self.log(
                        tick,
                        Event::ProposalRejected {
                            proposal: sp.id.clone(),
                            reason: e.to_string(),
                        },
                    );
                }
            }
        }
        let seed = self.gov_rng.gen();
        let switched = self.gov.maybe_switch(self.chain.ledger(), tick, seed);
        if !switched.any() {
            return;
        }
        for (track, id) in [(Track::Problem, &switched.problem), (Track::Grammar, &switched.grammar)] {
            if let Some(id) = id {
                let target = self.targets[id].clone();
                self.log(
                    tick,
                    Event::Switched {
                        track,
                        proposal: id.clone(),
                        target: target.clone(),
                    },
                );
                if track == Track::Problem {
                    self.store_datasets(tick, &target);
                }
            }
        }
        self.abort_round(tick, "governance switch");
    }

    fn mine(&mut self, tick: u64) -> Vec<CandidateBlock> {
        let sc = self.sc;
        let problem = &sc.problems[&self.targets[self.gov.active_problem()]].problem;
        let grammar = &sc.grammars[&self.targets[self.gov.active_grammar()]].grammar;
        let threshold = self.schedule.current(tick, self.last_block_at);
        let mut out = Vec::new();
        for m in &mut self.miners {
            if self.round.has_submitted(&m.spec.id) {
                continue;
            }
            if m.job.is_none() {
                let ctx = MiningContext {
                    miner: &m.spec.id,
                    chain: &self.chain,
                    mempool: &self.pool,
                    grammar,
                    problem,
                    rules: &sc.network.rules,
                };
                let mut cfg = m.spec.config.clone();
                if m.spec.behavior == MinerBehavior::Lazy {
                    cfg.train_config.time_budget = Some(1);
                }
                match MiningJob::prepare(&ctx, &cfg, m.rng.gen()) {
                    Ok(job) => m.job = Some(job),
                    Err(e) => {
                        self.events.push((tick, no_candidate(&m.spec.id, &e)));
                        continue;
                    }
                }
            }
            let job = m.job.as_mut().unwrap();
            if let Err(e) = job.train_epochs(&problem.train, sc.network.epochs_per_tick) {
                self.events.push((tick, no_candidate(&m.spec.id, &e)));
                m.job = None;
                continue;
            }
            if job.is_trained() {
                match m.job.take().unwrap().finish(problem, threshold, tick) {
                    Ok(c) => out.push(c),
                    Err(e) => self.events.push((tick, no_candidate(&m.spec.id, &e))),
                }
            }
        }
        out
    }

    fn collect(&mut self, tick: u64, submissions: Vec<CandidateBlock>) {
        let sc = self.sc;
        let problem = &sc.problems[self.problem_id()].problem;
        let grammar = &sc.grammars[self.grammar_id()].grammar;
        for c in submissions {
            let threshold = self.schedule.current(c.submitted_at, self.last_block_at);
            let report = validate_candidate(&c, &self.chain, &self.pool, grammar, problem, &sc.network.rules, threshold);
            let miner = c.miner().to_string();
            match self.round.submit(c, report) {
                SubmitOutcome::Considered => {
                    self.thresholds.insert(miner, threshold);
                }
                other => self.events.push((
                    tick,
                    Event::SubmissionRejected {
                        miner,
                        reason: describe(&other),
                    },
                )),
            }
        }
    }

    fn resolve(&mut self, tick: u64) -> Option<f64> {
        if !self.round.is_due(tick) {
            return None;
        }
        let round = std::mem::replace(&mut self.round, Round::new(tick, self.sc.network.window));
        let (winner, report) = round.resolve()?;
        let miner = winner.miner().to_string();
        let threshold = self.thresholds[&miner];
        let placed = self
            .storage
            .assign_replicas(winner.blob.as_bytes(), ObjectKind::Model, self.sc.network.replication);
        if placed.is_err() {
            self.log(tick, Event::UnderReplicated { object: winner.block.model_digest });
        }
        let score = report.recomputed_score.unwrap_or(winner.block.reported_score);
        match self.chain.append_block(winner.block.clone(), &mut self.pool, &self.storage) {
            Ok(()) => {
                self.log(
                    tick,
                    Event::BlockAppended {
                        height: winner.block.height,
                        miner,
                        score,
                    },
                );
                self.records.push(BlockRecord {
                    candidate: winner,
                    threshold,
                    problem: self.problem_id().to_string(),
                    grammar: self.grammar_id().to_string(),
                    appended_at: tick,
                });
                self.schedule.on_block_mined();
                self.last_block_at = tick;
                self.abort_round(tick, "block appended");
                Some(score)
            }
            Err(e) => {
                self.log(
                    tick,
                    Event::AppendFailed {
                        miner,
                        reason: e.to_string(),
                    },
                );
                self.abort_round(tick, "append failed");
                None
            }
        }
    }

    fn storage_epoch(&mut self, tick: u64) -> (u32, u32) {
        for k in &mut self.keepers {
            let KeeperBehavior::Tamper { rate } = k.spec.behavior else {
                continue;
            };
            if k.rng.gen::<f64>() >= rate {
                continue;
            }
            let Some(store) = self.storage.stores().get(&k.spec.id) else {
                continue;
            };
            if store.is_empty() {
                continue;
            }
            let held: Vec<(Hash512, usize)> = store.iter().map(|(id, b)| (*id, b.len())).collect();
            let (object, len) = held[k.rng.gen_range(0..held.len())];
            let index = k.rng.gen_range(0..len);
            let mask = k.rng.gen_range(1..=255u8);
            self.storage.corrupt(&k.spec.id, &object, index, mask);
        }

        let pairs = self.storage.sample_audit_pairs(self.sc.network.audit_rate, &mut self.audit_rng);
        let mut failed = 0;
        for (keeper, object) in &pairs {
            let r = self
                .storage
                .audit_and_enforce(keeper, object, &mut self.chain, &self.sc.network.storage);
            if r.outcome != AuditOutcome::Pass {
                failed += 1;
                self.log(
                    tick,
                    Event::AuditFailed {
                        keeper: r.keeper.clone(),
                        object: r.object,
                        outcome: r.outcome,
                        penalty: r.penalty,
                    },
                );
                self.log_plan(tick, &r.healing);
            }
        }
        let plan = self.storage.heal_all();
        for o in &plan.lost {
            self.events.push((tick, Event::ObjectLost { object: *o }));
        }
        self.storage
            .pay_rent(&mut self.chain, &self.sc.network.storage)
            .expect("rent fits in u64");
        (pairs.len() as u32, failed)
    }
}

fn no_candidate(miner: &str, e: &NoCandidate) -> Event {
    Event::NoCandidate {
        miner: miner.to_string(),
        reason: e.to_string(),
    }
}

fn describe(o: &SubmitOutcome) -> String {
    match o {
        SubmitOutcome::Considered => "considered".into(),
        SubmitOutcome::DuplicateMiner => "second submission in round".into(),
        SubmitOutcome::Invalid(c) => format!("failed check {} ({c})", c.number()),
        SubmitOutcome::Late => "after window close".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayError {
    Chain(ChainDefect),
    Candidate { height: u64, check: Option<CheckName>, reason: String },
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::Chain(d) => write!(f, "chain defect at height {}: {:?}", d.height, d.kind),
            ReplayError::Candidate { height, check, reason } => {
                write!(f, "block {height} fails validation at {check:?}: {reason}")
            }
        }
    }
}

/// Re-checks a finished run: the chain validates, and every block's
/// candidate passes validation against the chain prefix it extended, at its
/// recorded submission threshold.
pub fn replay_run(sc: &Scenario, out: &SimOutcome) -> Result<(), ReplayError> {
    validate_chain(&out.chain).map_err(ReplayError::Chain)?;
    for rec in &out.records {
        let h = rec.candidate.block.height;
        let err = |check, reason: String| ReplayError::Candidate { height: h, check, reason };
        let prefix = out
            .chain
            .prefix(h as usize)
            .ok_or_else(|| err(None, "block not in chain".into()))?;
        if out.chain.blocks()[h as usize] != rec.candidate.block {
            return Err(err(None, "recorded block differs from chain".into()));
        }
        let mut pool = Mempool::new();
        for tx in &rec.candidate.block.transactions {
            pool.submit(tx.clone(), |id| prefix.contains_tx(id))
                .map_err(|e| err(Some(CheckName::Transactions), e.to_string()))?;
        }
        let problem = &sc.problems.get(&rec.problem).ok_or_else(|| err(None, "unknown problem".into()))?.problem;
        let grammar = &sc.grammars.get(&rec.grammar).ok_or_else(|| err(None, "unknown grammar".into()))?.grammar;
        let report = validate_candidate(&rec.candidate, &prefix, &pool, grammar, problem, &sc.network.rules, rec.threshold);
        if !report.is_accept() {
            let reason = format!("{:?}", report.verdict);
            return Err(err(report.failed_check(), reason));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
