//! Scenario files: TOML, with paths resolved against the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::chain::{ChainParams, SelectionPolicy};
use crate::governance::GovernanceParams;
use crate::grammar::{parse_grammar, validate_grammar, DerivationLimits, Grammar, ResourceLimits};
use crate::mining::{ArchRules, MinerConfig, NonceMode, ThresholdPolicy, ThresholdSchedule};
use crate::model::{load_problem, Metric, Optimizer, Problem, TrainConfig};
use crate::storage::StoragePolicy;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {reason}")]
pub struct ConfigError {
    /// Dotted path of the offending field, e.g. `miners[1].train.batch_size`.
    pub path: String,
    pub reason: String,
}

fn err(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    seed: Option<u64>,
    ticks: Option<u64>,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    threshold: RawThreshold,
    #[serde(default)]
    governance: RawGovernance,
    #[serde(default)]
    grammars: Vec<RawGrammar>,
    #[serde(default)]
    problems: Vec<RawProblem>,
    active_problem: Option<String>,
    active_grammar: Option<String>,
    #[serde(default)]
    miners: Vec<RawMiner>,
    #[serde(default)]
    keepers: Vec<RawKeeper>,
    #[serde(default)]
    workload: RawWorkload,
    #[serde(default)]
    balances: BTreeMap<String, u64>,
    #[serde(default)]
    proposals: Vec<RawProposal>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    max_transactions: Option<usize>,
    block_reward: Option<u64>,
    window: Option<u64>,
    replication: Option<usize>,
    dataset_replication: Option<usize>,
    audit_rate: Option<f64>,
    rent_per_object: Option<u64>,
    penalty: Option<u64>,
    epochs_per_tick: Option<u32>,
    max_parameters: Option<u64>,
    max_derivation_steps: Option<usize>,
    max_derivation_resets: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThreshold {
    policy: Option<ThresholdPolicy>,
    t0: Option<f64>,
    decay_per_tick: Option<f64>,
    bump: Option<f64>,
    floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGovernance {
    theta: Option<f64>,
    min_active_ticks: Option<u64>,
    /// Reserved; only `proportional` is implemented.
    selection_policy: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrammar {
    id: String,
    /// Path to a BNF file, or `bundled`.
    path: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    id: String,
    /// Directory holding `<id>.train.csv` and `<id>.valid.csv`.
    dir: String,
    #[serde(default = "accuracy")]
    metric: Metric,
}

fn accuracy() -> Metric {
    Metric::Accuracy
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMiner {
    id: String,
    #[serde(default)]
    behavior: MinerBehavior,
    tx_policy: Option<SelectionPolicy>,
    nonce_mode: Option<NonceMode>,
    max_arch_retries: Option<u32>,
    #[serde(default)]
    train: RawTrain,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<u32>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    optimizer: Option<Optimizer>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeeper {
    id: String,
    capacity: Option<u64>,
    #[serde(default)]
    behavior: KeeperBehavior,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    tx_per_tick: Option<f64>,
    accounts: Option<Vec<String>>,
    amount: Option<(u64, u64)>,
    fee: Option<(u64, u64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProposal {
    at: u64,
    id: String,
    /// A problem id or grammar id declared above.
    target: String,
    proposer: String,
    #[serde(default)]
    supporters: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinerBehavior {
    #[default]
    Honest,
    /// Trains a single epoch, whatever its configuration says.
    Lazy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeeperBehavior {
    #[default]
    Reliable,
    /// Each tick, with probability `rate`, flips one byte of one held copy.
    Tamper { rate: f64 },
    /// Leaves at ticks `phase + k * interval` (k >= 1 if phase is 0) and
    /// returns, empty, `downtime` ticks later.
    Churn {
        interval: u64,
        #[serde(default)]
        downtime: u64,
        #[serde(default)]
        phase: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinerSpec {
    pub id: String,
    pub behavior: MinerBehavior,
    pub config: MinerConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeeperSpec {
    pub id: String,
    pub capacity: u64,
    pub behavior: KeeperBehavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    /// Expected transactions per tick (the integer part always arrives,
    /// the fraction with that probability).
    pub tx_per_tick: f64,
    pub accounts: Vec<String>,
    pub amount: (u64, u64),
    pub fee: (u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub chain: ChainParams,
    pub window: u64,
    pub replication: usize,
    pub dataset_replication: usize,
    pub audit_rate: f64,
    pub storage: StoragePolicy,
    pub epochs_per_tick: u32,
    pub rules: ArchRules,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarEntry {
    pub id: String,
    pub source: String,
    pub grammar: Grammar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemEntry {
    pub problem: Problem,
    /// Raw train and validation file bytes, stored as dataset objects.
    pub files: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledProposal {
    pub at: u64,
    pub id: String,
    pub target: String,
    pub proposer: String,
    pub supporters: Vec<String>,
}

/// A fully resolved simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub ticks: u64,
    pub network: NetworkParams,
    pub schedule: ThresholdSchedule,
    pub governance: GovernanceParams,
    pub grammars: BTreeMap<String, GrammarEntry>,
    pub problems: BTreeMap<String, ProblemEntry>,
    pub active_problem: String,
    pub active_grammar: String,
    pub miners: Vec<MinerSpec>,
    pub keepers: Vec<KeeperSpec>,
    pub workload: Workload,
    pub balances: BTreeMap<String, u64>,
    pub proposals: Vec<ScheduledProposal>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err(path.display().to_string(), e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut s = parse_scenario(&text, &base)?;
    if s.name.is_empty() {
        s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(s)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn probability(path: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(err(path, "must be within [0, 1]"))
    }
}

fn unique<'a>(section: &str, ids: impl Iterator<Item = &'a String>) -> Result<(), ConfigError> {
    let mut seen = std::collections::BTreeSet::new();
    for (i, id) in ids.enumerate() {
        if id.is_empty() {
            return Err(err(format!("{section}[{i}].id"), "empty id"));
        }
        if !seen.insert(id) {
            return Err(err(format!("{section}[{i}].id"), format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

/// Parses scenario text; relative paths are taken from `base`.
pub fn parse_scenario(text: &str, base: &Path) -> Result<Scenario, ConfigError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let path = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
            .unwrap_or("")
            .to_string();
        err(path, msg)
    })?;

    let seed = raw.seed.ok_or_else(|| err("seed", "required"))?;
    let ticks = raw.ticks.unwrap_or(500);

    let n = &raw.network;
    let replication = n.replication.unwrap_or(3);
    let dataset_replication = n.dataset_replication.unwrap_or(5);
    if replication == 0 {
        return Err(err("network.replication", "must be at least 1"));
    }
    if dataset_replication < replication {
        return Err(err(
            "network.dataset_replication",
            format!("{dataset_replication} is below network.replication {replication}"),
        ));
    }
    let epochs_per_tick = n.epochs_per_tick.unwrap_or(5);
    if epochs_per_tick == 0 {
        return Err(err("network.epochs_per_tick", "must be positive"));
    }
    let max_transactions = n.max_transactions.unwrap_or(16);
    if max_transactions == 0 {
        return Err(err("network.max_transactions", "must be positive"));
    }
    let network = NetworkParams {
        chain: ChainParams {
            max_transactions,
            block_reward: n.block_reward.unwrap_or(50),
        },
        window: n.window.unwrap_or(5),
        replication,
        dataset_replication,
        audit_rate: probability("network.audit_rate", n.audit_rate.unwrap_or(0.1))?,
        storage: StoragePolicy {
            rent_per_object: n.rent_per_object.unwrap_or(1),
            penalty: n.penalty.unwrap_or(5),
        },
        epochs_per_tick,
        rules: ArchRules {
            resources: ResourceLimits {
                max_parameters: n.max_parameters.unwrap_or(ArchRules::default().resources.max_parameters),
            },
            derivation: DerivationLimits {
                max_steps: n.max_derivation_steps.unwrap_or(DerivationLimits::default().max_steps),
                max_resets: n.max_derivation_resets.unwrap_or(DerivationLimits::default().max_resets),
            },
        },
    };

    let t = &raw.threshold;
    let schedule = ThresholdSchedule::new(
        t.policy.unwrap_or(ThresholdPolicy::DecayOnly),
        t.t0.unwrap_or(0.9),
        t.decay_per_tick.unwrap_or(0.005),
        t.bump.unwrap_or(0.0),
        t.floor.unwrap_or(0.5),
    )
    .map_err(|e| err("threshold", e.to_string()))?;

    let gv = &raw.governance;
    let theta = gv.theta.unwrap_or(0.10);
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(err("governance.theta", "must be within (0, 1]"));
    }
    if let Some(p) = &gv.selection_policy {
        if p != "proportional" {
            return Err(err("governance.selection_policy", format!("{p:?} is not implemented")));
        }
    }
    let governance = GovernanceParams {
        theta,
        min_active_ticks: gv.min_active_ticks.unwrap_or(50),
    };

    unique("grammars", raw.grammars.iter().map(|g| &g.id))?;
    let mut grammars = BTreeMap::new();
    for (i, g) in raw.grammars.iter().enumerate() {
        let source = if g.path == "bundled" {
            crate::grammar::BUNDLED_GRAMMAR.to_string()
        } else {
            std::fs::read_to_string(resolve(base, &g.path))
                .map_err(|e| err(format!("grammars[{i}].path"), e.to_string()))?
        };
        let grammar = parse_grammar(&source).map_err(|e| err(format!("grammars[{i}].path"), e.to_string()))?;
        validate_grammar(&grammar).map_err(|d| err(format!("grammars[{i}].path"), format!("{d:?}")))?;
        grammars.insert(g.id.clone(), GrammarEntry { id: g.id.clone(), source, grammar });
    }
    if grammars.is_empty() {
        let grammar = crate::grammar::bundled_grammar();
        grammars.insert(
            "bundled".to_string(),
            GrammarEntry {
                id: "bundled".into(),
                source: crate::grammar::BUNDLED_GRAMMAR.to_string(),
                grammar,
            },
        );
    }

    unique("problems", raw.problems.iter().map(|p| &p.id))?;
    let mut problems = BTreeMap::new();
    for (i, p) in raw.problems.iter().enumerate() {
        let dir = resolve(base, &p.dir);
        let mut problem = load_problem(&dir, &p.id).map_err(|e| err(format!("problems[{i}]"), e.to_string()))?;
        problem.metric = p.metric;
        let files = [".train.csv", ".valid.csv"]
            .iter()
            .map(|suffix| std::fs::read(dir.join(format!("{}{suffix}", p.id))))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(format!("problems[{i}].dir"), e.to_string()))?;
        problems.insert(p.id.clone(), ProblemEntry { problem, files });
    }
    if problems.is_empty() {
        return Err(err("problems", "at least one problem is required"));
    }
    if grammars.keys().any(|g| problems.contains_key(g)) {
        return Err(err("grammars", "grammar and problem ids must differ"));
    }

    let active_problem = raw.active_problem.clone().unwrap_or_else(|| raw.problems[0].id.clone());
    if !problems.contains_key(&active_problem) {
        return Err(err("active_problem", format!("unknown problem {active_problem:?}")));
    }
    let active_grammar = raw
        .active_grammar
        .clone()
        .unwrap_or_else(|| grammars.keys().next().unwrap().clone());
    if !grammars.contains_key(&active_grammar) {
        return Err(err("active_grammar", format!("unknown grammar {active_grammar:?}")));
    }

    unique("miners", raw.miners.iter().map(|m| &m.id))?;
    let mut miners = Vec::new();
    for (i, m) in raw.miners.iter().enumerate() {
        let d = TrainConfig::default();
        let train_config = TrainConfig {
            epochs: m.train.epochs.unwrap_or(d.epochs),
            batch_size: m.train.batch_size.unwrap_or(d.batch_size),
            learning_rate: m.train.learning_rate.unwrap_or(d.learning_rate),
            optimizer: m.train.optimizer.unwrap_or(d.optimizer),
            seed: m.train.seed.unwrap_or(i as u64),
            time_budget: None,
        };
        let p = format!("miners[{i}].train");
        if train_config.epochs == 0 {
            return Err(err(format!("{p}.epochs"), "must be positive"));
        }
        if !(train_config.learning_rate > 0.0) {
            return Err(err(format!("{p}.learning_rate"), "must be positive"));
        }
        if train_config.batch_size == 0 {
            return Err(err(format!("{p}.batch_size"), "must be positive"));
        }
        for (id, entry) in &problems {
            if train_config.batch_size > entry.problem.train.len() {
                return Err(err(
                    format!("{p}.batch_size"),
                    format!("exceeds the {} rows of problem {id:?}", entry.problem.train.len()),
                ));
            }
        }
        let max_arch_retries = m.max_arch_retries.unwrap_or(256);
        if max_arch_retries == 0 {
            return Err(err(format!("miners[{i}].max_arch_retries"), "must be at least 1"));
        }
        miners.push(MinerSpec {
            id: m.id.clone(),
            behavior: m.behavior,
            config: MinerConfig {
                tx_policy: m.tx_policy.unwrap_or(SelectionPolicy::FeeDesc),
                train_config,
                max_arch_retries,
                nonce_mode: m.nonce_mode.unwrap_or(NonceMode::FreeNonce),
            },
        });
    }

    unique("keepers", raw.keepers.iter().map(|k| &k.id))?;
    let mut keepers = Vec::new();
    for (i, k) in raw.keepers.iter().enumerate() {
        match k.behavior {
            KeeperBehavior::Tamper { rate } => {
                probability(&format!("keepers[{i}].behavior.rate"), rate)?;
            }
            KeeperBehavior::Churn { interval: 0, .. } => {
                return Err(err(format!("keepers[{i}].behavior.interval"), "must be positive"));
            }
            _ => {}
        }
        if miners.iter().any(|m| m.id == k.id) {
            return Err(err(format!("keepers[{i}].id"), "keeper and miner ids must differ"));
        }
        keepers.push(KeeperSpec {
            id: k.id.clone(),
            capacity: k.capacity.unwrap_or(1 << 30),
            behavior: k.behavior,
        });
    }

    let w = &raw.workload;
    let accounts = w
        .accounts
        .clone()
        .unwrap_or_else(|| raw.balances.keys().cloned().collect());
    let amount = w.amount.unwrap_or((1, 10));
    let fee = w.fee.unwrap_or((0, 5));
    if amount.0 > amount.1 {
        return Err(err("workload.amount", "lower bound above upper bound"));
    }
    if fee.0 > fee.1 {
        return Err(err("workload.fee", "lower bound above upper bound"));
    }
    let tx_per_tick = w.tx_per_tick.unwrap_or(0.5);
    if !(tx_per_tick >= 0.0 && tx_per_tick.is_finite()) {
        return Err(err("workload.tx_per_tick", "must be a non-negative number"));
    }
    if tx_per_tick > 0.0 && accounts.len() < 2 {
        return Err(err("workload.accounts", "need at least two accounts to generate transfers"));
    }
    let workload = Workload {
        tx_per_tick,
        accounts,
        amount,
        fee,
    };

    let mut proposals = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for (i, p) in raw.proposals.iter().enumerate() {
        if !problems.contains_key(&p.target) && !grammars.contains_key(&p.target) {
            return Err(err(format!("proposals[{i}].target"), format!("unknown problem or grammar {:?}", p.target)));
        }
        if problems.contains_key(&p.id) || grammars.contains_key(&p.id) || !ids.insert(p.id.clone()) {
            return Err(err(format!("proposals[{i}].id"), format!("id {:?} already in use", p.id)));
        }
        proposals.push(ScheduledProposal {
            at: p.at,
            id: p.id.clone(),
            target: p.target.clone(),
            proposer: p.proposer.clone(),
            supporters: p.supporters.clone(),
        });
    }
    proposals.sort_by_key(|p| p.at);

    Ok(Scenario {
        name: raw.name.clone().unwrap_or_default(),
        seed,
        ticks,
        network,
        schedule,
        governance,
        grammars,
        problems,
        active_problem,
        active_grammar,
        miners,
        keepers,
        workload,
        balances: raw.balances,
        proposals,
    })
}
