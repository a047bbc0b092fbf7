//! Stake-weighted choice of the active training problem and grammar.
//!
//! Any holder can open a proposal and others can back it. Once the lock-up
//! on the current choice has passed and open proposals are backed by at
//! least `theta` of the supply, one is drawn at random with probability
//! proportional to its backers' combined balance.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::Ledger;
use crate::model::Metric;
use crate::Hash512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Problem,
    Grammar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalKind {
    /// Dataset references are resolved by whoever hosts the files.
    Problem {
        train: String,
        validation: String,
        metric: Metric,
    },
    Grammar { digest: Hash512 },
}

impl ProposalKind {
    pub fn track(&self) -> Track {
        match self {
            ProposalKind::Problem { .. } => Track::Problem,
            ProposalKind::Grammar { .. } => Track::Grammar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: String,
    pub kind: ProposalKind,
    pub proposer: String,
    pub supporters: BTreeSet<String>,
    pub created_at: u64,
}

impl Proposal {
    pub fn new(id: impl Into<String>, kind: ProposalKind, proposer: impl Into<String>, created_at: u64) -> Self {
        let proposer = proposer.into();
        Proposal {
            id: id.into(),
            kind,
            supporters: BTreeSet::from([proposer.clone()]),
            proposer,
            created_at,
        }
    }

    pub fn track(&self) -> Track {
        self.kind.track()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GovernanceError {
    #[error("{0} holds no currency")]
    ZeroBalance(String),
    #[error("proposal id {0} already used")]
    DuplicateId(String),
    #[error("unknown proposal {0}")]
    UnknownProposal(String),
    #[error("proposal {0} is no longer open")]
    ClosedProposal(String),
}

/// Summed balance of the supporters, read now.
pub fn weight(p: &Proposal, ledger: &Ledger) -> u128 {
    p.supporters.iter().map(|a| ledger.balance(a) as u128).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernanceParams {
    /// Fraction of supply that must back open proposals before a switch.
    pub theta: f64,
    pub min_active_ticks: u64,
}

impl Default for GovernanceParams {
    fn default() -> Self {
        GovernanceParams {
            theta: 0.10,
            min_active_ticks: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwitchReport {
    pub problem: Option<String>,
    pub grammar: Option<String>,
}

impl SwitchReport {
    pub fn any(&self) -> bool {
        self.problem.is_some() || self.grammar.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Active {
    id: String,
    since: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GovernanceState {
    params: GovernanceParams,
    active: BTreeMap<Track, Active>,
    open: BTreeMap<String, Proposal>,
    accepted: BTreeMap<String, Proposal>,
}

impl GovernanceState {
    /// Starts with `problem` and `grammar` accepted and active since tick 0.
    ///
    /// # Panics
    /// If the proposals are on the wrong tracks or share an id.
    pub fn new(params: GovernanceParams, problem: Proposal, grammar: Proposal) -> Self {
        assert_eq!(problem.track(), Track::Problem);
        assert_eq!(grammar.track(), Track::Grammar);
        assert_ne!(problem.id, grammar.id);
        let active = BTreeMap::from([
            (Track::Problem, Active { id: problem.id.clone(), since: 0 }),
            (Track::Grammar, Active { id: grammar.id.clone(), since: 0 }),
        ]);
        let accepted = BTreeMap::from([(problem.id.clone(), problem), (grammar.id.clone(), grammar)]);
        GovernanceState {
            params,
            active,
            open: BTreeMap::new(),
            accepted,
        }
    }

    pub fn params(&self) -> &GovernanceParams {
        &self.params
    }

    pub fn active(&self, track: Track) -> &Proposal {
        &self.accepted[&self.active[&track].id]
    }

    pub fn active_problem(&self) -> &str {
        &self.active[&Track::Problem].id
    }

    pub fn active_grammar(&self) -> &str {
        &self.active[&Track::Grammar].id
    }

    pub fn activated_at(&self, track: Track) -> u64 {
        self.active[&track].since
    }

    pub fn open_proposals(&self) -> impl Iterator<Item = &Proposal> {
        self.open.values()
    }

    pub fn proposal(&self, id: &str) -> Option<&Proposal> {
        self.open.get(id).or_else(|| self.accepted.get(id))
    }

    pub fn submit_proposal(&mut self, p: Proposal, ledger: &Ledger) -> Result<(), GovernanceError> {
        if self.open.contains_key(&p.id) || self.accepted.contains_key(&p.id) {
            return Err(GovernanceError::DuplicateId(p.id));
        }
        if ledger.balance(&p.proposer) == 0 {
            return Err(GovernanceError::ZeroBalance(p.proposer));
        }
        let mut p = p;
        p.supporters = BTreeSet::from([p.proposer.clone()]);
        self.open.insert(p.id.clone(), p);
        Ok(())
    }

    /// Adds `account` as a supporter; supporting twice changes nothing.
    pub fn support(&mut self, id: &str, account: &str, ledger: &Ledger) -> Result<(), GovernanceError> {
        if self.accepted.contains_key(id) {
            return Err(GovernanceError::ClosedProposal(id.to_string()));
        }
        let p = self
            .open
            .get_mut(id)
            .ok_or_else(|| GovernanceError::UnknownProposal(id.to_string()))?;
        if ledger.balance(account) == 0 {
            return Err(GovernanceError::ZeroBalance(account.to_string()));
        }
        p.supporters.insert(account.to_string());
        Ok(())
    }

    /// Open proposals on `track` with their current weights, by id.
    pub fn weights(&self, track: Track, ledger: &Ledger) -> Vec<(String, u128)> {
        self.open
            .values()
            .filter(|p| p.track() == track)
            .map(|p| (p.id.clone(), weight(p, ledger)))
            .collect()
    }

    /// Selection probability of each open proposal as an exact fraction
    /// `(id, weight, total)`.
    pub fn selection_probabilities(&self, track: Track, ledger: &Ledger) -> Vec<(String, u128, u128)> {
        let ws = self.weights(track, ledger);
        let total: u128 = ws.iter().map(|w| w.1).sum();
        ws.into_iter().map(|(id, w)| (id, w, total)).collect()
    }

    /// Whether `track` may switch at `now`.
    pub fn switch_due(&self, track: Track, ledger: &Ledger, now: u64) -> bool {
        let since = self.active[&track].since;
        if now < since || now - since < self.params.min_active_ticks {
            return false;
        }
        let backing: u128 = self.weights(track, ledger).iter().map(|w| w.1).sum();
        backing > 0 && backing as f64 >= self.params.theta * ledger.total_supply() as f64
    }

    /// Checks both tracks (problem first) and switches those that are due,
    /// drawing from one generator seeded with `seed`.
    pub fn maybe_switch(&mut self, ledger: &Ledger, now: u64, seed: u64) -> SwitchReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = SwitchReport::default();
        for track in [Track::Problem, Track::Grammar] {
            if !self.switch_due(track, ledger, now) {
                continue;
            }
            let ws = self.weights(track, ledger);
            let Some(id) = draw_weighted(&ws, &mut rng) else {
                continue;
            };
            let p = self.open.remove(&id).expect("drawn from open proposals");
            self.accepted.insert(id.clone(), p);
            self.active.insert(track, Active { id: id.clone(), since: now });
            match track {
                Track::Problem => report.problem = Some(id),
                Track::Grammar => report.grammar = Some(id),
            }
        }
        report
    }
}

/// Draws an id with probability weight / total. None if every weight is 0.
pub fn draw_weighted<R: Rng>(weights: &[(String, u128)], rng: &mut R) -> Option<String> {
    let total: u128 = weights.iter().map(|w| w.1).sum();
    if total == 0 {
        return None;
    }
    let mut r = rng.gen_range(0..total);
    for (id, w) in weights {
        if r < *w {
            return Some(id.clone());
        }
        r -= w;
    }
    unreachable!("draw below total")
}
