use std::collections::BTreeSet;

use super::{CandidateBlock, CheckName, ValidationReport};

#[derive(Debug, Clone, PartialEq)]
pub enum SubmitOutcome {
    /// Valid and in the running.
    Considered,
    /// The miner already submitted in this round.
    DuplicateMiner,
    /// Failed validation at the named check.
    Invalid(CheckName),
    /// Arrived after the confirmation window closed.
    Late,
}

/// One mining round: opens when the previous block is appended; a window
/// of `window` ticks starts at the first valid submission and the round
/// resolves when it closes.
#[derive(Debug, Clone)]
pub struct Round {
    opened_at: u64,
    window: u64,
    first_valid_at: Option<u64>,
    miners: BTreeSet<String>,
    entries: Vec<(CandidateBlock, ValidationReport)>,
}

impl Round {
    pub fn new(opened_at: u64, window: u64) -> Self {
        Round {
            opened_at,
            window,
            first_valid_at: None,
            miners: BTreeSet::new(),
            entries: Vec::new(),
        }
    }

    pub fn opened_at(&self) -> u64 {
        self.opened_at
    }

    pub fn first_valid_at(&self) -> Option<u64> {
        self.first_valid_at
    }

    /// Tick at which the round resolves, once a valid candidate exists.
    pub fn closes_at(&self) -> Option<u64> {
        self.first_valid_at.map(|t| t + self.window)
    }

    pub fn is_due(&self, now: u64) -> bool {
        self.closes_at().is_some_and(|t| now >= t)
    }

    /// Whether `miner` has already used its submission this round.
    pub fn has_submitted(&self, miner: &str) -> bool {
        self.miners.contains(miner)
    }

    pub fn entries(&self) -> &[(CandidateBlock, ValidationReport)] {
        &self.entries
    }

    /// Records a validated submission. Only a miner's first submission in
    /// the round counts, valid or not.
    pub fn submit(&mut self, c: CandidateBlock, report: ValidationReport) -> SubmitOutcome {
        if self.closes_at().is_some_and(|t| c.submitted_at > t) {
            return SubmitOutcome::Late;
        }
        if !self.miners.insert(c.miner().to_string()) {
            return SubmitOutcome::DuplicateMiner;
        }
        if let Some(check) = report.failed_check() {
            return SubmitOutcome::Invalid(check);
        }
        if self.first_valid_at.is_none() {
            self.first_valid_at = Some(c.submitted_at);
        }
        self.entries.push((c, report));
        SubmitOutcome::Considered
    }

    /// Picks the winner and drops everything else.
    pub fn resolve(self) -> Option<(CandidateBlock, ValidationReport)> {
        let i = resolve_round(&self.entries)?;
        self.entries.into_iter().nth(i)
    }
}

/// Index of the winning entry among accepted ones: highest recomputed
/// score, then earliest submission, then smallest block hash. Later entries
/// from a miner already seen are ignored.
pub fn resolve_round(entries: &[(CandidateBlock, ValidationReport)]) -> Option<usize> {
    let mut seen = BTreeSet::new();
    let mut best: Option<(usize, f64, u64, crate::Hash512)> = None;
    for (i, (c, r)) in entries.iter().enumerate() {
        if !seen.insert(c.miner()) || !r.is_accept() {
            continue;
        }
        let score = r.recomputed_score.unwrap_or(c.block.reported_score);
        let hash = c.block.hash();
        let better = match &best {
            None => true,
            Some((_, s, t, h)) => {
                score > *s || (score == *s && (c.submitted_at < *t || (c.submitted_at == *t && hash < *h)))
            }
        };
        if better {
            best = Some((i, score, c.submitted_at, hash));
        }
    }
    best.map(|b| b.0)
}
