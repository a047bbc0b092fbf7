use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::{block_hash, Chain, Mempool};
use crate::grammar::{check_feasibility, derive_from_hash, Grammar, Sentence};
use crate::model::{deserialize, evaluate, Problem};
use crate::Hash512;

use super::{ArchRules, CandidateBlock};

/// The validation checks, in the order they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    PrevHash,
    Transactions,
    BlockHash,
    Derivation,
    BlobShape,
    Digest,
    Score,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        CheckName::PrevHash,
        CheckName::Transactions,
        CheckName::BlockHash,
        CheckName::Derivation,
        CheckName::BlobShape,
        CheckName::Digest,
        CheckName::Score,
    ];

    /// 1-based position in the check order.
    pub fn number(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CheckName::PrevHash => "prev_hash",
            CheckName::Transactions => "transactions",
            CheckName::BlockHash => "block_hash",
            CheckName::Derivation => "derivation",
            CheckName::BlobShape => "blob_shape",
            CheckName::Digest => "digest",
            CheckName::Score => "score",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: CheckName,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject { check: CheckName, reason: String },
}

/// Outcome of re-checking a candidate. Checks stop at the first failure,
/// so `checks` lists the passes followed by at most one failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub recomputed_hash: Option<Hash512>,
    pub recomputed_sentence: Option<Sentence>,
    pub recomputed_score: Option<f64>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn is_accept(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    /// The check that rejected the candidate, if any.
    pub fn failed_check(&self) -> Option<CheckName> {
        match &self.verdict {
            Verdict::Accept => None,
            Verdict::Reject { check, .. } => Some(*check),
        }
    }
}

struct Builder {
    report: ValidationReport,
}

impl Builder {
    fn pass(&mut self, name: CheckName, detail: impl Into<String>) {
        self.report.checks.push(Check {
            name,
            passed: true,
            detail: detail.into(),
        });
    }

    fn fail(mut self, name: CheckName, reason: impl Into<String>) -> ValidationReport {
        let reason = reason.into();
        self.report.checks.push(Check {
            name,
            passed: false,
            detail: reason.clone(),
        });
        self.report.verdict = Verdict::Reject { check: name, reason };
        self.report
    }
}

/// Re-checks a candidate against the current tip without training
/// anything. The candidate must reach `threshold_at_submission` and its
/// reported score must equal the recomputed one exactly.
pub fn validate_candidate(
    c: &CandidateBlock,
    chain: &Chain,
    mempool: &Mempool,
    grammar: &Grammar,
    problem: &Problem,
    rules: &ArchRules,
    threshold_at_submission: f64,
) -> ValidationReport {
    let mut b = Builder {
        report: ValidationReport {
            verdict: Verdict::Accept,
            recomputed_hash: None,
            recomputed_sentence: None,
            recomputed_score: None,
            checks: Vec::new(),
        },
    };
    let block = &c.block;

    // (1) position on the chain
    if block.prev_hash != chain.tip_hash() {
        return b.fail(CheckName::PrevHash, "prev_hash does not match the current tip");
    }
    if block.height != chain.height() + 1 {
        return b.fail(CheckName::PrevHash, format!("height {} does not extend tip {}", block.height, chain.height()));
    }
    if block.timestamp < chain.tip().timestamp || c.submitted_at != block.timestamp {
        return b.fail(CheckName::PrevHash, "timestamp precedes the tip or differs from submission");
    }
    b.pass(CheckName::PrevHash, chain.tip_hash().short());

    // (2) transactions
    let max = chain.params().max_transactions;
    if block.transactions.len() > max {
        return b.fail(CheckName::Transactions, format!("{} transactions, limit {max}", block.transactions.len()));
    }
    let mut seen = BTreeSet::new();
    for tx in &block.transactions {
        if !seen.insert(tx.tx_id) {
            return b.fail(CheckName::Transactions, format!("duplicate {}", tx.tx_id.short()));
        }
        if !mempool.contains(&tx.tx_id) || chain.contains_tx(&tx.tx_id) {
            return b.fail(CheckName::Transactions, format!("{} is not pending", tx.tx_id.short()));
        }
    }
    let mut ledger = chain.ledger().clone();
    if let Err(e) = ledger.apply_block(block, chain.params().block_reward) {
        return b.fail(CheckName::Transactions, e.to_string());
    }
    b.pass(CheckName::Transactions, format!("{} pending", block.transactions.len()));

    // (3) block hash from the canonical preimage
    if let Some(tx) = block.transactions.iter().find(|t| !t.id_matches()) {
        return b.fail(CheckName::BlockHash, format!("transaction id {} does not match its body", tx.tx_id.short()));
    }
    let hash = block_hash(&block.prev_hash, &block.transactions, block.nonce);
    b.report.recomputed_hash = Some(hash);
    b.pass(CheckName::BlockHash, hash.short());

    // (4) hash -> sentence, compared with the candidate and its blob header
    let sentence = match derive_from_hash(grammar, &hash, &rules.derivation) {
        Ok(d) => d.sentence,
        Err(e) => return b.fail(CheckName::Derivation, e.to_string()),
    };
    b.report.recomputed_sentence = Some(sentence.clone());
    if sentence != c.derivation_sentence {
        return b.fail(CheckName::Derivation, "declared sentence differs from derivation");
    }
    let net = match deserialize(c.blob.as_bytes(), grammar) {
        Ok(n) => n,
        Err(e) => {
            // An unreadable header cannot match; an unreadable body is a
            // shape failure.
            if header_sentence(c.blob.as_bytes()).as_ref() != Some(&sentence) {
                return b.fail(CheckName::Derivation, "blob header sentence differs from derivation");
            }
            b.pass(CheckName::Derivation, sentence.to_string());
            return b.fail(CheckName::BlobShape, e.to_string());
        }
    };
    if net.sentence() != &sentence {
        return b.fail(CheckName::Derivation, "blob header sentence differs from derivation");
    }
    b.pass(CheckName::Derivation, sentence.to_string());

    // (5) shapes
    if net.input_width() != problem.input_width() || net.num_classes() != problem.num_classes() {
        return b.fail(CheckName::BlobShape, "input width or class count differs from the problem");
    }
    if let Err(e) = check_feasibility(net.spec(), net.input_width(), &rules.resources) {
        return b.fail(CheckName::BlobShape, e.to_string());
    }
    if !net.all_finite() {
        return b.fail(CheckName::BlobShape, "non-finite weight");
    }
    b.pass(CheckName::BlobShape, format!("{} parameters", net.parameter_count()));

    // (6) digest
    let digest = c.blob.digest();
    if digest != block.model_digest {
        return b.fail(CheckName::Digest, "model digest mismatch");
    }
    b.pass(CheckName::Digest, digest.short());

    // (7) score
    if block.problem_id != problem.id {
        return b.fail(CheckName::Score, format!("trained for {:?}, active problem is {:?}", block.problem_id, problem.id));
    }
    let score = evaluate(&net, &problem.validation);
    b.report.recomputed_score = Some(score);
    if score.to_bits() != block.reported_score.to_bits() {
        return b.fail(CheckName::Score, format!("reported {} but recomputed {score}", block.reported_score));
    }
    if score < threshold_at_submission {
        return b.fail(CheckName::Score, format!("score {score} below threshold {threshold_at_submission}"));
    }
    b.pass(CheckName::Score, score.to_string());
    b.report
}

/// Reads just the sentence out of a blob header.
fn header_sentence(blob: &[u8]) -> Option<Sentence> {
    let len = u32::from_be_bytes(blob.get(14..18)?.try_into().ok()?) as usize;
    let text = std::str::from_utf8(blob.get(18..18usize.checked_add(len)?)?).ok()?;
    Some(Sentence::from_text(text))
}
