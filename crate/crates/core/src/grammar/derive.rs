//! Hash-driven leftmost derivation.
//!
//! The seed `m` starts at `H`. Each expansion of a nonterminal with `n > 1`
//! alternatives first restarts `m := H` when `m < n`, then picks
//! `i = m mod n` and continues with `m := m / n`. Single-alternative rules
//! consume nothing.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::{Grammar, Sentence, Sym};
use crate::Hash512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationLimits {
    pub max_steps: usize,
    pub max_resets: usize,
}

impl Default for DerivationLimits {
    fn default() -> Self {
        DerivationLimits {
            max_steps: 10_000,
            max_resets: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeriveError {
    #[error("derivation exceeded {0} expansion steps")]
    StepLimit(usize),
    #[error("derivation exceeded {0} seed resets")]
    ResetLimit(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationStep {
    pub nonterminal: String,
    pub alternative: usize,
    /// Seed value the choice was taken from (after any reset).
    pub m: BigUint,
    pub reset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DerivationTrace {
    pub steps: Vec<DerivationStep>,
    pub resets: usize,
    pub sentence: Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub sentence: Sentence,
    pub trace: DerivationTrace,
}

/// Derives a sentence of `g` from the integer `seed`.
///
/// `g` is expected to have passed `validate_grammar`; a grammar with
/// non-productive rules will run into the step limit instead.
pub fn derive(
    g: &Grammar,
    seed: &BigUint,
    limits: &DerivationLimits,
) -> Result<Derivation, DeriveError> {
    let compiled = g.compiled();
    let mut m = seed.clone();
    let mut stack = vec![Sym::N(g.start_index() as u32)];
    let mut tokens: Vec<String> = Vec::new();
    let mut steps: Vec<DerivationStep> = Vec::new();
    let mut resets = 0usize;

    while let Some(sym) = stack.pop() {
        let rule = match sym {
            Sym::T(t) => {
                tokens.push(compiled.terminals[t as usize].clone());
                continue;
            }
            Sym::N(r) => r as usize,
        };
        if steps.len() == limits.max_steps {
            return Err(DeriveError::StepLimit(limits.max_steps));
        }
        let alts = &compiled.rules[rule];
        let n = alts.len() as u32;
        let (choice, m_used, reset) = if n == 1 {
            (0usize, m.clone(), false)
        } else {
            let mut reset = false;
            if m < BigUint::from(n) {
                resets += 1;
                if resets > limits.max_resets {
                    return Err(DeriveError::ResetLimit(limits.max_resets));
                }
                m = seed.clone();
                reset = true;
            }
            let used = m.clone();
            let i = (&m % n).to_usize().expect("remainder below n");
            m /= n;
            (i, used, reset)
        };
        steps.push(DerivationStep {
            nonterminal: g.rules()[rule].head.clone(),
            alternative: choice,
            m: m_used,
            reset,
        });
        stack.extend(alts[choice].iter().rev().copied());
    }

    let sentence = Sentence(tokens);
    Ok(Derivation {
        sentence: sentence.clone(),
        trace: DerivationTrace {
            steps,
            resets,
            sentence,
        },
    })
}

/// [`derive`] with the digest read as a big-endian unsigned integer.
pub fn derive_from_hash(
    g: &Grammar,
    hash: &Hash512,
    limits: &DerivationLimits,
) -> Result<Derivation, DeriveError> {
    derive(g, &hash.to_biguint(), limits)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("step {step}: expected to expand <{expected}>, trace says <{found}>")]
    WrongNonterminal {
        step: usize,
        expected: String,
        found: String,
    },
    #[error("step {step}: alternative {index} out of range for <{nonterminal}>")]
    BadAlternative {
        step: usize,
        nonterminal: String,
        index: usize,
    },
    #[error("trace ended with nonterminals left to expand")]
    Incomplete,
    #[error("trace has more steps than the derivation needs")]
    TrailingSteps,
}

impl DerivationTrace {
    /// Re-expands the recorded choices from the start symbol, leftmost
    /// first, and returns the resulting sentence.
    pub fn replay(&self, g: &Grammar) -> Result<Sentence, ReplayError> {
        let compiled = g.compiled();
        let mut stack = vec![Sym::N(g.start_index() as u32)];
        let mut tokens = Vec::new();
        let mut steps = self.steps.iter().enumerate();
        while let Some(sym) = stack.pop() {
            match sym {
                Sym::T(t) => tokens.push(compiled.terminals[t as usize].clone()),
                Sym::N(r) => {
                    let (i, step) = steps.next().ok_or(ReplayError::Incomplete)?;
                    let head = &g.rules()[r as usize].head;
                    if &step.nonterminal != head {
                        return Err(ReplayError::WrongNonterminal {
                            step: i,
                            expected: head.clone(),
                            found: step.nonterminal.clone(),
                        });
                    }
                    let alt = compiled.rules[r as usize].get(step.alternative).ok_or_else(|| {
                        ReplayError::BadAlternative {
                            step: i,
                            nonterminal: head.clone(),
                            index: step.alternative,
                        }
                    })?;
                    stack.extend(alt.iter().rev().copied());
                }
            }
        }
        if steps.next().is_some() {
            return Err(ReplayError::TrailingSteps);
        }
        Ok(Sentence(tokens))
    }
}
