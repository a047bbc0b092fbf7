//! Proof-of-useful-work mining: candidate construction, the threshold
//! schedule, candidate validation and round resolution.

mod attempt;
mod round;
mod schedule;
mod validate;

use serde::{Deserialize, Serialize};

use crate::chain::{Block, SelectionPolicy};
use crate::grammar::{DerivationLimits, ResourceLimits, Sentence};
use crate::model::{ModelBlob, TrainConfig};

pub use attempt::{mine_attempt, MiningContext, MiningJob};
pub use round::{resolve_round, Round, SubmitOutcome};
pub use schedule::{current_threshold, ScheduleError, ThresholdPolicy, ThresholdSchedule};
pub use validate::{validate_candidate, Check, CheckName, ValidationReport, Verdict};

/// Architecture rules every node applies identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchRules {
    pub resources: ResourceLimits,
    pub derivation: DerivationLimits,
}

impl Default for ArchRules {
    fn default() -> Self {
        ArchRules {
            resources: ResourceLimits { max_parameters: 20_000 },
            derivation: DerivationLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonceMode {
    /// Random nonce per try, transactions fixed by the policy.
    FreeNonce,
    /// Nonce pinned to 0; each retry draws a new transaction subset.
    TxCombination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinerConfig {
    pub tx_policy: SelectionPolicy,
    pub train_config: TrainConfig,
    pub max_arch_retries: u32,
    pub nonce_mode: NonceMode,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            tx_policy: SelectionPolicy::FeeDesc,
            train_config: TrainConfig::default(),
            max_arch_retries: 256,
            nonce_mode: NonceMode::FreeNonce,
        }
    }
}

/// Why a mining attempt produced nothing to broadcast.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoCandidate {
    #[error("score {score} below threshold {threshold}")]
    BelowThreshold { score: f64, threshold: f64 },
    #[error("no feasible architecture in {attempts} tries")]
    InfeasibleExhausted { attempts: u32 },
    #[error("training diverged")]
    Divergence,
    #[error("tx_combination mode needs pending transactions")]
    EmptyMempoolWhenRequired,
    #[error("training setup rejected: {0}")]
    BadTrainConfig(String),
}

/// A block proposal with the model that backs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBlock {
    pub block: Block,
    #[serde(with = "blob_hex")]
    pub blob: ModelBlob,
    pub derivation_sentence: Sentence,
    pub submitted_at: u64,
}

impl CandidateBlock {
    pub fn miner(&self) -> &str {
        &self.block.miner
    }
}

mod blob_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::ModelBlob;

    pub fn serialize<S: Serializer>(b: &ModelBlob, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b.as_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ModelBlob, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(ModelBlob).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests;
