//! The ledger-bearing chain: blocks linked by SHA3-512 over their canonical
//! preimage, a balance ledger, and the pending-transaction pool.

mod block;
mod ledger;
mod mempool;
mod persist;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use block::{block_hash, canonical_preimage, Block, Transaction};
pub use ledger::{Ledger, LedgerError, RewardTally};
pub use mempool::{select_from, select_transactions, Mempool, MempoolError, SelectionPolicy};
pub use persist::{decode_chain, encode_chain, load_chain, save_chain, PersistError};
pub(crate) use persist::Reader;

use crate::Hash512;

/// Lookup of stored model digests; implemented by the storage directory.
pub trait ModelRegistry {
    fn has_model(&self, digest: &Hash512) -> bool;
}

impl ModelRegistry for BTreeSet<Hash512> {
    fn has_model(&self, digest: &Hash512) -> bool {
        self.contains(digest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Maximum transactions per block.
    pub max_transactions: usize,
    pub block_reward: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            max_transactions: 16,
            block_reward: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("block height {got}, expected {expected}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("block does not build on the current tip")]
    StalePrevHash,
    #[error("{count} transactions exceed the limit of {max}")]
    TooManyTransactions { count: usize, max: usize },
    #[error("duplicate transaction {0:?}")]
    DuplicateTransaction(Hash512),
    #[error("transaction {0:?} is not pending")]
    NotPending(Hash512),
    #[error("transaction {0:?} id does not match its body")]
    TxIdMismatch(Hash512),
    #[error(transparent)]
    InsufficientBalance(#[from] LedgerError),
    #[error("model digest {0:?} is not registered in storage")]
    UnknownModelDigest(Hash512),
    #[error("reported score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("timestamp {got} precedes the tip's {tip}")]
    TimestampRegression { tip: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentKind {
    Rent,
    Penalty,
}

/// A balance change made outside of blocks (keeper rent and penalties),
/// applied after the block at `after_height`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerAdjustment {
    pub after_height: u64,
    pub account: String,
    pub kind: AdjustmentKind,
    pub amount: u64,
}

/// An append-only chain. Blocks below the tip are never mutated through this
/// API.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    params: ChainParams,
    genesis_balances: BTreeMap<String, u64>,
    blocks: Vec<Block>,
    seals: Vec<Hash512>,
    adjustments: Vec<LedgerAdjustment>,
    ledger: Ledger,
    included: BTreeSet<Hash512>,
}

impl Chain {
    pub fn new(params: ChainParams, genesis_balances: BTreeMap<String, u64>) -> Self {
        let genesis = Block::genesis();
        Chain {
            params,
            ledger: Ledger::with_genesis(genesis_balances.clone()),
            genesis_balances,
            seals: vec![genesis.seal()],
            blocks: vec![genesis],
            adjustments: Vec::new(),
            included: BTreeSet::new(),
        }
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn genesis_balances(&self) -> &BTreeMap<String, u64> {
        &self.genesis_balances
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn seals(&self) -> &[Hash512] {
        &self.seals
    }

    pub fn adjustments(&self) -> &[LedgerAdjustment] {
        &self.adjustments
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn tip_hash(&self) -> Hash512 {
        self.tip().hash()
    }

    pub fn contains_tx(&self, id: &Hash512) -> bool {
        self.included.contains(id)
    }

    /// Checks `block` against the tip, the mempool and storage without
    /// changing anything. Returns the ledger as it would be after the block.
    pub fn check_block(
        &self,
        block: &Block,
        mempool: &Mempool,
        storage: &dyn ModelRegistry,
    ) -> Result<Ledger, ChainError> {
        let expected = self.height() + 1;
        if block.height != expected {
            return Err(ChainError::WrongHeight {
                expected,
                got: block.height,
            });
        }
        if block.prev_hash != self.tip_hash() {
            return Err(ChainError::StalePrevHash);
        }
        if block.transactions.len() > self.params.max_transactions {
            return Err(ChainError::TooManyTransactions {
                count: block.transactions.len(),
                max: self.params.max_transactions,
            });
        }
        let mut seen = BTreeSet::new();
        for tx in &block.transactions {
            if !seen.insert(tx.tx_id) || self.included.contains(&tx.tx_id) {
                return Err(ChainError::DuplicateTransaction(tx.tx_id));
            }
            if !tx.id_matches() {
                return Err(ChainError::TxIdMismatch(tx.tx_id));
            }
            if !mempool.contains(&tx.tx_id) {
                return Err(ChainError::NotPending(tx.tx_id));
            }
        }
        if !(0.0..=1.0).contains(&block.reported_score) {
            return Err(ChainError::ScoreOutOfRange(block.reported_score));
        }
        if block.timestamp < self.tip().timestamp {
            return Err(ChainError::TimestampRegression {
                tip: self.tip().timestamp,
                got: block.timestamp,
            });
        }
        if !storage.has_model(&block.model_digest) {
            return Err(ChainError::UnknownModelDigest(block.model_digest));
        }
        let mut ledger = self.ledger.clone();
        ledger.apply_block(block, self.params.block_reward)?;
        Ok(ledger)
    }

    /// Appends `block` if it extends the tip with pending, distinct,
    /// affordable transactions and a stored model. On success the ledger is
    /// updated and the included transactions leave the mempool.
    pub fn append_block(
        &mut self,
        block: Block,
        mempool: &mut Mempool,
        storage: &dyn ModelRegistry,
    ) -> Result<(), ChainError> {
        let ledger = self.check_block(&block, mempool, storage)?;
        self.ledger = ledger;
        mempool.remove(block.transactions.iter().map(|t| t.tx_id));
        self.included.extend(block.transactions.iter().map(|t| t.tx_id));
        self.seals.push(block.seal());
        self.blocks.push(block);
        Ok(())
    }

    /// Mints storage rent to `account` and records it for replay.
    pub fn credit_rent(&mut self, account: &str, amount: u64) -> Result<(), LedgerError> {
        self.ledger.credit_rent(account, amount)?;
        self.adjustments.push(LedgerAdjustment {
            after_height: self.height(),
            account: account.to_string(),
            kind: AdjustmentKind::Rent,
            amount,
        });
        Ok(())
    }

    /// Burns up to `amount` from `account` (floored at zero) and records the
    /// amount actually burned.
    pub fn penalize(&mut self, account: &str, amount: u64) -> u64 {
        let burned = self.ledger.penalize(account, amount);
        self.adjustments.push(LedgerAdjustment {
            after_height: self.height(),
            account: account.to_string(),
            kind: AdjustmentKind::Penalty,
            amount: burned,
        });
        burned
    }

    /// Chain holding only the first `len` blocks, with the ledger replayed.
    /// Returns `None` when `len` is zero or longer than the chain.
    pub fn prefix(&self, len: usize) -> Option<Chain> {
        if len == 0 || len > self.blocks.len() {
            return None;
        }
        let last = len as u64 - 1;
        let mut chain = Chain {
            params: self.params,
            genesis_balances: self.genesis_balances.clone(),
            blocks: self.blocks[..len].to_vec(),
            seals: self.seals[..len].to_vec(),
            adjustments: self
                .adjustments
                .iter()
                .filter(|a| a.after_height <= last)
                .cloned()
                .collect(),
            ledger: Ledger::default(),
            included: BTreeSet::new(),
        };
        chain.ledger = replay_ledger(&chain).ok()?;
        chain.included = chain
            .blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(|t| t.tx_id))
            .collect();
        Some(chain)
    }

    /// Reassembles a chain from stored parts without checking it; run
    /// [`validate_chain`] on the result.
    pub(crate) fn from_parts(
        params: ChainParams,
        genesis_balances: BTreeMap<String, u64>,
        blocks: Vec<Block>,
        seals: Vec<Hash512>,
        adjustments: Vec<LedgerAdjustment>,
    ) -> Chain {
        let mut chain = Chain {
            params,
            ledger: Ledger::with_genesis(genesis_balances.clone()),
            genesis_balances,
            blocks,
            seals,
            adjustments,
            included: BTreeSet::new(),
        };
        if let Ok(ledger) = replay_ledger(&chain) {
            chain.ledger = ledger;
        }
        chain.included = chain
            .blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(|t| t.tx_id))
            .collect();
        chain
    }

    #[cfg(test)]
    pub(crate) fn blocks_mut(&mut self) -> &mut Vec<Block> {
        &mut self.blocks
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DefectKind {
    NotGenesis,
    HeightGap,
    LinkBroken,
    SealMismatch,
    TxIdMismatch,
    DuplicateTransaction,
    TooManyTransactions,
    ScoreOutOfRange,
    TimestampRegression,
    Ledger(String),
    AdjustmentOrder,
    LedgerDivergence,
}

/// First problem found by [`validate_chain`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("chain defect at height {height}: {kind:?}")]
pub struct ChainDefect {
    pub height: u64,
    pub kind: DefectKind,
}

fn defect(height: u64, kind: DefectKind) -> ChainDefect {
    ChainDefect { height, kind }
}

fn replay_ledger(chain: &Chain) -> Result<Ledger, ChainDefect> {
    let mut ledger = Ledger::with_genesis(chain.genesis_balances.clone());
    let mut adjustments = chain.adjustments.iter().peekable();
    for block in &chain.blocks {
        if block.height > 0 {
            ledger
                .apply_block(block, chain.params.block_reward)
                .map_err(|e| defect(block.height, DefectKind::Ledger(e.to_string())))?;
        }
        while let Some(adj) = adjustments.next_if(|a| a.after_height == block.height) {
            let applied = match adj.kind {
                AdjustmentKind::Rent => ledger.credit_rent(&adj.account, adj.amount),
                AdjustmentKind::Penalty => ledger.burn_exact(&adj.account, adj.amount),
            };
            applied.map_err(|e| defect(block.height, DefectKind::Ledger(e.to_string())))?;
        }
    }
    if let Some(adj) = adjustments.next() {
        return Err(defect(adj.after_height, DefectKind::AdjustmentOrder));
    }
    Ok(ledger)
}

/// Recomputes every link, seal and transaction id, and replays the ledger
/// from genesis. Hash links are checked over the whole chain first, so a
/// change to a block's preimage is reported at the height whose link it
/// breaks.
pub fn validate_chain(chain: &Chain) -> Result<(), ChainDefect> {
    let blocks = &chain.blocks;
    let Some(first) = blocks.first() else {
        return Err(defect(0, DefectKind::NotGenesis));
    };
    if *first != Block::genesis() {
        return Err(defect(0, DefectKind::NotGenesis));
    }
    for (i, pair) in blocks.windows(2).enumerate() {
        let h = (i + 1) as u64;
        if pair[1].height != h {
            return Err(defect(h, DefectKind::HeightGap));
        }
        if pair[1].prev_hash != pair[0].hash() {
            return Err(defect(h, DefectKind::LinkBroken));
        }
    }

    if chain.seals.len() != blocks.len() {
        return Err(defect(chain.seals.len().min(blocks.len()) as u64, DefectKind::SealMismatch));
    }
    let mut seen = BTreeSet::new();
    let mut last_ts = 0;
    for (block, seal) in blocks.iter().zip(&chain.seals) {
        let h = block.height;
        if block.seal() != *seal {
            return Err(defect(h, DefectKind::SealMismatch));
        }
        if block.transactions.len() > chain.params.max_transactions {
            return Err(defect(h, DefectKind::TooManyTransactions));
        }
        for tx in &block.transactions {
            if !tx.id_matches() {
                return Err(defect(h, DefectKind::TxIdMismatch));
            }
            if !seen.insert(tx.tx_id) {
                return Err(defect(h, DefectKind::DuplicateTransaction));
            }
        }
        if !(0.0..=1.0).contains(&block.reported_score) {
            return Err(defect(h, DefectKind::ScoreOutOfRange));
        }
        if block.timestamp < last_ts {
            return Err(defect(h, DefectKind::TimestampRegression));
        }
        last_ts = block.timestamp;
    }

    let mut last_adj = 0;
    for adj in &chain.adjustments {
        if adj.after_height < last_adj || adj.after_height > chain.height() {
            return Err(defect(adj.after_height, DefectKind::AdjustmentOrder));
        }
        last_adj = adj.after_height;
    }
    let replayed = replay_ledger(chain)?;
    if replayed.balances() != chain.ledger.balances() {
        return Err(defect(chain.height(), DefectKind::LedgerDivergence));
    }
    Ok(())
}
