use serde::{Deserialize, Serialize};

use crate::Hash512;

/// A value transfer. Accounts are plain ids; there are no signatures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: Hash512,
    pub sender: String,
    pub receiver: String,
    pub amount: u64,
    pub fee: u64,
    /// Tick at which the transaction entered the mempool.
    pub submitted_at: u64,
    /// Sender-chosen sequence number; keeps otherwise identical transfers
    /// distinct.
    pub seq: u64,
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Transaction {
    pub fn new(
        sender: impl Into<String>,
        receiver: impl Into<String>,
        amount: u64,
        fee: u64,
        submitted_at: u64,
        seq: u64,
    ) -> Self {
        let mut tx = Transaction {
            tx_id: Hash512::ZERO,
            sender: sender.into(),
            receiver: receiver.into(),
            amount,
            fee,
            submitted_at,
            seq,
        };
        tx.tx_id = tx.compute_id();
        tx
    }

    /// Body encoding the id is computed over: length-prefixed sender and
    /// receiver, then amount, fee, submission tick and sequence number as
    /// big-endian u64.
    pub fn body_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + self.sender.len() + self.receiver.len());
        put_str(&mut out, &self.sender);
        put_str(&mut out, &self.receiver);
        out.extend_from_slice(&self.amount.to_be_bytes());
        out.extend_from_slice(&self.fee.to_be_bytes());
        out.extend_from_slice(&self.submitted_at.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out
    }

    pub fn compute_id(&self) -> Hash512 {
        Hash512::digest(&self.body_bytes())
    }

    pub fn id_matches(&self) -> bool {
        self.tx_id == self.compute_id()
    }

    /// Amount plus fee, the sender's total debit.
    pub fn debit(&self) -> Option<u64> {
        self.amount.checked_add(self.fee)
    }
}

/// prev_hash (64) ‖ tx count (u32 BE) ‖ tx ids (64 each) ‖ nonce (u64 BE).
pub fn canonical_preimage(prev_hash: &Hash512, transactions: &[Transaction], nonce: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(76 + 64 * transactions.len());
    out.extend_from_slice(prev_hash.as_bytes());
    out.extend_from_slice(&(transactions.len() as u32).to_be_bytes());
    for tx in transactions {
        out.extend_from_slice(tx.tx_id.as_bytes());
    }
    out.extend_from_slice(&nonce.to_be_bytes());
    out
}

/// SHA3-512 of [`canonical_preimage`]. This is both the chaining hash and the
/// seed of the architecture derivation.
pub fn block_hash(prev_hash: &Hash512, transactions: &[Transaction], nonce: u64) -> Hash512 {
    Hash512::digest(&canonical_preimage(prev_hash, transactions, nonce))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash512,
    pub transactions: Vec<Transaction>,
    pub nonce: u64,
    pub miner: String,
    pub model_digest: Hash512,
    pub reported_score: f64,
    pub problem_id: String,
    pub timestamp: u64,
}

impl Block {
    /// Height 0, all-zero previous hash, no transactions and no model.
    pub fn genesis() -> Self {
        Block {
            height: 0,
            prev_hash: Hash512::ZERO,
            transactions: Vec::new(),
            nonce: 0,
            miner: String::new(),
            model_digest: Hash512::ZERO,
            reported_score: 0.0,
            problem_id: String::new(),
            timestamp: 0,
        }
    }

    pub fn hash(&self) -> Hash512 {
        block_hash(&self.prev_hash, &self.transactions, self.nonce)
    }

    pub fn preimage(&self) -> Vec<u8> {
        canonical_preimage(&self.prev_hash, &self.transactions, self.nonce)
    }

    pub fn fees(&self) -> u64 {
        self.transactions.iter().map(|t| t.fee).sum()
    }

    /// Full stored record: the preimage followed by the fields it does not
    /// cover and the transaction bodies.
    pub fn record_bytes(&self) -> Vec<u8> {
        let mut out = self.preimage();
        out.extend_from_slice(&self.height.to_be_bytes());
        put_str(&mut out, &self.miner);
        out.extend_from_slice(self.model_digest.as_bytes());
        out.extend_from_slice(&self.reported_score.to_bits().to_be_bytes());
        put_str(&mut out, &self.problem_id);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        for tx in &self.transactions {
            let body = tx.body_bytes();
            out.extend_from_slice(&(body.len() as u32).to_be_bytes());
            out.extend_from_slice(&body);
        }
        out
    }

    /// Digest over [`Block::record_bytes`].
    pub fn seal(&self) -> Hash512 {
        Hash512::digest(&self.record_bytes())
    }
}
