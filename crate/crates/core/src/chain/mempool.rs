use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Transaction;
use crate::Hash512;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MempoolError {
    #[error("transaction id does not match its body")]
    BadId,
    #[error("transaction {0:?} already pending")]
    AlreadyPending(Hash512),
    #[error("transaction {0:?} already on chain")]
    AlreadyIncluded(Hash512),
}

/// Transactions submitted but not yet included in a block, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mempool {
    pending: BTreeMap<Hash512, Transaction>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a transaction. `included` reports whether an id is already on
    /// the chain.
    pub fn submit(
        &mut self,
        tx: Transaction,
        included: impl Fn(&Hash512) -> bool,
    ) -> Result<(), MempoolError> {
        if !tx.id_matches() {
            return Err(MempoolError::BadId);
        }
        if included(&tx.tx_id) {
            return Err(MempoolError::AlreadyIncluded(tx.tx_id));
        }
        if self.pending.contains_key(&tx.tx_id) {
            return Err(MempoolError::AlreadyPending(tx.tx_id));
        }
        self.pending.insert(tx.tx_id, tx);
        Ok(())
    }

    pub fn contains(&self, id: &Hash512) -> bool {
        self.pending.contains_key(id)
    }

    pub fn get(&self, id: &Hash512) -> Option<&Transaction> {
        self.pending.get(id)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Pending transactions in id order.
    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.values()
    }

    pub fn remove(&mut self, ids: impl IntoIterator<Item = Hash512>) {
        for id in ids {
            self.pending.remove(&id);
        }
    }
}

/// How a miner picks transactions from the mempool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Highest fee first, ties by ascending id.
    FeeDesc,
    /// Uniformly random subset, in the order drawn.
    Random { seed: u64 },
    /// Earliest submission tick first, ties by ascending id.
    OldestFirst,
}

/// Picks up to `n` transactions from `candidates` (any order).
pub fn select_from(candidates: Vec<&Transaction>, policy: SelectionPolicy, n: usize) -> Vec<Transaction> {
    let mut txs = candidates;
    match policy {
        SelectionPolicy::FeeDesc => {
            txs.sort_by(|a, b| b.fee.cmp(&a.fee).then(a.tx_id.cmp(&b.tx_id)));
        }
        SelectionPolicy::OldestFirst => {
            txs.sort_by(|a, b| a.submitted_at.cmp(&b.submitted_at).then(a.tx_id.cmp(&b.tx_id)));
        }
        SelectionPolicy::Random { seed } => {
            txs.sort_by_key(|a| a.tx_id);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let take = n.min(txs.len());
            // Partial Fisher-Yates with u64 draws, so the result does not
            // depend on the platform's usize width.
            for i in 0..take {
                let j = i + rng.gen_range(0..(txs.len() - i) as u64) as usize;
                txs.swap(i, j);
            }
        }
    }
    txs.truncate(n);
    txs.into_iter().cloned().collect()
}

/// Picks up to `n` pending transactions according to `policy`.
pub fn select_transactions(mempool: &Mempool, policy: SelectionPolicy, n: usize) -> Vec<Transaction> {
    select_from(mempool.iter().collect(), policy, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(fees: &[u64]) -> Mempool {
        let mut m = Mempool::new();
        for (i, &fee) in fees.iter().enumerate() {
            m.submit(Transaction::new("a", "b", 1, fee, (10 - i) as u64, i as u64), |_| false)
                .unwrap();
        }
        m
    }

    #[test]
    fn fee_desc_takes_highest() {
        let m = pool(&[1, 9, 5]);
        let fees: Vec<_> = select_transactions(&m, SelectionPolicy::FeeDesc, 2)
            .iter()
            .map(|t| t.fee)
            .collect();
        assert_eq!(fees, vec![9, 5]);
    }

    #[test]
    fn empty_pool() {
        let m = Mempool::new();
        for p in [
            SelectionPolicy::FeeDesc,
            SelectionPolicy::OldestFirst,
            SelectionPolicy::Random { seed: 3 },
        ] {
            assert!(select_transactions(&m, p, 16).is_empty());
        }
    }

    #[test]
    fn equal_fees_by_id() {
        let m = pool(&[4, 4, 4, 4]);
        let picked = select_transactions(&m, SelectionPolicy::FeeDesc, 4);
        let ids: Vec<_> = picked.iter().map(|t| t.tx_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn oldest_first_and_random() {
        let m = pool(&[1, 2, 3, 4, 5]);
        let oldest = select_transactions(&m, SelectionPolicy::OldestFirst, 2);
        // submitted_at = 10 - i, so the last two inserted are oldest.
        assert_eq!(
            oldest.iter().map(|t| t.submitted_at).collect::<Vec<_>>(),
            vec![6, 7]
        );
        let r1 = select_transactions(&m, SelectionPolicy::Random { seed: 7 }, 3);
        let r2 = select_transactions(&m, SelectionPolicy::Random { seed: 7 }, 3);
        assert_eq!(r1, r2);
        assert_eq!(r1.len(), 3);
        let all = select_transactions(&m, SelectionPolicy::Random { seed: 7 }, 10);
        assert_eq!(all.len(), 5);
    }

    #[test]
    fn submit_rejects_duplicates_and_bad_ids() {
        let mut m = Mempool::new();
        let tx = Transaction::new("a", "b", 1, 1, 0, 0);
        m.submit(tx.clone(), |_| false).unwrap();
        assert_eq!(
            m.submit(tx.clone(), |_| false),
            Err(MempoolError::AlreadyPending(tx.tx_id))
        );
        let other = Transaction::new("a", "b", 1, 1, 0, 1);
        assert_eq!(
            m.submit(other.clone(), |_| true),
            Err(MempoolError::AlreadyIncluded(other.tx_id))
        );
        let mut bad = other;
        bad.fee = 99;
        assert_eq!(m.submit(bad, |_| false), Err(MempoolError::BadId));
    }
}
