use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Block;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("account {account} holds {balance}, needs {needed}")]
    InsufficientBalance {
        account: String,
        balance: u64,
        needed: u64,
    },
    #[error("amount overflow")]
    Overflow,
}

/// Per-account income, for reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardTally {
    pub block_rewards: u64,
    pub fees: u64,
    pub rent: u64,
    pub penalties: u64,
}

impl RewardTally {
    /// Newly minted value credited minus penalties burned. Fees are transfers
    /// and not included.
    pub fn net_minted(&self) -> i128 {
        self.block_rewards as i128 + self.rent as i128 - self.penalties as i128
    }
}

/// Account balances plus the supply bookkeeping needed to check that every
/// token is accounted for.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Ledger {
    balances: BTreeMap<String, u64>,
    genesis_supply: u64,
    minted_block_rewards: u64,
    minted_rent: u64,
    burned_penalties: u64,
    tallies: BTreeMap<String, RewardTally>,
}

impl Ledger {
    pub fn with_genesis(balances: BTreeMap<String, u64>) -> Self {
        let genesis_supply = balances.values().sum();
        Ledger {
            balances,
            genesis_supply,
            ..Default::default()
        }
    }

    pub fn balance(&self, account: &str) -> u64 {
        self.balances.get(account).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<String, u64> {
        &self.balances
    }

    pub fn tallies(&self) -> &BTreeMap<String, RewardTally> {
        &self.tallies
    }

    /// Sum of all balances.
    pub fn total_supply(&self) -> u64 {
        self.balances.values().sum()
    }

    pub fn genesis_supply(&self) -> u64 {
        self.genesis_supply
    }

    /// Genesis supply plus everything minted, minus everything burned.
    pub fn expected_supply(&self) -> u64 {
        self.genesis_supply + self.minted_block_rewards + self.minted_rent - self.burned_penalties
    }

    pub fn minted_block_rewards(&self) -> u64 {
        self.minted_block_rewards
    }

    pub fn minted_rent(&self) -> u64 {
        self.minted_rent
    }

    pub fn burned_penalties(&self) -> u64 {
        self.burned_penalties
    }

    fn credit(&mut self, account: &str, amount: u64) -> Result<(), LedgerError> {
        let bal = self.balances.entry(account.to_string()).or_insert(0);
        *bal = bal.checked_add(amount).ok_or(LedgerError::Overflow)?;
        Ok(())
    }

    fn debit(&mut self, account: &str, amount: u64) -> Result<(), LedgerError> {
        let balance = self.balance(account);
        if balance < amount {
            return Err(LedgerError::InsufficientBalance {
                account: account.to_string(),
                balance,
                needed: amount,
            });
        }
        if amount > 0 {
            *self.balances.get_mut(account).expect("positive balance") -= amount;
        }
        Ok(())
    }

    /// Applies a block's transfers in order, then pays the miner
    /// `block_reward` plus all fees. On error the ledger is unchanged.
    pub fn apply_block(&mut self, block: &Block, block_reward: u64) -> Result<(), LedgerError> {
        let mut next = self.clone();
        for tx in &block.transactions {
            let debit = tx.debit().ok_or(LedgerError::Overflow)?;
            next.debit(&tx.sender, debit)?;
            next.credit(&tx.receiver, tx.amount)?;
        }
        let fees = block
            .transactions
            .iter()
            .try_fold(0u64, |acc, t| acc.checked_add(t.fee))
            .ok_or(LedgerError::Overflow)?;
        let income = block_reward.checked_add(fees).ok_or(LedgerError::Overflow)?;
        next.credit(&block.miner, income)?;
        next.minted_block_rewards += block_reward;
        let tally = next.tallies.entry(block.miner.clone()).or_default();
        tally.block_rewards += block_reward;
        tally.fees += fees;
        *self = next;
        Ok(())
    }

    /// Mints storage rent to a keeper.
    pub fn credit_rent(&mut self, account: &str, amount: u64) -> Result<(), LedgerError> {
        self.credit(account, amount)?;
        self.minted_rent += amount;
        self.tallies.entry(account.to_string()).or_default().rent += amount;
        Ok(())
    }

    /// Burns up to `amount` from `account`, never below zero. Returns the
    /// amount actually burned.
    pub fn penalize(&mut self, account: &str, amount: u64) -> u64 {
        let burned = amount.min(self.balance(account));
        if burned > 0 {
            *self.balances.get_mut(account).expect("positive balance") -= burned;
        }
        self.burned_penalties += burned;
        self.tallies.entry(account.to_string()).or_default().penalties += burned;
        burned
    }

    /// Burns exactly `amount`, failing if the balance is short. Used when
    /// replaying recorded penalties.
    pub(crate) fn burn_exact(&mut self, account: &str, amount: u64) -> Result<(), LedgerError> {
        self.debit(account, amount)?;
        self.burned_penalties += amount;
        self.tallies.entry(account.to_string()).or_default().penalties += amount;
        Ok(())
    }
}
