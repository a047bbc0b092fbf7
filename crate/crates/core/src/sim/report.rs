use std::collections::BTreeMap;
use std::fmt;

use super::MetricsLog;
use crate::chain::{Ledger, RewardTally};

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub ticks: u64,
    pub blocks: u64,
    /// Mean ticks between consecutive appended blocks, genesis at tick 0.
    pub mean_block_interval: Option<f64>,
    pub mean_winner_score: Option<f64>,
    pub threshold_first: f64,
    pub threshold_min: f64,
    pub threshold_max: f64,
    pub threshold_last: f64,
    pub audits_run: u64,
    pub audits_failed: u64,
    pub max_under_replicated: usize,
    pub final_supply: u64,
    pub problems: Vec<String>,
    /// Income per account, when a ledger is available.
    pub rewards: BTreeMap<String, RewardTally>,
}

/// Summarizes a metrics log and, optionally, the final ledger.
pub fn report(metrics: &MetricsLog, ledger: Option<&Ledger>) -> Option<Summary> {
    let rows = &metrics.rows;
    let first = rows.first()?;
    let last = rows.last()?;
    let mut appended_at = Vec::new();
    let mut scores = Vec::new();
    let mut prev_height = 0;
    for r in rows {
        if r.chain_height > prev_height {
            appended_at.push(r.tick);
        }
        prev_height = r.chain_height;
        scores.extend(r.winner_score);
    }
    let mean_block_interval = (!appended_at.is_empty()).then(|| *appended_at.last().unwrap() as f64 / appended_at.len() as f64);
    let mean_winner_score = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    let thresholds = rows.iter().map(|r| r.current_threshold);
    let mut problems: Vec<String> = Vec::new();
    for r in rows {
        if problems.last() != Some(&r.active_problem) {
            problems.push(r.active_problem.clone());
        }
    }
    Some(Summary {
        ticks: last.tick,
        blocks: last.chain_height,
        mean_block_interval,
        mean_winner_score,
        threshold_first: first.current_threshold,
        threshold_min: thresholds.clone().fold(f64::INFINITY, f64::min),
        threshold_max: thresholds.fold(f64::NEG_INFINITY, f64::max),
        threshold_last: last.current_threshold,
        audits_run: rows.iter().map(|r| r.audits_run as u64).sum(),
        audits_failed: rows.iter().map(|r| r.audits_failed as u64).sum(),
        max_under_replicated: rows.iter().map(|r| r.under_replicated_objects).max().unwrap_or(0),
        final_supply: last.total_supply,
        problems,
        rewards: ledger.map(|l| l.tallies().clone()).unwrap_or_default(),
    })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ticks                 {}", self.ticks)?;
        writeln!(f, "blocks                {}", self.blocks)?;
        match self.mean_block_interval {
            Some(m) => writeln!(f, "mean block interval   {m:.2} ticks")?,
            None => writeln!(f, "mean block interval   -")?,
        }
        match self.mean_winner_score {
            Some(m) => writeln!(f, "mean winner score     {m:.4}")?,
            None => writeln!(f, "mean winner score     -")?,
        }
        writeln!(
            f,
            "threshold             first {:.4}  min {:.4}  max {:.4}  last {:.4}",
            self.threshold_first, self.threshold_min, self.threshold_max, self.threshold_last
        )?;
        writeln!(f, "audits                {} run, {} failed", self.audits_run, self.audits_failed)?;
        writeln!(f, "max under-replicated  {}", self.max_under_replicated)?;
        writeln!(f, "final supply          {}", self.final_supply)?;
        writeln!(f, "problems              {}", self.problems.join(" -> "))?;
        if !self.rewards.is_empty() {
            writeln!(f)?;
            writeln!(f, "{:<16} {:>8} {:>8} {:>8} {:>9}", "account", "rewards", "fees", "rent", "penalties")?;
            for (acct, t) in &self.rewards {
                writeln!(
                    f,
                    "{acct:<16} {:>8} {:>8} {:>8} {:>9}",
                    t.block_rewards, t.fees, t.rent, t.penalties
                )?;
            }
        }
        Ok(())
    }
}
