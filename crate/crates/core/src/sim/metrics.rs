use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub const METRICS_HEADER: [&str; 11] = [
    "tick",
    "chain_height",
    "current_threshold",
    "candidates_submitted",
    "winner_score",
    "mempool_depth",
    "under_replicated_objects",
    "audits_run",
    "audits_failed",
    "active_problem",
    "total_supply",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tick: u64,
    pub chain_height: u64,
    pub current_threshold: f64,
    pub candidates_submitted: u32,
    /// Set on ticks where a block was appended.
    pub winner_score: Option<f64>,
    pub mempool_depth: usize,
    pub under_replicated_objects: usize,
    pub audits_run: u32,
    pub audits_failed: u32,
    pub active_problem: String,
    pub total_supply: u64,
}

/// One row per simulated tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
}

impl MetricsLog {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV text with the fixed header. Floats use the shortest
    /// round-tripping form, so equal logs give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut out = METRICS_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let score = r.winner_score.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.tick,
                r.chain_height,
                r.current_threshold,
                r.candidates_submitted,
                score,
                r.mempool_depth,
                r.under_replicated_objects,
                r.audits_run,
                r.audits_failed,
                r.active_problem,
                r.total_supply
            )
            .unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<MetricsLog, MetricsError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != METRICS_HEADER {
            return Err(MetricsError::Header(header));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let row: MetricsRow = rec?;
            rows.push(row);
        }
        Ok(MetricsLog { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let log = MetricsLog {
            rows: vec![
                MetricsRow {
                    tick: 1,
                    chain_height: 0,
                    current_threshold: 0.895,
                    candidates_submitted: 0,
                    winner_score: None,
                    mempool_depth: 3,
                    under_replicated_objects: 0,
                    audits_run: 2,
                    audits_failed: 0,
                    active_problem: "two_spirals".into(),
                    total_supply: 10_000,
                },
                MetricsRow {
                    tick: 2,
                    chain_height: 1,
                    current_threshold: 0.1 + 0.2,
                    candidates_submitted: 2,
                    winner_score: Some(0.87),
                    mempool_depth: 0,
                    under_replicated_objects: 1,
                    audits_run: 3,
                    audits_failed: 1,
                    active_problem: "two_spirals".into(),
                    total_supply: 10_062,
                },
            ],
        };
        let text = log.to_csv();
        assert!(text.starts_with("tick,chain_height,current_threshold,candidates_submitted,winner_score,"));
        assert!(text.contains("\n1,0,0.895,0,,3,0,2,0,two_spirals,10000\n"));
        assert_eq!(MetricsLog::from_csv(&text).unwrap(), log);
        assert!(MetricsLog::from_csv("a,b\n1,2\n").is_err());
    }
}
