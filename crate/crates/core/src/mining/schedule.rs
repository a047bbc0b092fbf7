use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    DecayOnly,
    /// The base is raised by `bump` (capped at 1) for every mined block.
    BumpThenDecay,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("threshold parameters must satisfy 0 <= floor <= t0 <= 1")]
    Range,
    #[error("decay_per_tick must be positive and bump non-negative")]
    Rates,
}

/// Minimum validation score a candidate needs, as a function of the ticks
/// since the last block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub policy: ThresholdPolicy,
    pub t0: f64,
    pub decay_per_tick: f64,
    pub bump: f64,
    pub floor: f64,
    /// Current base level; starts at `t0`.
    base: f64,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        ThresholdSchedule::decay_only(0.9, 0.005, 0.5).unwrap()
    }
}

impl ThresholdSchedule {
    pub fn new(policy: ThresholdPolicy, t0: f64, decay_per_tick: f64, bump: f64, floor: f64) -> Result<Self, ScheduleError> {
        if !(0.0..=1.0).contains(&floor) || !(floor..=1.0).contains(&t0) {
            return Err(ScheduleError::Range);
        }
        if !(decay_per_tick > 0.0) || !(bump >= 0.0) || !decay_per_tick.is_finite() || !bump.is_finite() {
            return Err(ScheduleError::Rates);
        }
        Ok(ThresholdSchedule {
            policy,
            t0,
            decay_per_tick,
            bump,
            floor,
            base: t0,
        })
    }

    pub fn decay_only(t0: f64, decay_per_tick: f64, floor: f64) -> Result<Self, ScheduleError> {
        Self::new(ThresholdPolicy::DecayOnly, t0, decay_per_tick, 0.0, floor)
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Sets the base directly, e.g. when restoring a schedule mid-run.
    pub fn with_base(mut self, base: f64) -> Self {
        self.base = base.clamp(self.floor, 1.0);
        self
    }

    /// Threshold at `now` for a round that opened at `last_block_at`.
    ///
    /// # Panics
    /// If `now < last_block_at`.
    pub fn current(&self, now: u64, last_block_at: u64) -> f64 {
        assert!(now >= last_block_at, "clock before last block");
        let elapsed = (now - last_block_at) as f64;
        (self.base - self.decay_per_tick * elapsed).max(self.floor).min(1.0)
    }

    /// Records a mined block.
    pub fn on_block_mined(&mut self) {
        if self.policy == ThresholdPolicy::BumpThenDecay {
            self.base = (self.base + self.bump).min(1.0);
        }
    }
}

/// Free-function form of [`ThresholdSchedule::current`].
pub fn current_threshold(s: &ThresholdSchedule, now: u64, last_block_at: u64) -> f64 {
    s.current(now, last_block_at)
}
