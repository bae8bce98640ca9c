//! Target-relative step and cumulative rewards.
//!
//! With `T` the batch at which the target recall is reached, an episode
//! that stops after batch `i` earns `(i / T)^m` if `i <= T` and
//! `((B - i) / (B - T))^n` otherwise. The per-batch reward is the increment
//! of that curve, so any episode's return lands in `[0, 1]` and peaks at
//! exactly 1 when the agent stops at `T`, whatever `T` is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape exponents of the reward curve: `m` before the target batch, `n` after.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub m: f64,
    pub n: f64,
}

impl Objective {
    pub const BALANCED: Objective = Objective { m: 1.0, n: 1.0 };
    /// Favors reaching the target over examining few documents.
    pub const RECALL: Objective = Objective { m: 4.0, n: 0.25 };
    /// Favors examining few documents over reaching the target.
    pub const COST: Objective = Objective { m: 0.25, n: 4.0 };

    pub fn new(m: f64, n: f64) -> Result<Self> {
        let o = Objective { m, n };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > 0.0 && self.n > 0.0 && self.m.is_finite() && self.n.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "reward exponents must be positive, got m={} n={}",
                self.m, self.n
            )))
        }
    }
}

impl Default for Objective {
    fn default() -> Self {
        Self::BALANCED
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    objective: Objective,
    batches: usize,
    target_batch: usize,
}

impl RewardParams {
    pub fn new(objective: Objective, batches: usize, target_batch: usize) -> Result<Self> {
        objective.validate()?;
        if target_batch == 0 || target_batch > batches {
            return Err(Error::invalid(format!(
                "target batch {target_batch} outside 1..={batches}"
            )));
        }
        Ok(Self {
            objective,
            batches,
            target_batch,
        })
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn target_batch(&self) -> usize {
        self.target_batch
    }

    /// Reward for the state in which `i` batches have been examined.
    pub fn step_reward(&self, i: usize) -> f64 {
        debug_assert!((1..=self.batches).contains(&i));
        let Objective { m, n } = self.objective;
        let (b, t, x) = (self.batches as f64, self.target_batch as f64, i as f64);
        if i <= self.target_batch {
            (x.powf(m) - (x - 1.0).powf(m)) / t.powf(m)
        } else {
            ((b - x).powf(n) - (b - x + 1.0).powf(n)) / (b - t).powf(n)
        }
    }

    /// Return of an episode that stops after batch `i`.
    pub fn cumulative_reward(&self, i: usize) -> f64 {
        debug_assert!((1..=self.batches).contains(&i));
        let Objective { m, n } = self.objective;
        let (b, t, x) = (self.batches as f64, self.target_batch as f64, i as f64);
        if i <= self.target_batch {
            (x / t).powf(m)
        } else {
            ((b - x) / (b - t)).powf(n)
        }
    }
}
