use std::f64::consts::PI;

use crate::error::{Error, Result};

/// When and how much mask mass is reallocated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadjustmentSchedule {
    /// Rounds between readjustments (ΔR).
    pub rounds_between: usize,
    /// Last round in which readjustment may happen (R_end).
    pub end_round: usize,
    /// Base readjustment ratio α.
    pub alpha: f64,
    /// 1-based local epoch after which clients readjust (E_p).
    pub readjust_epoch: usize,
}

impl ReadjustmentSchedule {
    pub fn validate(&self, local_epochs: usize) -> Result<()> {
        if self.rounds_between == 0 {
            return Err(Error::config("rounds between readjustments must be positive"));
        }
        if self.end_round == 0 {
            return Err(Error::config("readjustment end round must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!(
                "readjustment ratio {} outside [0, 1]",
                self.alpha
            )));
        }
        if local_epochs > 0 && !(1..=local_epochs).contains(&self.readjust_epoch) {
            return Err(Error::config(format!(
                "readjustment epoch {} outside [1, {local_epochs}]",
                self.readjust_epoch
            )));
        }
        Ok(())
    }

    /// `r mod ΔR = 0` and `r < R_end`.
    pub fn is_readjust_round(&self, round: usize) -> bool {
        round % self.rounds_between == 0 && round < self.end_round
    }

    pub fn alpha_at(&self, round: usize) -> f64 {
        cosine_alpha(round, self)
    }
}

/// `α_r = (α/2)(1 + cos((r − 1)π / R_end))`, and 0 once `r − 1 > R_end`.
pub fn cosine_alpha(round: usize, schedule: &ReadjustmentSchedule) -> f64 {
    let r = round.max(1);
    if r - 1 > schedule.end_round {
        return 0.0;
    }
    let phase = (r - 1) as f64 * PI / schedule.end_round as f64;
    schedule.alpha / 2.0 * (1.0 + phase.cos())
}
