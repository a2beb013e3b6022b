use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup followed by stepwise exponential decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub decay_interval: u64,
    pub decay_factor: f64,
    pub base_lr: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            warmup_steps: 50,
            decay_interval: 1000,
            decay_factor: 0.95,
            base_lr: 1e-3,
        }
    }
}

impl LrSchedule {
    /// Long-run schedule: 10K warmup, ×0.95 every 30K iterations.
    pub fn pretraining(base_lr: f64) -> Self {
        Self {
            warmup_steps: 10_000,
            decay_interval: 30_000,
            decay_factor: 0.95,
            base_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 || self.decay_interval == 0 {
            return Err(Error::Config("warmup_steps and decay_interval must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay_factor {} outside (0, 1]",
                self.decay_factor
            )));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be positive", self.base_lr)));
        }
        Ok(())
    }

    pub fn lr_at_step(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let decays = (step - self.warmup_steps) / self.decay_interval;
        self.base_lr * self.decay_factor.powi(decays.min(i32::MAX as u64) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero() {
        assert_eq!(LrSchedule::default().lr_at_step(0), 0.0);
    }

    #[test]
    fn pretraining_schedule_points() {
        let s = LrSchedule::pretraining(2e-4);
        assert_eq!(s.lr_at_step(10_000), 2e-4);
        assert_eq!(s.lr_at_step(5_000), 1e-4);
        assert_eq!(s.lr_at_step(39_999), 2e-4);
        assert!((s.lr_at_step(40_000) - 0.95 * 2e-4).abs() < 1e-18);
        assert!((s.lr_at_step(70_000) - 0.95 * 0.95 * 2e-4).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut s = LrSchedule::default();
        s.decay_factor = 0.0;
        assert!(s.validate().is_err());
        s.decay_factor = 1.0;
        s.warmup_steps = 0;
        assert!(s.validate().is_err());
    }
}
