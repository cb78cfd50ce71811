use serde::{Deserialize, Serialize};

use crate::error::ensure;
use crate::Result;

pub const PAPER_LR: f64 = 1.5e-4;
pub const PAPER_DECAY_EVERY: usize = 3000;
pub const PAPER_DECAY_FACTOR: f64 = 0.5;

/// Piecewise-constant decay: `lr0 * factor^floor(iter / every)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub lr0: f64,
    pub every: usize,
    pub factor: f64,
}

impl Default for StepDecay {
    fn default() -> Self {
        Self {
            lr0: PAPER_LR,
            every: PAPER_DECAY_EVERY,
            factor: PAPER_DECAY_FACTOR,
        }
    }
}

impl StepDecay {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr0 > 0.0 && self.lr0.is_finite(), Config, "learning rate must be positive");
        ensure!(self.every > 0, Config, "decay_every must be positive");
        ensure!(self.factor > 0.0 && self.factor <= 1.0, Config, "decay_factor must be in (0, 1]");
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        self.lr0 * self.factor.powi((iteration / self.every) as i32)
    }
}
