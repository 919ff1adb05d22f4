use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Linear decay from `start` to `end` over `total_steps` optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn new(start: f64, end: f64, total_steps: u64) -> Result<Self, NeuralError> {
        if total_steps == 0 {
            return Err(NeuralError::InvalidArgument("schedule needs at least one step".into()));
        }
        if !(start.is_finite() && end.is_finite()) || start < end {
            return Err(NeuralError::InvalidArgument(format!(
                "schedule {start} -> {end} is not non-increasing"
            )));
        }
        Ok(Self {
            start,
            end,
            total_steps,
        })
    }

    /// The tagger's 1e-3 to 1e-5 decay.
    pub fn linear_decay(total_steps: u64) -> Result<Self, NeuralError> {
        Self::new(1e-3, 1e-5, total_steps)
    }

    pub fn lr_at(&self, t: u64) -> Result<f64, NeuralError> {
        if t > self.total_steps {
            return Err(NeuralError::InvalidArgument(format!(
                "step {t} beyond schedule of {} steps",
                self.total_steps
            )));
        }
        if t == self.total_steps {
            return Ok(self.end);
        }
        Ok(self.start + (self.end - self.start) * t as f64 / self.total_steps as f64)
    }
}
