use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive L1 weight: zero during warmup, then started at a fraction of the
/// structural loss and grown geometrically until enough gates have closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub warmup_epochs: usize,
    pub growth: f64,
    /// `None` disables the penalty entirely.
    pub target_features: Option<usize>,
    /// Starting penalty as a fraction of the structural loss.
    pub initial_ratio: f64,
    lambda: f64,
    active: bool,
    frozen: bool,
}

impl LambdaSchedule {
    pub fn new(
        warmup_epochs: usize,
        growth: f64,
        target_features: Option<usize>,
        initial_ratio: f64,
        feature_count: usize,
    ) -> Result<Self> {
        if let Some(t) = target_features {
            if t > feature_count {
                return Err(Error::config(format!(
                    "loss.target_features ({t}) exceeds the feature count ({feature_count})"
                )));
            }
        }
        if !(growth >= 1.0 && growth.is_finite()) {
            return Err(Error::config(format!("loss.growth must be >= 1, got {growth}")));
        }
        if !(initial_ratio > 0.0 && initial_ratio.is_finite()) {
            return Err(Error::config(format!(
                "loss.initial_ratio must be > 0, got {initial_ratio}"
            )));
        }
        Ok(Self {
            warmup_epochs,
            growth,
            target_features,
            initial_ratio,
            lambda: 0.0,
            active: false,
            frozen: false,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Returns the weight for `epoch`, given the active feature count and the
    /// mean losses observed over the preceding epoch.
    pub fn step(&mut self, epoch: usize, active_count: usize, l_tp: f64, l_r: f64) -> f64 {
        let Some(target) = self.target_features else {
            return 0.0;
        };
        if epoch < self.warmup_epochs || self.frozen {
            return self.lambda;
        }
        if active_count <= target {
            self.frozen = true;
        } else if !self.active {
            self.active = true;
            self.lambda = self.initial_ratio * l_tp / l_r.max(f64::MIN_POSITIVE);
        } else {
            self.lambda *= self.growth;
        }
        self.lambda
    }
}
