use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Min2NetConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_start: f64,
    pub lr_floor: f64,
    pub plateau_patience: usize,
    pub lr_decay_factor: f64,
    pub earlystop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub margin: Option<f64>,
    /// Loss weights (reconstruction, triplet, cross-entropy).
    pub beta: Option<[f64; 3]>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_start: 1e-3,
            lr_floor: 1e-4,
            plateau_patience: 5,
            lr_decay_factor: 0.5,
            earlystop_patience: 20,
            batch_size: 10,
            max_epochs: 200,
            seed: 0,
            margin: None,
            beta: None,
        }
    }
}

impl TrainConfig {
    /// Schedule for three-class problems: starts ten times lower.
    pub fn three_class() -> Self {
        TrainConfig {
            lr_start: 1e-4,
            lr_floor: 1e-5,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |arg, reason: String| Err(Error::InvalidArg { arg, reason });
        if !(self.lr_start > 0.0 && self.lr_start.is_finite()) {
            return bad("lr_start", format!("{} must be positive", self.lr_start));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr_start) {
            return bad("lr_floor", format!("{} must be in (0, lr_start]", self.lr_floor));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad("lr_decay_factor", format!("{} is outside (0, 1)", self.lr_decay_factor));
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience", "must be at least 1".into());
        }
        if self.earlystop_patience == 0 {
            return bad("earlystop_patience", "must be at least 1".into());
        }
        if self.batch_size < 3 {
            return bad("batch_size", format!("{} cannot hold a triplet", self.batch_size));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be at least 1".into());
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0 && m.is_finite()) {
                return bad("margin", format!("{m} must be non-negative"));
            }
        }
        if let Some(b) = self.beta {
            if b.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad("beta", format!("{b:?} must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn apply_overrides(&self, model: &mut Min2NetConfig) {
        if let Some(m) = self.margin {
            model.margin = m;
        }
        if let Some([a, b, c]) = self.beta {
            model.beta_mse = a;
            model.beta_triplet = b;
            model.beta_ce = c;
        }
    }
}
