use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the flattened encoder output: 25 time steps × 10 feature maps.
pub const FLAT_WIDTH: usize = 250;
pub const HIDDEN_FILTERS: usize = 10;
pub const POOLED_STEPS: usize = 100;
pub const SECOND_POOL: usize = 4;
pub const ENCODER_KERNELS: (usize, usize) = (64, 32);
pub const DECODER_STRIDE: usize = 4;

/// Architecture and loss hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Min2NetConfig {
    /// EEG channel count `C`.
    pub channels: usize,
    /// Samples per trial `T`; must be a multiple of 100.
    pub samples: usize,
    /// Latent width `z`.
    pub latent: usize,
    /// Class count `N`.
    pub classes: usize,
    /// Triplet margin.
    pub margin: f64,
    pub beta_mse: f64,
    pub beta_triplet: f64,
    pub beta_ce: f64,
    /// Use the element-mean reconstruction error instead of the per-channel summed form.
    #[serde(default)]
    pub mse_elementwise: bool,
}

impl Min2NetConfig {
    /// Defaults: `z = C` for two classes and 256 otherwise, margin 1.0, loss weights (0.5, 0.5, 1.0).
    pub fn new(channels: usize, samples: usize, classes: usize) -> Self {
        Min2NetConfig {
            channels,
            samples,
            latent: if classes == 2 { channels } else { 256 },
            classes,
            margin: 1.0,
            beta_mse: 0.5,
            beta_triplet: 0.5,
            beta_ce: 1.0,
            mse_elementwise: false,
        }
    }

    /// Pool size of the first encoder block and stride of the last decoder layer.
    pub fn time_factor(&self) -> usize {
        self.samples / POOLED_STEPS
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 || self.latent == 0 {
            return bad("channels and latent width must be positive".into());
        }
        if self.samples == 0 || self.samples % POOLED_STEPS != 0 {
            return bad(format!("samples per trial ({}) must be a positive multiple of 100", self.samples));
        }
        if self.time_factor() > ENCODER_KERNELS.1 {
            return bad(format!(
                "samples per trial ({}) exceed what the last decoder kernel (32) can upsample",
                self.samples
            ));
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        let betas = [self.beta_mse, self.beta_triplet, self.beta_ce];
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) || betas.iter().all(|&b| b == 0.0) {
            return bad(format!("loss weights must be non-negative and not all zero, got {betas:?}"));
        }
        Ok(())
    }

    /// Closed-form trainable parameter count implied by the layer table.
    pub fn trainable_parameters(&self) -> usize {
        let (c, z, n) = (self.channels, self.latent, self.classes);
        let (k1, k2) = ENCODER_KERNELS;
        let h = HIDDEN_FILTERS;
        let conv1 = k1 * c * c + c;
        let bn1 = 2 * c;
        let conv2 = k2 * c * h + h;
        let bn2 = 2 * h;
        let latent = FLAT_WIDTH * z + z;
        let decoder = z * FLAT_WIDTH + FLAT_WIDTH;
        let deconv1 = k1 * h * h + h;
        let deconv2 = k2 * h * c + c;
        let classifier = z * n + n;
        conv1 + bn1 + conv2 + bn2 + latent + decoder + deconv1 + deconv2 + classifier
    }
}
