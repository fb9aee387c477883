//! Reconstruction, classification and combined objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Min2NetConfig;
use crate::nncore::TensorBuf;
use crate::scalar::Scalar;

/// A scalar loss with its gradient with respect to the prediction it was given.
#[derive(Clone, Debug)]
pub struct Loss<S> {
    pub value: f64,
    pub grad: TensorBuf<S>,
}

/// Reconstruction error for `[B,1,T,C]` tensors.
///
/// Per trial: mean over channels of the time-summed squared error. The batch value is
/// the mean over trials. With `elementwise` the per-trial value is divided by `T` as well.
pub fn mse_loss<S: Scalar>(x: &TensorBuf<S>, x_hat: &TensorBuf<S>, elementwise: bool) -> Result<Loss<S>> {
    x_hat.expect_shape(x.shape())?;
    let [b, _, t, c] = x.dims::<4>()?;
    if b == 0 {
        return Err(Error::dim("empty batch"));
    }
    let mut norm = (b * c) as f64;
    if elementwise {
        norm *= t as f64;
    }
    let mut value = 0.0;
    let scale = S::of(2.0 / norm);
    let mut grad = TensorBuf::zeros(x.shape());
    for ((&a, &r), g) in x.data().iter().zip(x_hat.data()).zip(grad.data_mut()) {
        let d = r - a;
        value += d.as_f64() * d.as_f64();
        *g = scale * d;
    }
    Ok(Loss {
        value: value / norm,
        grad,
    })
}

/// Probability floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the true class.
pub fn cross_entropy_loss<S: Scalar>(labels: &[usize], probs: &TensorBuf<S>) -> Result<Loss<S>> {
    let [b, n] = probs.dims::<2>()?;
    if labels.len() != b {
        return Err(Error::dim(format!("{} labels for {b} predictions", labels.len())));
    }
    if b == 0 {
        return Err(Error::dim("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::InvalidArg {
            arg: "labels",
            reason: format!("label {bad} outside 0..{n}"),
        });
    }
    let mut grad = TensorBuf::zeros(probs.shape());
    let mut value = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = probs.data()[i * n + y].as_f64();
        value -= p.max(LOG_FLOOR).ln();
        if p > LOG_FLOOR {
            grad.data_mut()[i * n + y] = S::of(-1.0 / (p * b as f64));
        }
    }
    Ok(Loss {
        value: value / b as f64,
        grad,
    })
}

/// The three batch-mean loss terms of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub mse: f64,
    pub triplet: f64,
    pub cross_entropy: f64,
}

impl LossComponents {
    pub fn total(&self, config: &Min2NetConfig) -> f64 {
        total_loss(self, config)
    }
}

/// `β₁·mse + β₂·triplet + β₃·cross_entropy`.
pub fn total_loss(c: &LossComponents, config: &Min2NetConfig) -> f64 {
    config.beta_mse * c.mse + config.beta_triplet * c.triplet + config.beta_ce * c.cross_entropy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;
    use proptest::prelude::*;

    #[test]
    fn mse_identity_is_zero() {
        let x = TensorBuf::from_fn(&[2, 1, 3, 2], |i| i as f64);
        assert_eq!(mse_loss(&x, &x, false).unwrap().value, 0.0);
    }

    #[test]
    fn mse_hand_value() {
        // C=2, T=3, zeros vs ones: (1/2)(3 + 3) = 3
        let x = TensorBuf::<f64>::zeros(&[1, 1, 3, 2]);
        let y = TensorBuf::filled(&[1, 1, 3, 2], 1.0);
        assert_eq!(mse_loss(&x, &y, false).unwrap().value, 3.0);
        assert_eq!(mse_loss(&x, &y, true).unwrap().value, 1.0);
    }

    #[test]
    fn mse_shape_mismatch() {
        let x = TensorBuf::<f64>::zeros(&[1, 1, 3, 2]);
        let y = TensorBuf::<f64>::zeros(&[1, 1, 2, 3]);
        assert!(mse_loss(&x, &y, false).is_err());
    }

    #[test]
    fn mse_gradient() {
        let x = TensorBuf::from_fn(&[2, 1, 5, 3], |i| (i as f64 * 0.3).sin());
        let r = TensorBuf::from_fn(&[2, 1, 5, 3], |i| (i as f64 * 0.7).cos());
        let g = mse_loss(&x, &r, false).unwrap().grad;
        let rep = grad_check(|v| mse_loss(&x, v, false).unwrap().value, &r, &g).unwrap();
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
    }

    #[test]
    fn cross_entropy_values() {
        let p = TensorBuf::from_vec(&[1, 2], vec![1.0f64, 0.0]).unwrap();
        assert_eq!(cross_entropy_loss(&[0], &p).unwrap().value, 0.0);
        let p = TensorBuf::from_vec(&[1, 2], vec![0.5f64, 0.5]).unwrap();
        assert!((cross_entropy_loss(&[1], &p).unwrap().value - std::f64::consts::LN_2).abs() < 1e-12);
        let p = TensorBuf::from_vec(&[1, 2], vec![0.9f64, 0.1]).unwrap();
        assert!((cross_entropy_loss(&[0], &p).unwrap().value - 0.105_360_515_657_826_3).abs() < 1e-12);
        let p = TensorBuf::from_vec(&[1, 2], vec![0.0f64, 1.0]).unwrap();
        assert!((cross_entropy_loss(&[0], &p).unwrap().value - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let p = TensorBuf::from_vec(&[1, 2], vec![0.5f64, 0.5]).unwrap();
        assert!(matches!(cross_entropy_loss(&[2], &p), Err(Error::InvalidArg { .. })));
    }

    #[test]
    fn cross_entropy_gradient() {
        let p = TensorBuf::from_vec(&[3, 3], vec![0.2, 0.5, 0.3, 0.6, 0.3, 0.1, 0.1, 0.1, 0.8f64]).unwrap();
        let labels = [1, 0, 2];
        let g = cross_entropy_loss(&labels, &p).unwrap().grad;
        let r = grad_check(|v| cross_entropy_loss(&labels, v).unwrap().value, &p, &g).unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn total_loss_weights() {
        let mut cfg = Min2NetConfig::new(20, 400, 2);
        let c = LossComponents {
            mse: 1.0,
            triplet: 2.0,
            cross_entropy: 3.0,
        };
        assert_eq!(total_loss(&c, &cfg), 4.5);
        (cfg.beta_mse, cfg.beta_triplet, cfg.beta_ce) = (0.0, 0.0, 1.0);
        assert_eq!(total_loss(&c, &cfg), 3.0);
    }

    proptest! {
        #[test]
        fn mse_quadratic_homogeneity(v in proptest::collection::vec(-5.0f64..5.0, 12)) {
            let x = TensorBuf::<f64>::zeros(&[2, 1, 3, 2]);
            let r = TensorBuf::from_vec(&[2, 1, 3, 2], v.clone()).unwrap();
            let r2 = r.map(|a| 2.0 * a);
            let a = mse_loss(&x, &r, false).unwrap().value;
            let b = mse_loss(&x, &r2, false).unwrap().value;
            prop_assert!((b - 4.0 * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn total_is_linear_in_each_weight(b1 in 0.0f64..2.0, b2 in 0.0f64..2.0, b3 in 0.1f64..2.0, k in 0.0f64..3.0) {
            let c = LossComponents { mse: 0.7, triplet: 1.9, cross_entropy: 0.4 };
            let mut cfg = Min2NetConfig::new(4, 400, 2);
            (cfg.beta_mse, cfg.beta_triplet, cfg.beta_ce) = (b1, b2, b3);
            let base = total_loss(&c, &cfg);
            cfg.beta_triplet = b2 + k;
            prop_assert!((total_loss(&c, &cfg) - base - k * c.triplet).abs() < 1e-12);
        }
    }
}
