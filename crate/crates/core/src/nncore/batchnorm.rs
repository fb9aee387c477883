//! Batch normalization over the feature (last) axis of `[B,1,T,C]` tensors.

use crate::error::{Error, Result};
use crate::nncore::{ParamTensor, TensorBuf};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Running statistics and constants of one normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnState<S> {
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: S,
    pub epsilon: S,
}

impl<S: Scalar> BnState<S> {
    pub const DEFAULT_MOMENTUM: f64 = 0.99;
    pub const DEFAULT_EPSILON: f64 = 1e-3;

    pub fn new(channels: usize) -> Self {
        BnState {
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            momentum: S::of(Self::DEFAULT_MOMENTUM),
            epsilon: S::of(Self::DEFAULT_EPSILON),
        }
    }
}

/// What the backward pass needs from a forward call.
#[derive(Clone, Debug)]
pub struct BnCache<S> {
    mode: Mode,
    xhat: TensorBuf<S>,
    inv_std: Vec<S>,
}

fn channel_count<S: Scalar>(input: &TensorBuf<S>, gamma: &TensorBuf<S>, beta: &TensorBuf<S>) -> Result<(usize, usize)> {
    let [b, _, _, c] = input.dims::<4>()?;
    gamma.expect_shape(&[c])?;
    beta.expect_shape(&[c])?;
    Ok((b, c))
}

/// Normalizes each channel. Train mode uses batch statistics over `(B,1,T)` and
/// folds them into `state` with exponential momentum; infer mode uses `state`.
pub fn batch_norm<S: Scalar>(
    input: &TensorBuf<S>,
    gamma: &TensorBuf<S>,
    beta: &TensorBuf<S>,
    mode: Mode,
    state: &mut BnState<S>,
) -> Result<(TensorBuf<S>, BnCache<S>)> {
    let (b, c) = channel_count(input, gamma, beta)?;
    if state.running_mean.len() != c {
        return Err(Error::dim(format!(
            "normalization state has {} channels, input has {c}",
            state.running_mean.len()
        )));
    }
    let rows = input.len() / c.max(1);
    let (mean, var) = match mode {
        Mode::Train => {
            if b < 2 {
                return Err(Error::InvalidArg {
                    arg: "batch",
                    reason: format!("train-mode normalization needs at least 2 samples, got {b}"),
                });
            }
            let n = S::of(rows as f64);
            let mut mean = vec![S::zero(); c];
            for row in input.data().chunks_exact(c) {
                mean.iter_mut().zip(row).for_each(|(m, &x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![S::zero(); c];
            for row in input.data().chunks_exact(c) {
                for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            let keep = state.momentum;
            for i in 0..c {
                state.running_mean[i] = keep * state.running_mean[i] + (S::one() - keep) * mean[i];
                state.running_var[i] = keep * state.running_var[i] + (S::one() - keep) * var[i];
            }
            (mean, var)
        }
        Mode::Infer => (state.running_mean.clone(), state.running_var.clone()),
    };
    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + state.epsilon).sqrt()).collect();
    let mut xhat = TensorBuf::zeros(input.shape());
    let mut out = TensorBuf::zeros(input.shape());
    let (g, bt) = (gamma.data(), beta.data());
    for ((src, xh), dst) in input
        .data()
        .chunks_exact(c)
        .zip(xhat.data_mut().chunks_exact_mut(c))
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        for j in 0..c {
            xh[j] = (src[j] - mean[j]) * inv_std[j];
            dst[j] = g[j] * xh[j] + bt[j];
        }
    }
    Ok((out, BnCache { mode, xhat, inv_std }))
}

/// Gradients with respect to input, gamma and beta.
pub fn batch_norm_backward<S: Scalar>(
    cache: &BnCache<S>,
    gamma: &TensorBuf<S>,
    grad_out: &TensorBuf<S>,
) -> Result<(TensorBuf<S>, TensorBuf<S>, TensorBuf<S>)> {
    grad_out.expect_shape(cache.xhat.shape())?;
    let c = cache.inv_std.len();
    gamma.expect_shape(&[c])?;
    let rows = grad_out.len() / c.max(1);
    let mut dgamma = vec![S::zero(); c];
    let mut dbeta = vec![S::zero(); c];
    for (dy, xh) in grad_out.data().chunks_exact(c).zip(cache.xhat.data().chunks_exact(c)) {
        for j in 0..c {
            dbeta[j] += dy[j];
            dgamma[j] += dy[j] * xh[j];
        }
    }
    let mut dx = TensorBuf::zeros(grad_out.shape());
    let g = gamma.data();
    let n = S::of(rows as f64);
    for ((dy, xh), d) in grad_out
        .data()
        .chunks_exact(c)
        .zip(cache.xhat.data().chunks_exact(c))
        .zip(dx.data_mut().chunks_exact_mut(c))
    {
        for j in 0..c {
            let scale = g[j] * cache.inv_std[j];
            d[j] = match cache.mode {
                Mode::Infer => scale * dy[j],
                Mode::Train => scale * (dy[j] - dbeta[j] / n - xh[j] * dgamma[j] / n),
            };
        }
    }
    Ok((
        dx,
        TensorBuf::from_vec(&[c], dgamma)?,
        TensorBuf::from_vec(&[c], dbeta)?,
    ))
}

/// Trainable normalization layer; only gamma and beta are parameters.
#[derive(Clone, Debug)]
pub struct BatchNorm<S> {
    pub gamma: ParamTensor<S>,
    pub beta: ParamTensor<S>,
    pub state: BnState<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(prefix: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: ParamTensor::new(format!("{prefix}.gamma"), TensorBuf::filled(&[channels], S::one())),
            beta: ParamTensor::new(format!("{prefix}.beta"), TensorBuf::zeros(&[channels])),
            state: BnState::new(channels),
        }
    }

    pub fn forward(&mut self, x: &TensorBuf<S>, mode: Mode) -> Result<(TensorBuf<S>, BnCache<S>)> {
        batch_norm(x, self.gamma.value(), self.beta.value(), mode, &mut self.state)
    }

    /// Forward without touching running statistics.
    pub fn forward_frozen(&self, x: &TensorBuf<S>, mode: Mode) -> Result<(TensorBuf<S>, BnCache<S>)> {
        let mut scratch = self.state.clone();
        batch_norm(x, self.gamma.value(), self.beta.value(), mode, &mut scratch)
    }

    pub fn backward(&mut self, cache: &BnCache<S>, dy: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        let (dx, dg, db) = batch_norm_backward(cache, self.gamma.value(), dy)?;
        self.gamma.accumulate(dg.data());
        self.beta.accumulate(db.data());
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = TensorBuf::<f32>::filled(&[4, 1, 5, 2], 3.7);
        let gamma = TensorBuf::from_vec(&[2], vec![2.0, -5.0]).unwrap();
        let beta = TensorBuf::zeros(&[2]);
        let (y, _) = batch_norm(&x, &gamma, &beta, Mode::Train, &mut BnState::new(2)).unwrap();
        assert!(y.data().iter().all(|v| v.abs() <= 1e-3));
    }

    #[test]
    fn standardized_input_is_scaled_by_epsilon() {
        // per channel values {-1, 1} repeated: mean 0, variance 1
        let x = TensorBuf::from_fn(&[2, 1, 4, 3], |i| if (i / 3) % 2 == 0 { 1.0f64 } else { -1.0 });
        let ones = TensorBuf::filled(&[3], 1.0);
        let (y, _) = batch_norm(&x, &ones, &TensorBuf::zeros(&[3]), Mode::Train, &mut BnState::new(3)).unwrap();
        let k = (1.0f64 + 1e-3).powf(-0.5);
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * k).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_train_batch_rejected() {
        let x = TensorBuf::<f32>::zeros(&[1, 1, 5, 2]);
        let ones = TensorBuf::filled(&[2], 1.0);
        let r = batch_norm(&x, &ones, &TensorBuf::zeros(&[2]), Mode::Train, &mut BnState::new(2));
        assert!(r.is_err());
        assert!(batch_norm(&x, &ones, &TensorBuf::zeros(&[2]), Mode::Infer, &mut BnState::new(2)).is_ok());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = TensorBuf::from_fn(&[2, 1, 2, 1], |i| i as f64); // mean 1.5, var 1.25
        let mut st = BnState::new(1);
        let ones = TensorBuf::filled(&[1], 1.0);
        batch_norm(&x, &ones, &TensorBuf::zeros(&[1]), Mode::Train, &mut st).unwrap();
        assert!((st.running_mean[0] - 0.01 * 1.5).abs() < 1e-12);
        assert!((st.running_var[0] - (0.99 + 0.01 * 1.25)).abs() < 1e-12);
    }

    #[test]
    fn train_output_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = TensorBuf::from_fn(&[8, 1, 16, 3], |_| rng.random_range(-4.0..9.0f64));
        let gamma = TensorBuf::from_vec(&[3], vec![0.5, 2.0, -1.5]).unwrap();
        let (y, _) = batch_norm(&x, &gamma, &TensorBuf::zeros(&[3]), Mode::Train, &mut BnState::new(3)).unwrap();
        let rows = y.len() / 3;
        for j in 0..3 {
            let col: Vec<f64> = y.data().iter().skip(j).step_by(3).copied().collect();
            let m = col.iter().sum::<f64>() / rows as f64;
            let v = col.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / rows as f64;
            assert!(m.abs() <= 1e-5);
            let g2 = gamma.data()[j] * gamma.data()[j];
            let target = g2 / (1.0 + 1e-3);
            assert!((v - target).abs() <= 1e-3 * g2, "{v} vs {target}");
        }
    }

    fn check_mode(mode: Mode) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = TensorBuf::from_fn(&[3, 1, 5, 2], |_| rng.random_range(-2.0..2.0f64));
        let gamma = TensorBuf::from_vec(&[2], vec![1.3, -0.4]).unwrap();
        let beta = TensorBuf::from_vec(&[2], vec![0.2, 0.1]).unwrap();
        let probe = TensorBuf::from_fn(&[3, 1, 5, 2], |_| rng.random_range(-1.0..1.0f64));
        let mut st = BnState::new(2);
        st.running_mean = vec![0.3, -0.2];
        st.running_var = vec![1.7, 0.6];
        let loss = |x: &TensorBuf<f64>, g: &TensorBuf<f64>, b: &TensorBuf<f64>| {
            let mut s = st.clone();
            batch_norm(x, g, b, mode, &mut s).unwrap().0.dot(&probe).unwrap()
        };
        let (_, cache) = batch_norm(&x, &gamma, &beta, mode, &mut st.clone()).unwrap();
        let (dx, dg, db) = batch_norm_backward(&cache, &gamma, &probe).unwrap();
        for r in [
            grad_check(|v| loss(v, &gamma, &beta), &x, &dx).unwrap(),
            grad_check(|v| loss(&x, v, &beta), &gamma, &dg).unwrap(),
            grad_check(|v| loss(&x, &gamma, v), &beta, &db).unwrap(),
        ] {
            assert!(r.max_rel_error <= 1e-4, "{mode:?}: {r:?}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_mode(Mode::Train);
        check_mode(Mode::Infer);
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let x = TensorBuf::from_fn(&[3, 1, 7, 2], |i| (i as f32 * 0.13).cos());
        let ones = TensorBuf::filled(&[2], 1.0);
        let a = batch_norm(&x, &ones, &TensorBuf::zeros(&[2]), Mode::Train, &mut BnState::new(2)).unwrap().0;
        let b = batch_norm(&x, &ones, &TensorBuf::zeros(&[2]), Mode::Train, &mut BnState::new(2)).unwrap().0;
        assert_eq!(a, b);
    }
}
