use crate::error::{Error, Result};
use crate::nncore::ParamTensor;
use crate::scalar::Scalar;

/// Adam optimizer state. The learning rate is public so a scheduler can change it
/// between steps.
#[derive(Clone, Debug)]
pub struct AdamState<S> {
    pub learning_rate: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
    step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate: S::of(learning_rate),
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            epsilon: S::of(1e-8),
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &S> {
        self.second.iter().flatten()
    }
}

/// One bias-corrected Adam update over `params`, in order.
///
/// Every gradient is validated before anything is written, so a rejected step leaves
/// parameters and state untouched.
pub fn adam_step<'a, S, I>(params: I, state: &mut AdamState<S>) -> Result<()>
where
    S: Scalar,
    I: IntoIterator<Item = &'a mut ParamTensor<S>>,
{
    let mut params: Vec<&mut ParamTensor<S>> = params.into_iter().collect();
    for p in &params {
        if let Some(i) = p.grad().data().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{}` at index {i}", p.name)));
        }
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len()
        || state.first.iter().zip(&params).any(|(m, p)| m.len() != p.numel())
    {
        return Err(Error::dim("parameter list changed between optimizer steps"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = S::one() / (S::one() - state.beta1.powi(t));
    let c2 = S::one() / (S::one() - state.beta2.powi(t));
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.learning_rate, state.epsilon);
    for ((p, m), v) in params.iter_mut().zip(&mut state.first).zip(&mut state.second) {
        let (value, grad) = p.split_mut();
        for i in 0..value.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (S::one() - b1) * g;
            v[i] = b2 * v[i] + (S::one() - b2) * g * g;
            value[i] -= lr * (m[i] * c1) / ((v[i] * c2).sqrt() + eps);
        }
    }
    Ok(())
}
