use crate::nncore::TensorBuf;
use crate::scalar::Scalar;

/// A trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<S> {
    pub name: String,
    value: TensorBuf<S>,
    grad: TensorBuf<S>,
}

impl<S: Scalar> ParamTensor<S> {
    pub fn new(name: impl Into<String>, value: TensorBuf<S>) -> Self {
        let grad = TensorBuf::zeros(value.shape());
        ParamTensor {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn value(&self) -> &TensorBuf<S> {
        &self.value
    }

    /// Mutable access to the values; the shape is fixed for the parameter's lifetime.
    pub fn value_mut(&mut self) -> &mut [S] {
        self.value.data_mut()
    }

    pub fn grad(&self) -> &TensorBuf<S> {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [S] {
        self.grad.data_mut()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    /// Adds `g` into the stored gradient. Panics on length mismatch, which is a kernel bug.
    pub fn accumulate(&mut self, g: &[S]) {
        assert_eq!(g.len(), self.grad.len(), "gradient length for {}", self.name);
        self.grad
            .data_mut()
            .iter_mut()
            .zip(g)
            .for_each(|(a, &b)| *a += b);
    }

    /// Updates value and gradient buffers together so they can never disagree in shape.
    pub(crate) fn split_mut(&mut self) -> (&mut [S], &[S]) {
        (self.value.data_mut(), self.grad.data())
    }
}
