use crate::error::Result;
use crate::nncore::TensorBuf;
use crate::scalar::Scalar;

/// Exponential linear unit with unit alpha.
pub fn elu<S: Scalar>(input: &TensorBuf<S>) -> TensorBuf<S> {
    input.map(|x| if x > S::zero() { x } else { x.exp_m1() })
}

/// Backward pass from the forward *output*: the derivative is 1 above zero and `y + 1` below.
pub fn elu_backward<S: Scalar>(output: &TensorBuf<S>, grad_out: &TensorBuf<S>) -> Result<TensorBuf<S>> {
    grad_out.expect_shape(output.shape())?;
    let mut dx = grad_out.clone();
    for (d, &y) in dx.data_mut().iter_mut().zip(output.data()) {
        if y <= S::zero() {
            *d *= y + S::one();
        }
    }
    Ok(dx)
}

/// Row-wise softmax over the last axis of `[B, N]`.
pub fn softmax<S: Scalar>(input: &TensorBuf<S>) -> Result<TensorBuf<S>> {
    let [_, n] = input.dims::<2>()?;
    let mut out = input.clone();
    for row in out.data_mut().chunks_exact_mut(n.max(1)) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut total = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

pub fn softmax_backward<S: Scalar>(output: &TensorBuf<S>, grad_out: &TensorBuf<S>) -> Result<TensorBuf<S>> {
    let [_, n] = output.dims::<2>()?;
    grad_out.expect_shape(output.shape())?;
    let mut dx = TensorBuf::zeros(output.shape());
    for ((y, dy), d) in output
        .data()
        .chunks_exact(n.max(1))
        .zip(grad_out.data().chunks_exact(n.max(1)))
        .zip(dx.data_mut().chunks_exact_mut(n.max(1)))
    {
        let inner: S = y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
        for j in 0..n {
            d[j] = y[j] * (dy[j] - inner);
        }
    }
    Ok(dx)
}
