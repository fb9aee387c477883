use crate::error::{Error, Result};
use crate::nncore::{ParamTensor, TensorBuf};
use crate::scalar::Scalar;

/// Affine map per row: `[B, Din] · [Din, Dout] + [Dout]`.
pub fn fully_connected<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    bias: &TensorBuf<S>,
) -> Result<TensorBuf<S>> {
    let [b, din] = input.dims::<2>()?;
    let [wi, dout] = weights.dims::<2>()?;
    if wi != din {
        return Err(Error::dim(format!("weights expect {wi} inputs, got {din}")));
    }
    bias.expect_shape(&[dout])?;
    let mut out = TensorBuf::zeros(&[b, dout]);
    for row in out.data_mut().chunks_exact_mut(dout.max(1)) {
        row.copy_from_slice(bias.data());
    }
    S::gemm(
        b, din, dout, S::one(), input.data(), din as isize, 1, weights.data(), dout as isize, 1,
        S::one(), out.data_mut(), dout as isize, 1,
    );
    Ok(out)
}

/// Returns `(d_input, d_weights, d_bias)`.
pub fn fully_connected_backward<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    grad_out: &TensorBuf<S>,
) -> Result<(TensorBuf<S>, TensorBuf<S>, TensorBuf<S>)> {
    let [b, din] = input.dims::<2>()?;
    let [wi, dout] = weights.dims::<2>()?;
    if wi != din {
        return Err(Error::dim(format!("weights expect {wi} inputs, got {din}")));
    }
    grad_out.expect_shape(&[b, dout])?;
    let mut dx = TensorBuf::zeros(&[b, din]);
    S::gemm(
        b, dout, din, S::one(), grad_out.data(), dout as isize, 1, weights.data(), 1,
        dout as isize, S::zero(), dx.data_mut(), din as isize, 1,
    );
    let mut dw = TensorBuf::zeros(&[din, dout]);
    S::gemm(
        din, b, dout, S::one(), input.data(), 1, din as isize, grad_out.data(), dout as isize, 1,
        S::zero(), dw.data_mut(), dout as isize, 1,
    );
    let mut db = TensorBuf::zeros(&[dout]);
    for row in grad_out.data().chunks_exact(dout.max(1)) {
        db.data_mut().iter_mut().zip(row).for_each(|(a, &g)| *a += g);
    }
    Ok((dx, dw, db))
}

#[derive(Clone, Debug)]
pub struct Dense<S> {
    pub weight: ParamTensor<S>,
    pub bias: ParamTensor<S>,
}

impl<S: Scalar> Dense<S> {
    pub fn forward(&self, x: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        fully_connected(x, self.weight.value(), self.bias.value())
    }

    pub fn backward(&mut self, x: &TensorBuf<S>, dy: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        let (dx, dw, db) = fully_connected_backward(x, self.weight.value(), dy)?;
        self.weight.accumulate(dw.data());
        self.bias.accumulate(db.data());
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;

    #[test]
    fn identity_weights() {
        let x = TensorBuf::from_fn(&[3, 4], |i| i as f32 - 5.0);
        let eye = TensorBuf::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        let y = fully_connected(&x, &eye, &TensorBuf::zeros(&[4])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn mismatch_rejected() {
        let x = TensorBuf::<f32>::zeros(&[3, 5]);
        let w = TensorBuf::zeros(&[4, 2]);
        assert!(matches!(fully_connected(&x, &w, &TensorBuf::zeros(&[2])), Err(Error::Dimension(_))));
    }

    #[test]
    fn gradients() {
        let x = TensorBuf::from_fn(&[3, 5], |i| (i as f64 * 0.7).sin());
        let w = TensorBuf::from_fn(&[5, 2], |i| (i as f64 * 1.3).cos());
        let b = TensorBuf::from_vec(&[2], vec![0.1, -0.2]).unwrap();
        let probe = TensorBuf::from_fn(&[3, 2], |i| i as f64 - 2.5);
        let (dx, dw, db) = fully_connected_backward(&x, &w, &probe).unwrap();
        let f = |x: &TensorBuf<f64>, w: &TensorBuf<f64>, b: &TensorBuf<f64>| {
            fully_connected(x, w, b).unwrap().dot(&probe).unwrap()
        };
        for r in [
            grad_check(|v| f(v, &w, &b), &x, &dx).unwrap(),
            grad_check(|v| f(&x, v, &b), &w, &dw).unwrap(),
            grad_check(|v| f(&x, &w, v), &b, &db).unwrap(),
        ] {
            assert!(r.max_rel_error <= 1e-5, "{r:?}");
        }
    }
}
