use crate::error::{Error, Result};
use crate::nncore::TensorBuf;
use crate::scalar::Scalar;

/// Non-overlapping mean pooling along time: `[B,1,T,C] -> [B,1,T/pool,C]`.
pub fn avg_pool_time<S: Scalar>(input: &TensorBuf<S>, pool: usize) -> Result<TensorBuf<S>> {
    let [b, h, t, c] = input.dims::<4>()?;
    if pool == 0 || t % pool != 0 {
        return Err(Error::dim(format!("pool size {pool} does not divide time length {t}")));
    }
    let to = t / pool;
    let inv = S::one() / S::of(pool as f64);
    let mut out = TensorBuf::zeros(&[b, h, to, c]);
    let src = input.data();
    for (bo, dst) in out.data_mut().chunks_exact_mut(to * c).enumerate() {
        for o in 0..to {
            let acc = &mut dst[o * c..(o + 1) * c];
            for p in 0..pool {
                let row = (bo * t + o * pool + p) * c;
                acc.iter_mut().zip(&src[row..row + c]).for_each(|(a, &x)| *a += x);
            }
            acc.iter_mut().for_each(|a| *a *= inv);
        }
    }
    Ok(out)
}

/// Spreads each output gradient uniformly over its `pool` inputs.
pub fn avg_pool_time_backward<S: Scalar>(grad_out: &TensorBuf<S>, pool: usize) -> Result<TensorBuf<S>> {
    let [b, h, to, c] = grad_out.dims::<4>()?;
    if pool == 0 {
        return Err(Error::dim("pool size must be positive"));
    }
    let inv = S::one() / S::of(pool as f64);
    let mut dx = TensorBuf::zeros(&[b, h, to * pool, c]);
    let g = grad_out.data();
    for (i, row) in dx.data_mut().chunks_exact_mut(c).enumerate() {
        let (bi, t) = (i / (to * pool), i % (to * pool));
        let src = &g[(bi * to + t / pool) * c..(bi * to + t / pool + 1) * c];
        row.iter_mut().zip(src).for_each(|(d, &s)| *d = s * inv);
    }
    Ok(dx)
}
