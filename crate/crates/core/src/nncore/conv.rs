//! Time-axis convolution and its transpose in channels-last layout `[B, 1, T, C]`.
//!
//! Kernels have height 1, so both ops reduce to 1-D convolutions along time that mix
//! all input channels. Both are lowered to im2col + GEMM one sample at a time.

use crate::error::{Error, Result};
use crate::nncore::{ParamTensor, TensorBuf};
use crate::scalar::Scalar;

/// "same"-padding geometry linking a long axis of length `long` and a short axis of
/// length `long / stride`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SameGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub long: usize,
    pub short: usize,
    pub pad_left: usize,
}

impl SameGeometry {
    pub fn new(long: usize, kernel: usize, stride: usize) -> Result<Self> {
        if kernel == 0 {
            return Err(Error::dim("kernel size must be at least 1"));
        }
        if stride == 0 {
            return Err(Error::InvalidArg {
                arg: "stride",
                reason: "must be at least 1".into(),
            });
        }
        if long % stride != 0 {
            return Err(Error::dim(format!(
                "stride {stride} does not divide time length {long}"
            )));
        }
        let short = long / stride;
        let pad_total = ((short.max(1) - 1) * stride + kernel).saturating_sub(long);
        Ok(SameGeometry {
            kernel,
            stride,
            long,
            short,
            pad_left: pad_total / 2,
        })
    }

    /// Long-axis index touched by short index `o` and tap `k`, if inside the signal.
    #[inline]
    fn tap(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.pad_left)
            .filter(|&t| t < self.long)
    }
}

/// `cols[o, k*ch + c] = x[o*stride + k - pad, c]`, zero outside the signal.
fn im2col<S: Scalar>(x: &[S], ch: usize, g: &SameGeometry, cols: &mut [S]) {
    let row = g.kernel * ch;
    for o in 0..g.short {
        let dst = &mut cols[o * row..(o + 1) * row];
        for k in 0..g.kernel {
            let d = &mut dst[k * ch..(k + 1) * ch];
            match g.tap(o, k) {
                Some(t) => d.copy_from_slice(&x[t * ch..(t + 1) * ch]),
                None => d.fill(S::zero()),
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto the long axis.
fn col2im_add<S: Scalar>(cols: &[S], ch: usize, g: &SameGeometry, x: &mut [S]) {
    let row = g.kernel * ch;
    for o in 0..g.short {
        let src = &cols[o * row..(o + 1) * row];
        for k in 0..g.kernel {
            if let Some(t) = g.tap(o, k) {
                x[t * ch..(t + 1) * ch]
                    .iter_mut()
                    .zip(&src[k * ch..(k + 1) * ch])
                    .for_each(|(a, &b)| *a += b);
            }
        }
    }
}

fn add_bias<S: Scalar>(out: &mut [S], bias: &[S]) {
    for row in out.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(a, &b)| *a += b);
    }
}

fn column_sums<S: Scalar>(m: &[S], cols: usize, acc: &mut [S]) {
    for row in m.chunks_exact(cols) {
        acc.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
    }
}

struct ConvDims {
    batch: usize,
    geom: SameGeometry,
    cin: usize,
    cout: usize,
}

fn conv_dims<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    bias: &TensorBuf<S>,
    stride: usize,
) -> Result<ConvDims> {
    let [b, h, t, cin] = input.dims::<4>()?;
    let [wh, k, wcin, cout] = weights.dims::<4>()?;
    if h != 1 || wh != 1 {
        return Err(Error::dim("time convolutions require unit height"));
    }
    if wcin != cin {
        return Err(Error::dim(format!(
            "kernel declares {wcin} input channels, input has {cin}"
        )));
    }
    bias.expect_shape(&[cout])?;
    Ok(ConvDims {
        batch: b,
        geom: SameGeometry::new(t, k, stride)?,
        cin,
        cout,
    })
}

/// Strided "same" convolution along time: `[B,1,T,Cin] -> [B,1,T/stride,Cout]`.
///
/// `weights` is `[1, K, Cin, Cout]`, `bias` is `[Cout]`.
pub fn conv_time<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    bias: &TensorBuf<S>,
    stride: usize,
) -> Result<TensorBuf<S>> {
    let d = conv_dims(input, weights, bias, stride)?;
    let g = d.geom;
    let kc = g.kernel * d.cin;
    let mut out = TensorBuf::zeros(&[d.batch, 1, g.short, d.cout]);
    let mut cols = vec![S::zero(); g.short * kc];
    for b in 0..d.batch {
        let x = &input.data()[b * g.long * d.cin..(b + 1) * g.long * d.cin];
        im2col(x, d.cin, &g, &mut cols);
        let y = &mut out.data_mut()[b * g.short * d.cout..(b + 1) * g.short * d.cout];
        S::gemm(
            g.short, kc, d.cout, S::one(), &cols, kc as isize, 1, weights.data(),
            d.cout as isize, 1, S::zero(), y, d.cout as isize, 1,
        );
        add_bias(y, bias.data());
    }
    Ok(out)
}

/// Gradients of a time convolution.
#[derive(Clone, Debug)]
pub struct ConvGrads<S> {
    pub input: TensorBuf<S>,
    pub weights: TensorBuf<S>,
    pub bias: TensorBuf<S>,
}

pub fn conv_time_backward<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    stride: usize,
    grad_out: &TensorBuf<S>,
) -> Result<ConvGrads<S>> {
    conv_time_backward_impl(input, weights, stride, grad_out, true)
}

fn conv_time_backward_impl<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    stride: usize,
    grad_out: &TensorBuf<S>,
    want_input: bool,
) -> Result<ConvGrads<S>> {
    let cout = *weights.shape().last().unwrap_or(&0);
    let d = conv_dims(input, weights, &TensorBuf::zeros(&[cout]), stride)?;
    let g = d.geom;
    grad_out.expect_shape(&[d.batch, 1, g.short, d.cout])?;
    let kc = g.kernel * d.cin;
    let mut dx = TensorBuf::zeros(input.shape());
    let mut dw = TensorBuf::zeros(weights.shape());
    let mut db = TensorBuf::zeros(&[d.cout]);
    let mut cols = vec![S::zero(); g.short * kc];
    let mut dcols = vec![S::zero(); g.short * kc];
    for b in 0..d.batch {
        let x = &input.data()[b * g.long * d.cin..(b + 1) * g.long * d.cin];
        let dy = &grad_out.data()[b * g.short * d.cout..(b + 1) * g.short * d.cout];
        im2col(x, d.cin, &g, &mut cols);
        // dW += cols^T · dy
        S::gemm(
            kc, g.short, d.cout, S::one(), &cols, 1, kc as isize, dy, d.cout as isize, 1,
            S::one(), dw.data_mut(), d.cout as isize, 1,
        );
        column_sums(dy, d.cout, db.data_mut());
        if !want_input {
            continue;
        }
        // dcols = dy · W^T
        S::gemm(
            g.short, d.cout, kc, S::one(), dy, d.cout as isize, 1, weights.data(), 1,
            d.cout as isize, S::zero(), &mut dcols, kc as isize, 1,
        );
        let dxb = &mut dx.data_mut()[b * g.long * d.cin..(b + 1) * g.long * d.cin];
        col2im_add(&dcols, d.cin, &g, dxb);
    }
    Ok(ConvGrads {
        input: dx,
        weights: dw,
        bias: db,
    })
}

fn deconv_dims<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    bias: &TensorBuf<S>,
    stride: usize,
) -> Result<ConvDims> {
    if stride == 0 {
        return Err(Error::InvalidArg {
            arg: "stride",
            reason: "must be at least 1".into(),
        });
    }
    let [b, h, l, cin] = input.dims::<4>()?;
    let [wh, k, cout, wcin] = weights.dims::<4>()?;
    if h != 1 || wh != 1 {
        return Err(Error::dim("time convolutions require unit height"));
    }
    if wcin != cin {
        return Err(Error::dim(format!(
            "transposed kernel declares {wcin} input channels, input has {cin}"
        )));
    }
    bias.expect_shape(&[cout])?;
    Ok(ConvDims {
        batch: b,
        geom: SameGeometry::new(l * stride, k, stride)?,
        cin,
        cout,
    })
}

/// Transposed "same" convolution along time: `[B,1,L,Cin] -> [B,1,L*stride,Cout]`.
///
/// `weights` is `[1, K, Cout, Cin]`. Without bias this is the exact adjoint of
/// [`conv_time`] run with the same kernel and stride from `Cout` to `Cin` channels.
pub fn conv_transpose_time<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    bias: &TensorBuf<S>,
    stride: usize,
) -> Result<TensorBuf<S>> {
    let d = deconv_dims(input, weights, bias, stride)?;
    let g = d.geom;
    let kc = g.kernel * d.cout;
    let mut out = TensorBuf::zeros(&[d.batch, 1, g.long, d.cout]);
    let mut cols = vec![S::zero(); g.short * kc];
    for b in 0..d.batch {
        let v = &input.data()[b * g.short * d.cin..(b + 1) * g.short * d.cin];
        // cols = v · W^T, W viewed as (K*Cout) x Cin
        S::gemm(
            g.short, d.cin, kc, S::one(), v, d.cin as isize, 1, weights.data(), 1,
            d.cin as isize, S::zero(), &mut cols, kc as isize, 1,
        );
        let y = &mut out.data_mut()[b * g.long * d.cout..(b + 1) * g.long * d.cout];
        col2im_add(&cols, d.cout, &g, y);
        add_bias(y, bias.data());
    }
    Ok(out)
}

pub fn conv_transpose_time_backward<S: Scalar>(
    input: &TensorBuf<S>,
    weights: &TensorBuf<S>,
    stride: usize,
    grad_out: &TensorBuf<S>,
) -> Result<ConvGrads<S>> {
    let cout = weights.shape().get(2).copied().unwrap_or(0);
    let d = deconv_dims(input, weights, &TensorBuf::zeros(&[cout]), stride)?;
    let g = d.geom;
    grad_out.expect_shape(&[d.batch, 1, g.long, d.cout])?;
    let kc = g.kernel * d.cout;
    let mut dv = TensorBuf::zeros(input.shape());
    let mut dw = TensorBuf::zeros(weights.shape());
    let mut db = TensorBuf::zeros(&[d.cout]);
    let mut cols = vec![S::zero(); g.short * kc];
    for b in 0..d.batch {
        let v = &input.data()[b * g.short * d.cin..(b + 1) * g.short * d.cin];
        let dy = &grad_out.data()[b * g.long * d.cout..(b + 1) * g.long * d.cout];
        im2col(dy, d.cout, &g, &mut cols);
        let dvb = &mut dv.data_mut()[b * g.short * d.cin..(b + 1) * g.short * d.cin];
        S::gemm(
            g.short, kc, d.cin, S::one(), &cols, kc as isize, 1, weights.data(),
            d.cin as isize, 1, S::zero(), dvb, d.cin as isize, 1,
        );
        // dW += cols^T · v
        S::gemm(
            kc, g.short, d.cin, S::one(), &cols, 1, kc as isize, v, d.cin as isize, 1,
            S::one(), dw.data_mut(), d.cin as isize, 1,
        );
        column_sums(dy, d.cout, db.data_mut());
    }
    Ok(ConvGrads {
        input: dv,
        weights: dw,
        bias: db,
    })
}

/// Trainable strided time convolution.
#[derive(Clone, Debug)]
pub struct ConvTime<S> {
    pub weight: ParamTensor<S>,
    pub bias: ParamTensor<S>,
    pub stride: usize,
}

impl<S: Scalar> ConvTime<S> {
    pub fn forward(&self, x: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        conv_time(x, self.weight.value(), self.bias.value(), self.stride)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &TensorBuf<S>, dy: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        let g = conv_time_backward(x, self.weight.value(), self.stride, dy)?;
        self.weight.accumulate(g.weights.data());
        self.bias.accumulate(g.bias.data());
        Ok(g.input)
    }

    /// Parameter gradients only, for a first layer whose input needs no gradient.
    pub fn backward_params(&mut self, x: &TensorBuf<S>, dy: &TensorBuf<S>) -> Result<()> {
        let g = conv_time_backward_impl(x, self.weight.value(), self.stride, dy, false)?;
        self.weight.accumulate(g.weights.data());
        self.bias.accumulate(g.bias.data());
        Ok(())
    }
}

/// Trainable transposed time convolution.
#[derive(Clone, Debug)]
pub struct ConvTransposeTime<S> {
    pub weight: ParamTensor<S>,
    pub bias: ParamTensor<S>,
    pub stride: usize,
}

impl<S: Scalar> ConvTransposeTime<S> {
    pub fn forward(&self, x: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        conv_transpose_time(x, self.weight.value(), self.bias.value(), self.stride)
    }

    pub fn backward(&mut self, x: &TensorBuf<S>, dy: &TensorBuf<S>) -> Result<TensorBuf<S>> {
        let g = conv_transpose_time_backward(x, self.weight.value(), self.stride, dy)?;
        self.weight.accumulate(g.weights.data());
        self.bias.accumulate(g.bias.data());
        Ok(g.input)
    }
}
