use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
}

impl FilterSpec {
    pub fn new(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Self {
        FilterSpec {
            order,
            low_hz,
            high_hz,
            fs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |arg, reason: String| Err(Error::InvalidArg { arg, reason });
        if self.order == 0 {
            return bad("order", "must be positive".into());
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad("fs", format!("{} is not a positive rate", self.fs));
        }
        if !(self.low_hz > 0.0) {
            return bad("band", format!("low edge {} must be above 0 Hz", self.low_hz));
        }
        if !(self.low_hz < self.high_hz) {
            return bad("band", format!("low edge {} must be below high edge {}", self.low_hz, self.high_hz));
        }
        if !(self.high_hz < self.fs / 2.0) {
            return bad(
                "band",
                format!("high edge {} must be below the Nyquist rate {}", self.high_hz, self.fs / 2.0),
            );
        }
        Ok(())
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn poles(&self) -> [Complex64; 2] {
        quadratic_roots(self.a[0], self.a[1])
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    /// Steady-state transposed direct form II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let s1 = self.b[2] - self.a[1] * gain;
        let s0 = self.b[1] - self.a[0] * gain + s1;
        [s0, s1]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    fn run(&self, x: &mut [f64], mut s: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + s[0];
            s[0] = b1 * input - a1 * y + s[1];
            s[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

fn quadratic_roots(a1: f64, a2: f64) -> [Complex64; 2] {
    // z² + a1 z + a2
    let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
    [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
}

/// Cascade of second-order sections designed for sampling rate `fs`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub fs: f64,
}

impl BiquadCascade {
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Number of poles (twice the section count).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    /// Expanded numerator and denominator polynomials in z⁻¹.
    pub fn transfer_function(&self) -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![1.0];
        let mut a = vec![1.0];
        for s in &self.sections {
            b = convolve(&b, &s.b);
            a = convolve(&a, &[1.0, s.a[0], s.a[1]]);
        }
        (b, a)
    }

    /// Causal single pass, starting from the step steady state scaled by `x[0]`.
    fn run_steady(&self, x: &mut [f64]) {
        let mut scale = x[0];
        for s in &self.sections {
            let st = s.step_state();
            s.run(x, [st[0] * scale, st[1] * scale]);
            scale *= s.dc_gain();
        }
    }

    /// Causal filtering from a zero initial state.
    pub fn lfilter(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x, [0.0, 0.0]);
        }
    }
}

fn convolve(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + y.len() - 1];
    for (i, a) in x.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Digital Butterworth band-pass: analog prototype, band transform at pre-warped edges,
/// bilinear map. Produces `order` sections (2·order poles), sorted by pole radius.
pub fn butter_bandpass(spec: &FilterSpec) -> Result<BiquadCascade> {
    spec.validate()?;
    let n = spec.order;
    let fs2 = 2.0 * spec.fs;
    let warp = |f: f64| fs2 * (PI * f / spec.fs).tan();
    let (wl, wh) = (warp(spec.low_hz), warp(spec.high_hz));
    let bw = wh - wl;
    let wo2 = wl * wh;

    // prototype poles on the left half of the unit circle
    let proto: Vec<Complex64> = (0..n)
        .map(|k| {
            let m = -(n as f64) + 1.0 + 2.0 * k as f64;
            -Complex64::from_polar(1.0, PI * m / (2.0 * n as f64))
        })
        .collect();

    let mut analog = Vec::with_capacity(2 * n);
    for p in &proto {
        let p = p * (bw / 2.0);
        let r = (p * p - wo2).sqrt();
        analog.push(p + r);
        analog.push(p - r);
    }
    // n analog zeros at 0, n at infinity
    let mut gain = bw.powi(n as i32);
    let num: Complex64 = (0..n).map(|_| Complex64::new(fs2, 0.0)).product();
    let den: Complex64 = analog.iter().map(|p| fs2 - p).product();
    gain *= (num / den).re;
    let digital: Vec<Complex64> = analog.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();

    let mut sections = pair_poles(&digital)
        .into_iter()
        .map(|(a1, a2)| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [a1, a2],
        })
        .collect::<Vec<_>>();
    sections.sort_by(|x, y| x.a[1].abs().total_cmp(&y.a[1].abs()));

    let per = gain.abs().powf(1.0 / n as f64);
    for (i, s) in sections.iter_mut().enumerate() {
        let g = if i == 0 { per * gain.signum() } else { per };
        for c in &mut s.b {
            *c *= g;
        }
    }
    Ok(BiquadCascade {
        sections,
        fs: spec.fs,
    })
}

/// Groups poles into real-coefficient quadratics: conjugate pairs first, then leftover reals two by two.
fn pair_poles(poles: &[Complex64]) -> Vec<(f64, f64)> {
    let tol = 1e-10;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > tol).collect();
    let mut reals: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    reals.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, f64)> = complex.iter().map(|p| (-2.0 * p.re, p.norm_sqr())).collect();
    for pair in reals.chunks(2) {
        match pair {
            [p, q] => out.push((-(p + q), p * q)),
            [p] => out.push((-p, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

/// Zero-phase forward-backward filtering with odd-reflection padding of `3 × poles` samples
/// and steady-state initial conditions.
///
/// The result is the average of the forward-first and backward-first passes, which makes it
/// exactly reversal-equivariant in floating point.
pub fn filtfilt(filter: &BiquadCascade, signal: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * filter.order();
    if signal.len() <= pad {
        return Err(Error::InvalidArg {
            arg: "signal",
            reason: format!(
                "{} samples is too short for edge padding, need more than {pad}",
                signal.len()
            ),
        });
    }
    let fwd = filtfilt_once(filter, signal, pad);
    let rev: Vec<f64> = signal.iter().rev().copied().collect();
    let bwd = filtfilt_once(filter, &rev, pad);
    Ok(fwd.iter().zip(bwd.iter().rev()).map(|(a, b)| 0.5 * (a + b)).collect())
}

fn filtfilt_once(filter: &BiquadCascade, x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
    filter.run_steady(&mut ext);
    ext.reverse();
    filter.run_steady(&mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}
