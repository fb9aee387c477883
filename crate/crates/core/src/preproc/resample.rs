use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Kaiser window shape parameter for the anti-alias kernel.
const KAISER_BETA: f64 = 5.0;
/// Kernel half-length in multiples of max(L, M).
const HALF_LEN_FACTOR: usize = 10;
const MAX_FACTOR: u64 = 4096;

/// `fs_out / fs_in` as a reduced fraction `(up, down)`.
pub fn rational_ratio(fs_in: f64, fs_out: f64) -> Result<(usize, usize)> {
    let bad = |reason: String| Error::InvalidArg { arg: "fs", reason };
    for f in [fs_in, fs_out] {
        if !(f > 0.0 && f.is_finite()) {
            return Err(bad(format!("{f} is not a positive rate")));
        }
    }
    // rates are accepted to a precision of 1 mHz
    let as_int = |f: f64| -> Result<u64> {
        let v = (f * 1000.0).round();
        if (v - f * 1000.0).abs() > 1e-6 * v.max(1.0) || v > 1e15 {
            return Err(bad(format!("{f} Hz has no exact rational form")));
        }
        Ok(v as u64)
    };
    let (a, b) = (as_int(fs_out)?, as_int(fs_in)?);
    let g = gcd(a, b);
    let (up, down) = (a / g, b / g);
    if up > MAX_FACTOR || down > MAX_FACTOR {
        return Err(bad(format!(
            "ratio {fs_out}/{fs_in} reduces to {up}/{down}, beyond the supported factor {MAX_FACTOR}"
        )));
    }
    Ok((up as usize, down as usize))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Polyphase rational resampler. Each phase's taps are normalized to unit sum so constants
/// pass through exactly away from the edges.
#[derive(Clone, Debug)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// per phase r: first input offset and weights
    phases: Vec<(isize, Vec<f64>)>,
}

impl Resampler {
    pub fn new(fs_in: f64, fs_out: f64) -> Result<Self> {
        let (up, down) = rational_ratio(fs_in, fs_out)?;
        let scale = up.max(down);
        let half = (HALF_LEN_FACTOR * scale) as isize;
        let i0_beta = bessel_i0(KAISER_BETA);
        let kernel = |k: isize| -> f64 {
            let x = k as f64 / scale as f64;
            let sinc = if k == 0 { 1.0 } else { (PI * x).sin() / (PI * x) };
            let r = k as f64 / half as f64;
            sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta
        };
        let l = up as isize;
        let phases = (0..l)
            .map(|r| {
                // taps j = q + d, with |r − d·L| ≤ half
                let lo = (r - half).div_euclid(l) + if (r - half).rem_euclid(l) != 0 { 1 } else { 0 };
                let hi = (r + half).div_euclid(l);
                let mut w: Vec<f64> = (lo..=hi).map(|d| kernel(r - d * l)).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= s);
                (lo, w)
            })
            .collect();
        Ok(Resampler { up, down, phases })
    }

    pub fn factors(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, n: usize) -> usize {
        (n * self.up).div_ceil(self.down)
    }

    /// Position in the output stream of input sample `i`.
    pub fn map_index(&self, i: usize) -> f64 {
        i as f64 * self.up as f64 / self.down as f64
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as isize;
        let (l, m) = (self.up, self.down);
        (0..self.output_len(x.len()))
            .map(|k| {
                let c = k * m;
                let (q, r) = ((c / l) as isize, c % l);
                let (lo, w) = &self.phases[r];
                let start = q + lo;
                w.iter()
                    .enumerate()
                    .filter_map(|(d, wv)| {
                        let j = start + d as isize;
                        (0..n).contains(&j).then(|| wv * x[j as usize])
                    })
                    .sum()
            })
            .collect()
    }
}

pub fn resample(signal: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    Ok(Resampler::new(fs_in, fs_out)?.apply(signal))
}
