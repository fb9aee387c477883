use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EpochedDataset;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArg {
            arg: "sigma",
            reason: format!("{sigma} must be non-negative"),
        });
    }
    Ok(())
}

/// Adds Gaussian noise scaled by each channel's own standard deviation within the trial.
pub fn augment_jitter(ds: &EpochedDataset, sigma: f64, seed: u64) -> Result<EpochedDataset> {
    check_sigma(sigma)?;
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = ds.n_samples();
    for row in out.data_mut().chunks_mut(t) {
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
        let sd = (row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t as f64).sqrt();
        for v in row {
            *v = (*v as f64 + sigma * sd * normal(&mut rng)) as f32;
        }
    }
    Ok(out)
}

/// Multiplies each trial by one factor drawn from N(1, σ²).
pub fn augment_scale(ds: &EpochedDataset, sigma: f64, seed: u64) -> Result<EpochedDataset> {
    check_sigma(sigma)?;
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..out.len() {
        let f = 1.0 + sigma * normal(&mut rng);
        for v in out.trial_mut(i) {
            *v = (*v as f64 * f) as f32;
        }
    }
    Ok(out)
}

/// Natural cubic spline through `(xs[i], ys[i])`, evaluated at `0..n`.
fn spline(xs: &[f64], ys: &[f64], n: usize) -> Vec<f64> {
    let k = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // second derivatives, zero at both ends; Thomas algorithm on the interior system
    let mut m = vec![0.0; k];
    if k > 2 {
        let size = k - 2;
        let mut diag = vec![0.0; size];
        let mut rhs = vec![0.0; size];
        for i in 0..size {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for i in 1..size {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..size).rev() {
            let upper = if i + 1 < size { h[i + 1] * m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper) / diag[i];
        }
    }
    (0..n)
        .map(|t| {
            let x = t as f64;
            let j = xs.windows(2).position(|w| x <= w[1]).unwrap_or(k - 2);
            let (a, b) = (xs[j + 1] - x, x - xs[j]);
            let hj = h[j];
            m[j] * a.powi(3) / (6.0 * hj)
                + m[j + 1] * b.powi(3) / (6.0 * hj)
                + (ys[j] / hj - m[j] * hj / 6.0) * a
                + (ys[j + 1] / hj - m[j + 1] * hj / 6.0) * b
        })
        .collect()
}

/// `knots + 2` random values N(1, σ²) spread evenly over the trial, interpolated to length `t`.
fn random_curve(rng: &mut impl Rng, sigma: f64, knots: usize, t: usize) -> Vec<f64> {
    let k = knots + 2;
    let xs: Vec<f64> = (0..k).map(|i| i as f64 * (t - 1) as f64 / (k - 1) as f64).collect();
    let ys: Vec<f64> = (0..k).map(|_| 1.0 + sigma * normal(rng)).collect();
    spline(&xs, &ys, t)
}

fn check_knots(knots: usize, t: usize) -> Result<()> {
    if knots == 0 || knots + 2 > t {
        return Err(Error::InvalidArg {
            arg: "knots",
            reason: format!("{knots} knots do not fit a trial of {t} samples"),
        });
    }
    Ok(())
}

/// Multiplies every channel by its own smooth random envelope.
pub fn augment_magwarp(ds: &EpochedDataset, sigma: f64, knots: usize, seed: u64) -> Result<EpochedDataset> {
    check_sigma(sigma)?;
    let t = ds.n_samples();
    check_knots(knots, t)?;
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in out.data_mut().chunks_mut(t) {
        let env = random_curve(&mut rng, sigma, knots, t);
        for (v, e) in row.iter_mut().zip(env) {
            *v = (*v as f64 * e) as f32;
        }
    }
    Ok(out)
}

/// Resamples each trial along a smooth monotone time map with fixed endpoints.
pub fn augment_timewarp(ds: &EpochedDataset, sigma: f64, knots: usize, seed: u64) -> Result<EpochedDataset> {
    check_sigma(sigma)?;
    let t = ds.n_samples();
    check_knots(knots, t)?;
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = ds.n_channels();
    for i in 0..out.len() {
        let speed: Vec<f64> = random_curve(&mut rng, sigma, knots, t).into_iter().map(|s| s.max(0.05)).collect();
        let mut tau = vec![0.0; t];
        for u in 1..t {
            tau[u] = tau[u - 1] + 0.5 * (speed[u - 1] + speed[u]);
        }
        let end = tau[t - 1];
        for v in &mut tau {
            *v *= (t - 1) as f64 / end;
        }
        tau[t - 1] = (t - 1) as f64;
        let src = ds.trial(i);
        let dst = out.trial_mut(i);
        for ch in 0..c {
            let x = &src[ch * t..(ch + 1) * t];
            for (u, &p) in tau.iter().enumerate() {
                let j = (p.floor() as usize).min(t - 1);
                let frac = p - j as f64;
                dst[ch * t + u] = if j + 1 < t {
                    (x[j] as f64 + frac * (x[j + 1] as f64 - x[j] as f64)) as f32
                } else {
                    x[j]
                };
            }
        }
    }
    Ok(out)
}

/// Cuts the time axis into `segments` equal blocks and shuffles them, one order per trial.
pub fn augment_permute(ds: &EpochedDataset, segments: usize, seed: u64) -> Result<EpochedDataset> {
    let t = ds.n_samples();
    if segments == 0 || t % segments != 0 {
        return Err(Error::InvalidArg {
            arg: "segments",
            reason: format!("{segments} does not divide the trial length {t}"),
        });
    }
    let mut out = ds.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seg = t / segments;
    let c = ds.n_channels();
    let mut perm: Vec<usize> = (0..segments).collect();
    for i in 0..out.len() {
        perm.shuffle(&mut rng);
        let src = ds.trial(i);
        let dst = out.trial_mut(i);
        for ch in 0..c {
            for (k, &p) in perm.iter().enumerate() {
                let from = ch * t + p * seg;
                dst[ch * t + k * seg..ch * t + (k + 1) * seg].copy_from_slice(&src[from..from + seg]);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Jitter,
    Scale,
    Magwarp,
    Timewarp,
    Permute,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::Jitter,
        AugmentKind::Scale,
        AugmentKind::Magwarp,
        AugmentKind::Timewarp,
        AugmentKind::Permute,
    ];
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "jitter" => AugmentKind::Jitter,
            "scale" => AugmentKind::Scale,
            "magwarp" | "magw" => AugmentKind::Magwarp,
            "timewarp" | "timew" => AugmentKind::Timewarp,
            "permute" | "perm" => AugmentKind::Permute,
            other => {
                return Err(Error::InvalidArg {
                    arg: "augment",
                    reason: format!("unknown transform `{other}`"),
                })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub kinds: Vec<AugmentKind>,
    pub sigma: f64,
    pub knots: usize,
    pub segments: usize,
    /// Augmented copies per original trial and transform.
    pub copies: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            kinds: Vec::new(),
            sigma: 0.1,
            knots: 4,
            segments: 4,
            copies: 1,
        }
    }
}

pub fn augment_one(ds: &EpochedDataset, kind: AugmentKind, cfg: &AugmentConfig, seed: u64) -> Result<EpochedDataset> {
    match kind {
        AugmentKind::Jitter => augment_jitter(ds, cfg.sigma, seed),
        AugmentKind::Scale => augment_scale(ds, cfg.sigma, seed),
        AugmentKind::Magwarp => augment_magwarp(ds, cfg.sigma, cfg.knots, seed),
        AugmentKind::Timewarp => augment_timewarp(ds, cfg.sigma, cfg.knots, seed),
        AugmentKind::Permute => augment_permute(ds, cfg.segments, seed),
    }
}

/// The pool followed by `copies` transformed copies for each enabled transform.
pub fn augment_pool(ds: &EpochedDataset, cfg: &AugmentConfig, seed: u64) -> Result<EpochedDataset> {
    let mut out = ds.clone();
    for (k, &kind) in cfg.kinds.iter().enumerate() {
        for copy in 0..cfg.copies {
            let s = derive_seed(seed, (k * 1000 + copy) as u64);
            out.extend(&augment_one(ds, kind, cfg, s)?)?;
        }
    }
    Ok(out)
}

/// Keeps every non-rest trial and a random half (rounded down) of the rest trials, in original order.
pub fn balance_rest(ds: &EpochedDataset, rest_label: usize, seed: u64) -> Result<EpochedDataset> {
    let rest: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == rest_label).collect();
    if rest.is_empty() {
        return Err(Error::InvalidArg {
            arg: "rest_label",
            reason: format!("no trials carry label {rest_label}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, rest.len(), rest.len() / 2);
    let mut keep = vec![false; ds.len()];
    for i in 0..ds.len() {
        keep[i] = ds.labels()[i] != rest_label;
    }
    for j in chosen.iter() {
        keep[rest[j]] = true;
    }
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| keep[i]).collect();
    Ok(ds.subset(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spline_interpolates_knots_and_lines() {
        let xs = [0.0, 3.0, 6.0, 9.0];
        let ys = [1.0, 2.0, 0.5, 4.0];
        let v = spline(&xs, &ys, 10);
        for (x, y) in xs.iter().zip(ys) {
            assert!((v[*x as usize] - y).abs() < 1e-12);
        }
        let line = spline(&xs, &[0.0, 3.0, 6.0, 9.0], 10);
        for (t, v) in line.iter().enumerate() {
            assert!((v - t as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn kind_names() {
        assert_eq!("MagW".parse::<AugmentKind>().unwrap(), AugmentKind::Magwarp);
        assert!("flip".parse::<AugmentKind>().is_err());
    }
}
