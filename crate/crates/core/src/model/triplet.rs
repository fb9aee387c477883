//! Online semi-hard triplet mining and the margin-hinge triplet loss.

use crate::error::{Error, Result};
use crate::model::loss::Loss;
use crate::nncore::TensorBuf;
use crate::scalar::Scalar;

/// Latent codes of a batch with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch<S> {
    /// `[B, z]`
    pub z: TensorBuf<S>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> LatentBatch<S> {
    pub fn new(z: TensorBuf<S>, labels: Vec<usize>) -> Result<Self> {
        let [b, _] = z.dims::<2>()?;
        if labels.len() != b {
            return Err(Error::dim(format!("{} labels for {b} latent rows", labels.len())));
        }
        Ok(LatentBatch { z, labels })
    }

    pub fn width(&self) -> usize {
        self.z.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Checks that at least one valid triplet exists: two distinct labels and some label
/// with two or more members.
pub fn check_triplet_composition(labels: &[usize]) -> Result<()> {
    let mut counts = std::collections::BTreeMap::new();
    for &y in labels {
        *counts.entry(y).or_insert(0usize) += 1;
    }
    if counts.len() < 2 {
        return Err(Error::BatchComposition(format!(
            "triplets need at least two classes, batch has {}",
            counts.len()
        )));
    }
    if counts.values().all(|&n| n < 2) {
        return Err(Error::BatchComposition(
            "triplets need two samples of some class, every class has one".into(),
        ));
    }
    Ok(())
}

fn squared_distances<S: Scalar>(z: &TensorBuf<S>) -> Vec<f64> {
    let [b, w] = [z.shape()[0], z.shape()[1]];
    let rows: Vec<&[S]> = z.data().chunks_exact(w.max(1)).collect();
    let mut d = vec![0.0; b * b];
    for i in 0..b {
        for j in (i + 1)..b {
            let v: f64 = rows[i]
                .iter()
                .zip(rows[j])
                .map(|(&a, &c)| {
                    let e = a.as_f64() - c.as_f64();
                    e * e
                })
                .sum();
            d[i * b + j] = v;
            d[j * b + i] = v;
        }
    }
    d
}

/// Every ordered same-label pair `(a, p)`, `a != p`, with its semi-hard negative: the
/// closest different-label sample strictly farther from the anchor than the positive,
/// or the farthest different-label sample when no such sample exists. Ties go to the
/// lower index.
pub fn mine_triplets<S: Scalar>(latents: &LatentBatch<S>) -> Result<Vec<Triplet>> {
    check_triplet_composition(&latents.labels)?;
    let b = latents.len();
    let d = squared_distances(&latents.z);
    let y = &latents.labels;
    let mut out = Vec::new();
    for a in 0..b {
        for p in (0..b).filter(|&p| p != a && y[p] == y[a]) {
            let dap = d[a * b + p];
            let mut semi: Option<(f64, usize)> = None;
            let mut hardest: Option<(f64, usize)> = None;
            for n in (0..b).filter(|&n| y[n] != y[a]) {
                let dan = d[a * b + n];
                if dan > dap && semi.is_none_or(|(best, _)| dan < best) {
                    semi = Some((dan, n));
                }
                if hardest.is_none_or(|(best, _)| dan > best) {
                    hardest = Some((dan, n));
                }
            }
            if let Some((_, negative)) = semi.or(hardest) {
                out.push(Triplet {
                    anchor: a,
                    positive: p,
                    negative,
                });
            }
        }
    }
    Ok(out)
}

/// Mean over the given triplets of `½[‖a−p‖² − ‖a−n‖² + margin]₊`, with the gradient
/// with respect to the latent rows. Triplet selection is held fixed.
pub fn triplet_loss_with<S: Scalar>(latents: &LatentBatch<S>, triplets: &[Triplet], margin: f64) -> Result<Loss<S>> {
    if triplets.is_empty() {
        return Err(Error::BatchComposition("no triplets to average".into()));
    }
    let w = latents.width();
    let z = latents.z.data();
    let row = |i: usize| &z[i * w..(i + 1) * w];
    let mut grad = TensorBuf::zeros(latents.z.shape());
    let scale = 1.0 / triplets.len() as f64;
    let mut value = 0.0;
    for t in triplets {
        let (a, p, n) = (row(t.anchor), row(t.positive), row(t.negative));
        let dist = |u: &[S], v: &[S]| -> f64 {
            u.iter().zip(v).map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2)).sum()
        };
        let hinge = dist(a, p) - dist(a, n) + margin;
        if hinge <= 0.0 {
            continue;
        }
        value += 0.5 * hinge;
        // d/da = (a-p) - (a-n) = n - p ; d/dp = p - a ; d/dn = a - n   (each times ½·2)
        let g = grad.data_mut();
        for k in 0..w {
            let (ak, pk, nk) = (a[k].as_f64(), p[k].as_f64(), n[k].as_f64());
            g[t.anchor * w + k] += S::of(scale * (nk - pk));
            g[t.positive * w + k] += S::of(scale * (pk - ak));
            g[t.negative * w + k] += S::of(scale * (ak - nk));
        }
    }
    Ok(Loss {
        value: value * scale,
        grad,
    })
}

/// Mines semi-hard triplets and averages the hinge loss over all anchor-positive pairs.
pub fn triplet_semihard_loss<S: Scalar>(latents: &LatentBatch<S>, margin: f64) -> Result<Loss<S>> {
    let triplets = mine_triplets(latents)?;
    triplet_loss_with(latents, &triplets, margin)
}
