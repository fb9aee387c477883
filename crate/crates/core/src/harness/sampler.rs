use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::model::check_triplet_composition;

/// Splits indices into batches that each mix the classes in roughly their overall
/// proportions, so every batch supports triplet mining.
///
/// Within each class the order is shuffled by `rng` when given. A chunk that cannot form
/// triplets on its own (possible with skewed classes) is merged with the next one, and
/// leftovers at the end join the last batch.
pub fn stratified_batches(labels: &[usize], batch_size: usize, rng: Option<&mut dyn rand::RngCore>) -> Result<Vec<Vec<usize>>> {
    let n_cls = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_cls];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng;
    if let Some(r) = rng.as_deref_mut() {
        for c in &mut by_class {
            c.shuffle(r);
        }
    }
    // position of each member along its class, as a fraction; equal fractions keep class order
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(labels.len());
    for (k, members) in by_class.iter().enumerate() {
        let n = members.len() as f64;
        for (j, &i) in members.iter().enumerate() {
            keyed.push(((j as f64 + 0.5) / n, k, i));
        }
    }
    if let Some(r) = rng.as_deref_mut() {
        // random class precedence per epoch so ties do not always favour class 0
        let mut prec: Vec<usize> = (0..n_cls).collect();
        prec.shuffle(r);
        for e in &mut keyed {
            e.1 = prec[e.1];
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<usize> = keyed.into_iter().map(|e| e.2).collect();
    let composition = |b: &[usize]| check_triplet_composition(&b.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let mut batches: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for chunk in order.chunks(batch_size.max(1)) {
        pending.extend_from_slice(chunk);
        if composition(&pending).is_ok() {
            batches.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match batches.last_mut() {
            Some(last) => last.extend(pending),
            None => batches.push(pending),
        }
    }
    for b in &batches {
        composition(b)?;
    }
    Ok(batches)
}

pub(crate) fn shuffled_batches(labels: &[usize], batch_size: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    let mut batches = stratified_batches(labels, batch_size, Some(rng))?;
    batches.shuffle(rng);
    Ok(batches)
}
