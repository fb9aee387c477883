use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification metrics built from exact integer counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::dim(format!("{} labels, {} predictions", truth.len(), predicted.len())));
        }
        if truth.is_empty() {
            return Err(Error::InvalidArg {
                arg: "test set",
                reason: "no trials to evaluate".into(),
            });
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::InvalidArg {
                    arg: "labels",
                    reason: format!("class {} out of {n_classes}", t.max(p)),
                });
            }
            confusion[t][p] += 1;
        }
        let total = truth.len() as u64;
        let correct: u64 = (0..n_classes).map(|k| confusion[k][k]).sum();
        let mut precision = Vec::with_capacity(n_classes);
        let mut recall = Vec::with_capacity(n_classes);
        let mut f1 = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let tp = confusion[k][k];
            let actual: u64 = confusion[k].iter().sum();
            let called: u64 = confusion.iter().map(|row| row[k]).sum();
            precision.push(ratio(tp, called));
            recall.push(ratio(tp, actual));
            // 2TP / (2TP + FP + FN), kept in integers
            f1.push(ratio(2 * tp, actual + called));
        }
        let macro_f1 = f1.iter().sum::<f64>() / n_classes as f64;
        Ok(Metrics {
            accuracy: ratio(correct, total),
            precision,
            recall,
            f1,
            macro_f1,
            confusion,
        })
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}
