//! Central finite-difference gradient checking (64-bit).

use crate::error::Result;
use crate::nncore::TensorBuf;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over all coordinates; infinite if the analytic gradient is not finite.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

const STEP: f64 = 1e-5;

/// Compares `analytic` against central differences of `f` around `input`.
///
/// Coordinates are perturbed by `1e-5 * max(1, |x|)`. The per-coordinate error is
/// `|a - n| / max(|a|, |n|, floor)` where `floor` is `1e-3` of the largest analytic
/// magnitude (and at least `1e-8`), so coordinates whose true gradient is negligible
/// next to the rest cannot dominate through round-off.
pub fn grad_check<F>(f: F, input: &TensorBuf<f64>, analytic: &TensorBuf<f64>) -> Result<GradCheckReport>
where
    F: FnMut(&TensorBuf<f64>) -> f64,
{
    let all: Vec<usize> = (0..input.len()).collect();
    grad_check_at(f, input, analytic, &all)
}

/// [`grad_check`] restricted to the listed coordinates, for inputs too large to sweep.
pub fn grad_check_at<F>(
    mut f: F,
    input: &TensorBuf<f64>,
    analytic: &TensorBuf<f64>,
    indices: &[usize],
) -> Result<GradCheckReport>
where
    F: FnMut(&TensorBuf<f64>) -> f64,
{
    analytic.expect_shape(input.shape())?;
    if let Some(&bad) = indices.iter().find(|&&i| i >= input.len()) {
        return Err(crate::error::Error::dim(format!("coordinate {bad} out of range")));
    }
    let coordinates = indices.len();
    if !analytic.all_finite() {
        let worst_index = analytic.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Ok(GradCheckReport {
            max_rel_error: f64::INFINITY,
            worst_index,
            coordinates,
        });
    }
    let floor = (1e-3 * analytic.max_abs()).max(1e-8);
    let mut probe = input.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        coordinates,
    };
    for &i in indices {
        let x0 = input.data()[i];
        let h = STEP * x0.abs().max(1.0);
        probe.data_mut()[i] = x0 + h;
        let up = f(&probe);
        probe.data_mut()[i] = x0 - h;
        let down = f(&probe);
        probe.data_mut()[i] = x0;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        let err = if numeric.is_finite() {
            (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor)
        } else {
            f64::INFINITY
        };
        if !(err <= report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Like [`grad_check`], with `f` supplying both the value and its analytic gradient.
pub fn grad_check_fn<F>(mut f: F, input: &TensorBuf<f64>) -> Result<GradCheckReport>
where
    F: FnMut(&TensorBuf<f64>) -> (f64, TensorBuf<f64>),
{
    let (_, analytic) = f(input);
    grad_check(|x| f(x).0, input, &analytic)
}
