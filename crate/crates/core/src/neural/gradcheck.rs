use rand::seq::index::sample;
use rand::Rng;

use super::Params;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// (slice, offset, analytic, numeric) for the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// `|a - n| / max(|a| + |n|, floor)`; the floor keeps vanishing gradients from dominating.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares analytic gradients against central differences on a random subsample of
/// at least `samples` parameters (all of them when the network is smaller).
pub fn gradient_check<T, P, L, R>(params: &P, grads: &P, mut loss: L, step: f64, samples: usize, rng: &mut R) -> GradCheckReport
where
    T: Scalar,
    P: Params<T>,
    L: FnMut(&P) -> f64,
    R: Rng + ?Sized,
{
    let lens: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
    let total: usize = lens.iter().sum();
    let take = samples.min(total);
    let mut flat: Vec<usize> = sample(rng, total, take).into_vec();
    flat.sort_unstable();
    let analytic: Vec<f64> = grads.param_slices().concat().iter().map(|g| g.as_f64()).collect();

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst: None,
    };
    for idx in flat {
        let (slice, offset) = locate(&lens, idx);
        let original = probe.param_slices()[slice][offset];
        probe.param_slices_mut()[slice][offset] = original + T::lit(step);
        let up = loss(&probe);
        probe.param_slices_mut()[slice][offset] = original - T::lit(step);
        let down = loss(&probe);
        probe.param_slices_mut()[slice][offset] = original;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[idx];
        let rel = relative_error(a, numeric, 1e-7);
        report.checked += 1;
        report.max_absolute_error = report.max_absolute_error.max((a - numeric).abs());
        if rel > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(rel);
            report.worst = Some((slice, offset, a, numeric));
        }
    }
    report
}

fn locate(lens: &[usize], mut idx: usize) -> (usize, usize) {
    for (slice, &len) in lens.iter().enumerate() {
        if idx < len {
            return (slice, idx);
        }
        idx -= len;
    }
    unreachable!("flat index within total parameter count")
}
