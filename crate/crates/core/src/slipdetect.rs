//! Chi-square slip-event classification and confusion-matrix metrics.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Per-correction slip test outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlipDecision {
    pub t: f64,
    /// Chi-square statistic with 3 degrees of freedom.
    pub r: f64,
    pub is_slip: bool,
}

impl SlipDecision {
    pub fn new(t: f64, r: f64, threshold: f64) -> Self {
        Self {
            t,
            r,
            is_slip: classify(r, threshold),
        }
    }
}

/// `r = u^T Sigma^-1 u` against the zero-mean steady-state slip distribution.
pub fn chi_square_statistic(slip: &Vector3<f64>, steady_cov: &Matrix3<f64>) -> Result<f64> {
    let chol = steady_cov
        .cholesky()
        .ok_or(Error::SingularSteadyCovariance)?;
    let z = chol.l().solve_lower_triangular(slip).ok_or(Error::SingularSteadyCovariance)?;
    Ok(z.norm_squared())
}

/// Strict comparison: a statistic equal to the threshold is not a slip.
pub fn classify(r: f64, threshold: f64) -> bool {
    r > threshold
}

/// Labelled interval `[start, end)` of ground-truth slip state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelInterval {
    pub start: f64,
    pub end: f64,
    pub slip: bool,
}

impl LabelInterval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// Matches every decision with the first interval containing its timestamp
/// and drops decisions that fall outside all intervals.
pub fn align_labels(
    decisions: &[SlipDecision],
    intervals: &[LabelInterval],
) -> (Vec<SlipDecision>, Vec<bool>) {
    decisions
        .iter()
        .filter_map(|d| {
            intervals
                .iter()
                .find(|iv| iv.contains(d.t))
                .map(|iv| (*d, iv.slip))
        })
        .unzip()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClassificationMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// `fp / (fp + tn)`, zero when there are no negatives.
    pub fpr: f64,
    /// `fn / (fn + tp)`, zero when there are no positives.
    pub fnr: f64,
    pub accuracy: f64,
}

impl ClassificationMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self {
            tp,
            fp,
            tn,
            fn_,
            fpr: ratio(fp, fp + tn),
            fnr: ratio(fn_, fn_ + tp),
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn evaluate(decisions: &[SlipDecision], labels: &[bool]) -> Result<ClassificationMetrics> {
    if decisions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            decisions: decisions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (d, &truth) in decisions.iter().zip(labels) {
        match (d.is_slip, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ClassificationMetrics::from_counts(tp, fp, tn, fn_))
}
