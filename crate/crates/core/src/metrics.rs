//! Micro-, macro- and example-averaged F1 over binary label matrices.
//!
//! A ratio whose denominator is zero (no positives in truth or prediction)
//! counts as a perfect score of 1.

use serde::Serialize;

use crate::error::{check_len, Result, SimFairError};
use crate::similarity::LabelVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1Report {
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub example: f64,
}

impl F1Report {
    pub fn compute(truth: &[LabelVector], predicted: &[LabelVector]) -> Result<Self> {
        Ok(Self {
            micro: micro_f1(truth, predicted)?,
            macro_: macro_f1(truth, predicted)?,
            example: example_f1(truth, predicted)?,
        })
    }
}

fn check_shapes(truth: &[LabelVector], predicted: &[LabelVector]) -> Result<usize> {
    check_len("label matrix rows", truth.len(), predicted.len())?;
    let width = truth.first().map_or(0, LabelVector::len);
    for (y, y_hat) in truth.iter().zip(predicted) {
        check_len("label matrix columns", width, y.len())?;
        check_len("label matrix columns", width, y_hat.len())?;
    }
    Ok(width)
}

fn f1_ratio(true_pos: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        2.0 * true_pos as f64 / total as f64
    }
}

/// `2 * sum(y * y_hat) / sum(y + y_hat)` over the whole matrix.
pub fn micro_f1(truth: &[LabelVector], predicted: &[LabelVector]) -> Result<f64> {
    check_shapes(truth, predicted)?;
    let (mut tp, mut total) = (0, 0);
    for (y, y_hat) in truth.iter().zip(predicted) {
        for (&a, &b) in y.bits().iter().zip(y_hat.bits()) {
            tp += usize::from(a && b);
            total += usize::from(a) + usize::from(b);
        }
    }
    Ok(f1_ratio(tp, total))
}

/// Per-label F1, averaged over labels.
pub fn macro_f1(truth: &[LabelVector], predicted: &[LabelVector]) -> Result<f64> {
    let width = check_shapes(truth, predicted)?;
    if width == 0 {
        return Err(SimFairError::data(
            "macro F1 needs at least one label column",
        ));
    }
    let mut tp = vec![0usize; width];
    let mut total = vec![0usize; width];
    for (y, y_hat) in truth.iter().zip(predicted) {
        for (l, (&a, &b)) in y.bits().iter().zip(y_hat.bits()).enumerate() {
            tp[l] += usize::from(a && b);
            total[l] += usize::from(a) + usize::from(b);
        }
    }
    let sum: f64 = tp.iter().zip(&total).map(|(&t, &n)| f1_ratio(t, n)).sum();
    Ok(sum / width as f64)
}

/// Per-sample F1, averaged over samples.
pub fn example_f1(truth: &[LabelVector], predicted: &[LabelVector]) -> Result<f64> {
    check_shapes(truth, predicted)?;
    if truth.is_empty() {
        return Err(SimFairError::data("example F1 needs at least one sample"));
    }
    let sum: f64 = truth
        .iter()
        .zip(predicted)
        .map(|(y, y_hat)| {
            let (mut tp, mut total) = (0, 0);
            for (&a, &b) in y.bits().iter().zip(y_hat.bits()) {
                tp += usize::from(a && b);
                total += usize::from(a) + usize::from(b);
            }
            f1_ratio(tp, total)
        })
        .sum();
    Ok(sum / truth.len() as f64)
}
