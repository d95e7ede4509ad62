//! Classification metrics from a confusion matrix.
//!
//! Conventions for degenerate denominators follow the usual reporting
//! practice: a precision, recall, or F1 whose denominator is zero is
//! reported as zero rather than an error, so sparse test sets still
//! produce a full report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row = reference class, column = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(
        y_true: &[usize],
        y_pred: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::ShapeMismatch {
                op: "confusion matrix",
                detail: format!("{} references vs {} predictions", y_true.len(), y_pred.len()),
            });
        }
        if y_true.is_empty() {
            return Err(Error::Data("cannot score an empty prediction set".to_string()));
        }
        let mut counts = vec![vec![0usize; num_classes]; num_classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::Data(format!(
                    "label pair ({}, {}) outside {} classes",
                    t, p, num_classes
                )));
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    /// Reference count for one class.
    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn predicted_total(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Row-normalized matrix: each row divided by its true-class support,
    /// so rows with support sum to one. Zero-support rows stay all zero
    /// rather than dividing by zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let support: usize = row.iter().sum();
                if support == 0 {
                    vec![0.0; row.len()]
                } else {
                    row.iter().map(|&c| c as f64 / support as f64).collect()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub micro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Computes the full report. `num_classes` fixes the report width even if
/// some classes never occur.
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    num_classes: usize,
) -> Result<ClassificationReport> {
    let confusion = ConfusionMatrix::from_predictions(y_true, y_pred, num_classes)?;
    let total = confusion.total();
    let correct: usize = (0..num_classes).map(|k| confusion.counts[k][k]).sum();
    let accuracy = ratio(correct, total);

    let mut per_class = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        let tp = confusion.counts[k][k];
        let precision = ratio(tp, confusion.predicted_total(k));
        let recall = ratio(tp, confusion.support(k));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics { precision, recall, f1, support: confusion.support(k) });
    }

    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / num_classes as f64;
    let weighted_f1 = per_class
        .iter()
        .map(|m| m.f1 * m.support as f64)
        .sum::<f64>()
        / total as f64;
    // With one label per item, pooled precision and recall both equal
    // accuracy, so their harmonic mean does too.
    let micro_f1 = accuracy;

    Ok(ClassificationReport { accuracy, macro_f1, weighted_f1, micro_f1, per_class, confusion })
}
