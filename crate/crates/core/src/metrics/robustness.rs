//! Robustness curves: classification quality as a function of attack
//! budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub epsilon: f64,
    pub accuracy: f64,
    pub weighted_f1: f64,
}

/// Accuracy and weighted F1 sampled over an increasing attack budget grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub points: Vec<RobustnessPoint>,
}

impl RobustnessCurve {
    pub fn new(points: Vec<RobustnessPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("a robustness curve needs at least one point".to_string()));
        }
        for pair in points.windows(2) {
            if pair[1].epsilon <= pair[0].epsilon {
                return Err(Error::Data(format!(
                    "attack budgets must strictly increase, got {} then {}",
                    pair[0].epsilon, pair[1].epsilon
                )));
            }
        }
        Ok(Self { points })
    }

    /// Accuracy lost at the given budget relative to the curve's first
    /// point (conventionally the clean evaluation at budget zero).
    pub fn accuracy_drop(&self, epsilon: f64) -> Option<f64> {
        let base = self.points[0].accuracy;
        self.points
            .iter()
            .find(|p| p.epsilon == epsilon)
            .map(|p| base - p.accuracy)
    }

    /// Trapezoidal area under the accuracy curve, normalized by the
    /// budget range so the result stays in [0, 1]. For a single point
    /// this is just that accuracy.
    pub fn accuracy_area(&self) -> f64 {
        if self.points.len() == 1 {
            return self.points[0].accuracy;
        }
        let mut area = 0.0;
        for pair in self.points.windows(2) {
            let width = pair[1].epsilon - pair[0].epsilon;
            area += 0.5 * (pair[0].accuracy + pair[1].accuracy) * width;
        }
        let range = self.points.last().unwrap().epsilon - self.points[0].epsilon;
        area / range
    }

    /// Number of grid steps where accuracy strictly rises as the budget
    /// grows beyond the tolerance. A faithful attack should weakly
    /// degrade the model as its budget increases.
    pub fn monotonicity_violations(&self, tol: f64) -> usize {
        self.points
            .windows(2)
            .filter(|pair| pair[1].accuracy > pair[0].accuracy + tol)
            .count()
    }

    /// True when `self` is at least as accurate as `other` at every
    /// shared budget above zero.
    pub fn dominates_under_attack(&self, other: &RobustnessCurve) -> bool {
        for p in &self.points {
            if p.epsilon <= 0.0 {
                continue;
            }
            if let Some(q) = other.points.iter().find(|q| q.epsilon == p.epsilon) {
                if p.accuracy < q.accuracy {
                    return false;
                }
            }
        }
        true
    }
}
