//! Central finite-difference verification of analytic gradients.
//!
//! The checker re-evaluates a scalar function with each coordinate of each
//! named tensor displaced by `+-step` and compares the centered difference
//! quotient against the supplied analytic gradient. It is the independent
//! oracle behind every gradient claim in this crate: the tape in
//! [`crate::grad`] never verifies itself.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grad::GradientMap;
use crate::tensor::Tensor;

/// A point in the space of named tensors.
pub type Point = BTreeMap<String, Tensor>;

/// Step size and tolerances for [`finite_diff_check`].
#[derive(Debug, Clone)]
pub struct FdConfig {
    /// Displacement used for the centered difference.
    pub step: f64,
    /// Largest accepted relative error.
    pub rel_tol: f64,
    /// Coordinates where both analytic and numeric magnitudes stay below
    /// this floor count as agreeing; a centered difference of a well-scaled
    /// function carries roundoff of roughly `|f| * 1e-15 / step`, so tiny
    /// true gradients would otherwise drown in noise.
    pub abs_guard: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { step: 1e-5, rel_tol: 1e-4, abs_guard: 1e-6 }
    }
}

/// Coordinate with the largest relative error.
#[derive(Debug, Clone)]
pub struct FdWorst {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst: Option<FdWorst>,
    pub pass: bool,
}

/// Sweeps every coordinate of `point`, comparing `analytic` to centered
/// differences of `f`.
///
/// `analytic` must contain a gradient for each name in `point` (an all-zeros
/// tensor for variables the function ignores). `f` must return a finite
/// value at every probed displacement, otherwise the sweep aborts.
pub fn finite_diff_check<F>(
    mut f: F,
    point: &Point,
    analytic: &GradientMap,
    cfg: &FdConfig,
) -> Result<FdReport>
where
    F: FnMut(&Point) -> Result<f64>,
{
    let mut work = point.clone();
    let mut max_rel_err = 0.0f64;
    let mut worst = None;
    let mut coords_checked = 0;

    for (name, tensor) in point {
        let grad = analytic
            .get(name)
            .ok_or_else(|| Error::UnknownVariable(format!("{} (missing in analytic map)", name)))?;
        if grad.shape() != tensor.shape() {
            return Err(Error::ShapeMismatch {
                op: "finite_diff_check",
                detail: format!(
                    "gradient of `{}` has shape {:?}, variable has {:?}",
                    name,
                    grad.shape(),
                    tensor.shape()
                ),
            });
        }
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];

            work.get_mut(name).unwrap().data_mut()[i] = orig + cfg.step;
            let plus = f(&work)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig - cfg.step;
            let minus = f(&work)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("finite_diff_check probe of `{}`[{}]", name, i),
                });
            }

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = grad.data()[i];
            let scale = a.abs().max(numeric.abs());
            let rel = if scale <= cfg.abs_guard { 0.0 } else { (a - numeric).abs() / scale };
            coords_checked += 1;
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some(FdWorst {
                    name: name.clone(),
                    index: i,
                    analytic: a,
                    numeric,
                    rel_err: rel,
                });
            }
        }
    }

    Ok(FdReport { max_rel_err, coords_checked, worst, pass: max_rel_err <= cfg.rel_tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_tightly() {
        let mut point = Point::new();
        point.insert("x".to_string(), Tensor::from_vec(vec![1.3, -0.4]));
        let mut analytic = GradientMap::new();
        analytic.insert("x".to_string(), Tensor::from_vec(vec![2.0 * 1.3, 2.0 * -0.4]));
        let report = finite_diff_check(
            |p| Ok(p["x"].data().iter().map(|v| v * v).sum()),
            &point,
            &analytic,
            &FdConfig::default(),
        )
        .unwrap();
        assert!(report.pass);
        assert!(report.max_rel_err < 1e-8, "err {:.3e}", report.max_rel_err);
        assert_eq!(report.coords_checked, 2);
    }

    #[test]
    fn kink_with_wrong_subgradient_is_flagged() {
        // |x| at the origin: the centered difference is 0, so a claimed
        // subgradient of 1 must fail the check.
        let mut point = Point::new();
        point.insert("x".to_string(), Tensor::scalar(0.0));
        let mut analytic = GradientMap::new();
        analytic.insert("x".to_string(), Tensor::scalar(1.0));
        let report = finite_diff_check(
            |p| Ok(p["x"].data()[0].abs()),
            &point,
            &analytic,
            &FdConfig::default(),
        )
        .unwrap();
        assert!(!report.pass);
        let worst = report.worst.unwrap();
        assert_eq!(worst.name, "x");
        assert!(worst.rel_err > 0.9);
    }

    #[test]
    fn ignored_variable_with_zero_gradient_passes() {
        let mut point = Point::new();
        point.insert("x".to_string(), Tensor::scalar(2.0));
        point.insert("unused".to_string(), Tensor::from_vec(vec![5.0, 6.0]));
        let mut analytic = GradientMap::new();
        analytic.insert("x".to_string(), Tensor::scalar(3.0));
        analytic.insert("unused".to_string(), Tensor::zeros(&[2]));
        let report = finite_diff_check(
            |p| Ok(3.0 * p["x"].data()[0]),
            &point,
            &analytic,
            &FdConfig::default(),
        )
        .unwrap();
        assert!(report.pass);
    }

    #[test]
    fn missing_analytic_entry_is_an_error() {
        let mut point = Point::new();
        point.insert("x".to_string(), Tensor::scalar(1.0));
        let analytic = GradientMap::new();
        let out = finite_diff_check(|_| Ok(0.0), &point, &analytic, &FdConfig::default());
        assert!(matches!(out, Err(Error::UnknownVariable(_))));
    }
}
