//! Training objectives.
//!
//! All losses are built as graph nodes on a [`Tape`] so gradients flow to
//! whatever produced the inputs (model parameters, injection sites, or
//! feature deltas). Every loss returns a raw sum over the batch; callers
//! normalize by utterance count where their update rule requires it.
//!
//! The contrastive losses treat every other utterance in the batch as a
//! candidate, across conversation boundaries, and an anchor whose class
//! appears nowhere else in the batch contributes zero.

use crate::error::{Error, Result};
use crate::grad::{Tape, VarId};
use crate::tensor::Tensor;

/// Which classification term a combined objective uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CeVariant {
    CrossEntropy,
    Focal { gamma: f64 },
}

fn check_lengths(what: &str, n_outputs: usize, n_labels: usize) -> Result<()> {
    if n_outputs != n_labels {
        return Err(Error::ShapeMismatch {
            op: "objective",
            detail: format!("{}: {} outputs for {} labels", what, n_outputs, n_labels),
        });
    }
    Ok(())
}

fn class_weight(weights: Option<&[f64]>, label: usize) -> Result<f64> {
    match weights {
        None => Ok(1.0),
        Some(w) => w.get(label).copied().ok_or_else(|| {
            Error::Config(format!("label {} outside the {} class weights", label, w.len()))
        }),
    }
}

/// Picks `log_probs[label]` as a `[1]` node.
fn pick(tape: &mut Tape, log_probs: VarId, label: usize) -> Result<VarId> {
    let n = tape.value(log_probs).numel();
    if label >= n {
        return Err(Error::Config(format!("label {} outside {} classes", label, n)));
    }
    tape.slice(log_probs, label, 1)
}

/// Weighted cross entropy, summed over the batch:
/// `-sum_i w(y_i) * log p_i[y_i]`.
pub fn cross_entropy(
    tape: &mut Tape,
    log_probs: &[VarId],
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<VarId> {
    check_lengths("cross entropy", log_probs.len(), labels.len())?;
    let mut terms = Vec::with_capacity(labels.len());
    for (&lp, &y) in log_probs.iter().zip(labels) {
        let picked = pick(tape, lp, y)?;
        let w = class_weight(weights, y)?;
        terms.push(tape.affine(picked, -w, 0.0)?);
    }
    let all = tape.concat(&terms)?;
    tape.sum(all)
}

/// Focal loss, summed over the batch:
/// `-sum_i w(y_i) * (1 - p_i[y_i])^gamma * log p_i[y_i]`.
///
/// At `gamma = 0` the modulating factor is constant 1 and both the value
/// and the gradient coincide with [`cross_entropy`].
pub fn focal(
    tape: &mut Tape,
    log_probs: &[VarId],
    labels: &[usize],
    gamma: f64,
    weights: Option<&[f64]>,
) -> Result<VarId> {
    check_lengths("focal", log_probs.len(), labels.len())?;
    if gamma < 0.0 {
        return Err(Error::Config(format!("focal gamma must be non-negative, got {}", gamma)));
    }
    let mut terms = Vec::with_capacity(labels.len());
    for (&lp, &y) in log_probs.iter().zip(labels) {
        let picked = pick(tape, lp, y)?;
        let p = tape.exp(picked)?;
        let one_minus_p = tape.affine(p, -1.0, 1.0)?;
        let modulator = tape.powf(one_minus_p, gamma)?;
        let prod = tape.hadamard(modulator, picked)?;
        let w = class_weight(weights, y)?;
        terms.push(tape.affine(prod, -w, 0.0)?);
    }
    let all = tape.concat(&terms)?;
    tape.sum(all)
}

/// Supervised contrastive loss over raw dot-product similarities.
///
/// For each anchor `i`, candidates are every other batch element and
/// positives are the candidates sharing the anchor's label:
///
/// ```text
/// L_i = -(1/|P(i)|) * sum_{p in P(i)} log softmax_{a != i}(s_ia / tau)[p]
/// ```
///
/// Anchors with no positives contribute zero. The result is the sum over
/// anchors.
pub fn scl(tape: &mut Tape, z: &[VarId], labels: &[usize], tau: f64) -> Result<VarId> {
    check_lengths("contrastive", z.len(), labels.len())?;
    if tau <= 0.0 {
        return Err(Error::Config(format!("temperature must be positive, got {}", tau)));
    }
    let n = z.len();
    if n < 2 {
        return tape.constant(Tensor::scalar(0.0));
    }
    let d = tape.value(z[0]).numel();
    let flat = tape.concat(z)?;
    let matrix = tape.reshape(flat, &[n, d])?;
    let sims = tape.matmul_nt(matrix, matrix)?;
    let scaled = tape.scale(sims, 1.0 / tau)?;
    let sims_flat = tape.reshape(scaled, &[n * n])?;

    let mut anchor_terms = Vec::new();
    for i in 0..n {
        let positives: Vec<usize> =
            (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        // Row i without the self-similarity entry.
        let mut parts = Vec::new();
        if i > 0 {
            parts.push(tape.slice(sims_flat, i * n, i)?);
        }
        if i + 1 < n {
            parts.push(tape.slice(sims_flat, i * n + i + 1, n - 1 - i)?);
        }
        let others = tape.concat(&parts)?;
        let row_log_probs = tape.log_softmax(others)?;
        let mut picked = Vec::with_capacity(positives.len());
        for p in positives.iter() {
            let idx = if *p < i { *p } else { *p - 1 };
            picked.push(tape.slice(row_log_probs, idx, 1)?);
        }
        let pos_all = tape.concat(&picked)?;
        let pos_sum = tape.sum(pos_all)?;
        anchor_terms.push(tape.affine(pos_sum, -1.0 / positives.len() as f64, 0.0)?);
    }
    if anchor_terms.is_empty() {
        return tape.constant(Tensor::scalar(0.0));
    }
    let all = tape.concat(&anchor_terms)?;
    tape.sum(all)
}

/// L2-normalizes a vector node, guarding the zero vector.
fn l2_normalize(tape: &mut Tape, v: VarId) -> Result<VarId> {
    let sq = tape.hadamard(v, v)?;
    let total = tape.sum(sq)?;
    // The tiny offset keeps the gradient finite at the origin and is far
    // below f64 noise for any vector of practical magnitude.
    let shifted = tape.affine(total, 1.0, 1e-24)?;
    let norm = tape.powf(shifted, 0.5)?;
    let inv = tape.powf(norm, -1.0)?;
    tape.scale_var(v, inv)
}

/// [`scl`] on L2-normalized representations (cosine similarities).
pub fn sup_con(tape: &mut Tape, z: &[VarId], labels: &[usize], tau: f64) -> Result<VarId> {
    let normalized: Vec<VarId> =
        z.iter().map(|&v| l2_normalize(tape, v)).collect::<Result<_>>()?;
    scl(tape, &normalized, labels, tau)
}

/// Classification term plus `lambda` times the contrastive term.
///
/// With `lambda = 0` the contrastive graph is skipped entirely and the
/// returned node is the classification term itself.
#[allow(clippy::too_many_arguments)]
pub fn soft_scl(
    tape: &mut Tape,
    log_probs: &[VarId],
    z: &[VarId],
    labels: &[usize],
    variant: CeVariant,
    lambda: f64,
    tau: f64,
    weights: Option<&[f64]>,
) -> Result<VarId> {
    if lambda < 0.0 {
        return Err(Error::Config(format!("lambda must be non-negative, got {}", lambda)));
    }
    let ce_term = match variant {
        CeVariant::CrossEntropy => cross_entropy(tape, log_probs, labels, weights)?,
        CeVariant::Focal { gamma } => focal(tape, log_probs, labels, gamma, weights)?,
    };
    if lambda == 0.0 {
        return Ok(ce_term);
    }
    let scl_term = scl(tape, z, labels, tau)?;
    let scaled = tape.scale(scl_term, lambda)?;
    tape.add(ce_term, scaled)
}

/// Cross entropy at value level, for evaluation loops.
pub fn cross_entropy_value(
    log_probs: &[Tensor],
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_lengths("cross entropy", log_probs.len(), labels.len())?;
    let mut total = 0.0;
    for (lp, &y) in log_probs.iter().zip(labels) {
        let row = lp.data();
        if y >= row.len() {
            return Err(Error::Config(format!("label {} outside {} classes", y, row.len())));
        }
        total -= class_weight(weights, y)? * row[y];
    }
    Ok(total)
}

/// Contrastive loss at value level, for reporting.
pub fn scl_value(z: &[Tensor], labels: &[usize], tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let ids: Vec<VarId> = z
        .iter()
        .enumerate()
        .map(|(i, t)| tape.input(&format!("z.{}", i), t.clone()))
        .collect::<Result<_>>()?;
    let loss = scl(&mut tape, &ids, labels, tau)?;
    tape.value(loss).scalar_value()
}
