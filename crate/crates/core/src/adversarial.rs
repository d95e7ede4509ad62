//! Gradient-based and random perturbation construction.
//!
//! Contextual perturbations live on the LSTM gate channels (one vector per
//! injection site); feature perturbations live on the raw utterance
//! features. Both come in a white-box first-order flavor, which follows
//! the attack-loss gradient, and a random flavor of the same norm, which
//! serves as the control that separates direction from magnitude.
//!
//! White-box attacks here maximize the classification loss on the true
//! labels. Baselines with no gradient signal at a site leave that site
//! untouched, which is numerically identical to adding a zero vector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::UtteranceBatch;
use crate::error::{Error, Result};
use crate::grad::{LeafRole, Tape};
use crate::model::forward::{build_forward, enumerate_sites, register_leaves, PassMode};
use crate::model::{Model, PerturbationBundle, SiteKey};
use crate::objectives;
use crate::tensor::Tensor;

/// Norm used to scale perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormQ {
    L2,
    LInf,
}

impl NormQ {
    pub fn of(self, t: &Tensor) -> f64 {
        match self {
            NormQ::L2 => t.l2_norm(),
            NormQ::LInf => t.linf_norm(),
        }
    }
}

/// Perturbation that lowers the log-likelihood: `-epsilon * g / |g|_q`,
/// where `g` is the gradient of the log-likelihood with respect to the
/// perturbed quantity. A zero gradient yields a zero perturbation.
pub fn normalized_perturbation(g: &Tensor, epsilon: f64, norm: NormQ) -> Tensor {
    let magnitude = norm.of(g);
    if magnitude == 0.0 || epsilon == 0.0 {
        return Tensor::zeros(g.shape());
    }
    let scale = -epsilon / magnitude;
    let mut out = g.clone();
    out.scale_assign(scale);
    out
}

/// Perturbation that raises a loss: `+epsilon * g / |g|_q` for a loss
/// gradient `g`. Equivalent to [`normalized_perturbation`] of the negated
/// gradient.
pub fn loss_ascent(g_loss: &Tensor, epsilon: f64, norm: NormQ) -> Tensor {
    let mut out = normalized_perturbation(g_loss, epsilon, norm);
    out.scale_assign(-1.0);
    out
}

/// Reads the already-computed gradients at every site leaf of a tape and
/// converts them into loss-ascent perturbations. Sites whose gradient
/// vanishes are omitted, which is numerically identical to a zero vector.
/// Callers must have run a backward pass over the attack loss first.
pub fn bundle_from_tape_sites(
    tape: &Tape,
    epsilon: f64,
    norm: NormQ,
) -> Result<PerturbationBundle> {
    let mut bundle = PerturbationBundle::new();
    if epsilon == 0.0 {
        return Ok(bundle);
    }
    for (name, id) in tape.leaves_with_role(LeafRole::Site) {
        let key = SiteKey::parse(name)
            .ok_or_else(|| Error::Config(format!("unparsable site name '{}'", name)))?;
        if let Some(g) = tape.grad(id) {
            let r = loss_ascent(g, epsilon, norm);
            if r.l2_norm() > 0.0 {
                bundle.insert(key, r);
            }
        }
    }
    Ok(bundle)
}

/// Reads the gradients at the given feature leaves and converts them into
/// per-utterance loss-ascent deltas (zero where no gradient reached).
pub fn deltas_from_tape_features(
    tape: &Tape,
    feature_ids: &[crate::grad::VarId],
    d_u: usize,
    epsilon: f64,
    norm: NormQ,
) -> Vec<Tensor> {
    feature_ids
        .iter()
        .map(|&id| match tape.grad(id) {
            Some(g) if epsilon > 0.0 => loss_ascent(g, epsilon, norm),
            _ => Tensor::zeros(&[d_u]),
        })
        .collect()
}

/// White-box contextual attack: runs a site-tracking forward pass, takes
/// the classification-loss gradient at every injection site, and turns
/// each into a loss-ascent step of size `epsilon` in `norm`.
///
/// With `epsilon = 0` the bundle is empty and applying it reproduces the
/// clean pass bit for bit.
pub fn contextual_attack(
    model: &Model,
    batch: &UtteranceBatch<'_>,
    weights: Option<&[f64]>,
    epsilon: f64,
    norm: NormQ,
) -> Result<PerturbationBundle> {
    if epsilon == 0.0 {
        return Ok(PerturbationBundle::new());
    }
    let mut tape = Tape::new();
    let leaves = register_leaves(&mut tape, model, batch, None)?;
    let nodes = build_forward(&mut tape, &leaves, model, batch, PassMode::TrackSites)?;
    let loss =
        objectives::cross_entropy(&mut tape, &nodes.log_probs, &batch.labels(), weights)?;
    tape.backward(loss)?;
    bundle_from_tape_sites(&tape, epsilon, norm)
}

/// White-box feature attack: one loss-ascent delta per utterance, aligned
/// with the batch's flattened order. Utterances with zero gradient get a
/// zero delta.
pub fn feature_attack(
    model: &Model,
    batch: &UtteranceBatch<'_>,
    weights: Option<&[f64]>,
    epsilon: f64,
    norm: NormQ,
) -> Result<Vec<Tensor>> {
    let d_u = model.config.d_u;
    if epsilon == 0.0 {
        return Ok(vec![Tensor::zeros(&[d_u]); batch.len()]);
    }
    let mut tape = Tape::new();
    let leaves = register_leaves(&mut tape, model, batch, None)?;
    let nodes = build_forward(&mut tape, &leaves, model, batch, PassMode::Clean)?;
    let loss =
        objectives::cross_entropy(&mut tape, &nodes.log_probs, &batch.labels(), weights)?;
    tape.backward(loss)?;
    Ok(deltas_from_tape_features(&tape, &leaves.features, d_u, epsilon, norm))
}

fn gaussian_direction(dim: usize, epsilon: f64, rng: &mut ChaCha8Rng) -> Tensor {
    loop {
        let mut v: Vec<f64> = Vec::with_capacity(dim);
        for _ in 0..dim {
            v.push(StandardNormal.sample(rng));
        }
        let t = Tensor::from_vec(v);
        let n = t.l2_norm();
        if n > 0.0 {
            let mut out = t;
            out.scale_assign(epsilon / n);
            return out;
        }
    }
}

/// Random contextual baseline: an isotropic Gaussian draw at every
/// injection site, rescaled to L2 norm `epsilon`. Shares its key set with
/// the white-box attack's site enumeration.
pub fn random_contextual(
    model: &Model,
    batch: &UtteranceBatch<'_>,
    epsilon: f64,
    seed: u64,
) -> PerturbationBundle {
    let mut bundle = PerturbationBundle::new();
    if epsilon == 0.0 {
        return bundle;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_h = model.config.d_h;
    for key in enumerate_sites(model, batch) {
        bundle.insert(key, gaussian_direction(d_h, epsilon, &mut rng));
    }
    bundle
}

/// Random feature baseline: one Gaussian delta of L2 norm `epsilon` per
/// utterance.
pub fn random_features(
    d_u: usize,
    count: usize,
    epsilon: f64,
    seed: u64,
) -> Vec<Tensor> {
    if epsilon == 0.0 {
        return vec![Tensor::zeros(&[d_u]); count];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| gaussian_direction(d_u, epsilon, &mut rng)).collect()
}
