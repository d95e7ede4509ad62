//! Graph construction for the Dual-LSTM and MLP forward passes.
//!
//! Training builds one tape per micro-batch and may run two passes on it (a
//! clean pass plus an adversarial pass), so leaf registration is split from
//! graph building: [`register_leaves`] records parameters, features, and
//! dropout masks once, and [`build_forward`] can then be called repeatedly
//! with different [`PassMode`]s, sharing those leaves. Gradients from both
//! passes accumulate into the shared parameter leaves automatically.
//!
//! Dropout uses explicit mask tensors drawn once per step, so the clean and
//! adversarial passes of a step see the same stochastic subnetwork. At
//! evaluation time no masks are supplied and the passes are deterministic.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    Channel, Direction, LstmCellParams, Model, ModelParams, NetKind, PerturbationBundle, SiteKey,
};
use crate::data::{Conversation, UtteranceBatch};
use crate::error::{Error, Result};
use crate::grad::{Tape, VarId};
use crate::tensor::Tensor;

/// How a forward pass treats perturbations.
#[derive(Clone, Copy)]
pub enum PassMode<'a> {
    /// No injection sites at all.
    Clean,
    /// Register every site as a zero-valued leaf, exposing site gradients.
    TrackSites,
    /// Add the bundle's values at their sites as constants.
    WithSites(&'a PerturbationBundle),
    /// Add a per-utterance delta to the input features (indexed by the
    /// flattened utterance index) before dropout.
    WithFeatureDelta(&'a [Tensor]),
}

/// Dropout masks for one training step, in inverted-dropout form (entries
/// are 0 or `1/(1-rate)`).
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    /// Per flattened utterance, over the `d_u` input features.
    pub features: Vec<Tensor>,
    /// Per network, per layer beyond the first, per flattened utterance,
    /// over the `2*d_h` hidden inputs. Empty for single-layer stacks and
    /// for the MLP.
    pub hidden: [Vec<Vec<Tensor>>; 2],
    /// Per flattened utterance, over the `4*d_h` pre-classifier
    /// representation.
    pub z: Vec<Tensor>,
}

fn sample_mask(rng: &mut ChaCha8Rng, dim: usize, rate: f64) -> Tensor {
    let keep = 1.0 - rate;
    Tensor::from_vec(
        (0..dim)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
            .collect(),
    )
}

impl DropoutMasks {
    /// Draws masks for `n_utts` utterances. The draw order (features, then
    /// per-network hidden layers, then z) is part of the seed contract.
    pub fn sample(model: &Model, n_utts: usize, rng: &mut ChaCha8Rng) -> Self {
        let cfg = &model.config;
        let rate = cfg.dropout;
        let features = (0..n_utts).map(|_| sample_mask(rng, cfg.d_u, rate)).collect();
        let mut hidden: [Vec<Vec<Tensor>>; 2] = [Vec::new(), Vec::new()];
        if matches!(model.params, ModelParams::DualLstm(_)) {
            for net_masks in &mut hidden {
                for _ in 1..cfg.num_lstm_layers {
                    net_masks
                        .push((0..n_utts).map(|_| sample_mask(rng, 2 * cfg.d_h, rate)).collect());
                }
            }
        }
        let z = (0..n_utts).map(|_| sample_mask(rng, cfg.z_dim(), rate)).collect();
        Self { features, hidden, z }
    }
}

/// Leaf ids registered on a tape by [`register_leaves`].
pub struct Leaves {
    pub params: BTreeMap<String, VarId>,
    /// Per flattened utterance.
    pub features: Vec<VarId>,
    mask_features: Vec<VarId>,
    mask_hidden: [Vec<Vec<VarId>>; 2],
    mask_z: Vec<VarId>,
    /// Shared all-zeros `[d_h]` initial state (Dual-LSTM only).
    zero_state: Option<VarId>,
}

/// Registers parameters, input features, and optional dropout masks.
pub fn register_leaves(
    tape: &mut Tape,
    model: &Model,
    batch: &UtteranceBatch<'_>,
    masks: Option<&DropoutMasks>,
) -> Result<Leaves> {
    let mut params = BTreeMap::new();
    for (name, tensor) in model.named_params() {
        params.insert(name.clone(), tape.param(&name, tensor.clone())?);
    }
    let mut features = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let u = batch.utterance(i);
        if u.features.shape() != [model.config.d_u] {
            return Err(Error::ShapeMismatch {
                op: "register_leaves",
                detail: format!(
                    "utterance {} features {:?}, model expects [{}]",
                    i,
                    u.features.shape(),
                    model.config.d_u
                ),
            });
        }
        features.push(tape.input(&format!("x.{}", i), u.features.clone())?);
    }
    let (mut mask_features, mut mask_hidden, mut mask_z) =
        (Vec::new(), [Vec::new(), Vec::new()], Vec::new());
    if let Some(m) = masks {
        for (i, t) in m.features.iter().enumerate() {
            mask_features.push(tape.input(&format!("mask.x.{}", i), t.clone())?);
        }
        for (ni, net_masks) in m.hidden.iter().enumerate() {
            for (l, layer_masks) in net_masks.iter().enumerate() {
                let mut ids = Vec::new();
                for (i, t) in layer_masks.iter().enumerate() {
                    ids.push(tape.input(&format!("mask.h{}.l{}.{}", ni, l + 1, i), t.clone())?);
                }
                mask_hidden[ni].push(ids);
            }
        }
        for (i, t) in m.z.iter().enumerate() {
            mask_z.push(tape.input(&format!("mask.z.{}", i), t.clone())?);
        }
    }
    let zero_state = match model.params {
        ModelParams::DualLstm(_) => Some(tape.constant(Tensor::zeros(&[model.config.d_h]))?),
        ModelParams::Mlp(_) => None,
    };
    Ok(Leaves { params, features, mask_features, mask_hidden, mask_z, zero_state })
}

/// Per-utterance node ids produced by a forward pass, in flattened order.
pub struct ForwardNodes {
    /// Utterance representations (`[4*d_h]` each), before classifier dropout.
    pub z: Vec<VarId>,
    /// Log class probabilities (`[num_classes]` each).
    pub log_probs: Vec<VarId>,
}

struct CellIds {
    w_ih: VarId,
    w_hh: VarId,
    b: VarId,
}

fn cell_ids(leaves: &Leaves, net: NetKind, layer: usize, dir: Direction) -> Result<CellIds> {
    let prefix = format!("{}.l{}.{}", net.tag(), layer, dir.tag());
    let fetch = |suffix: &str| -> Result<VarId> {
        leaves
            .params
            .get(&format!("{}.{}", prefix, suffix))
            .copied()
            .ok_or_else(|| Error::UnknownVariable(format!("{}.{}", prefix, suffix)))
    };
    Ok(CellIds { w_ih: fetch("w_ih")?, w_hh: fetch("w_hh")?, b: fetch("b")? })
}

/// One LSTM cell step on the tape. `channel_hook` may wrap each channel's
/// pre-activation (this is where injection sites attach).
fn cell_step(
    tape: &mut Tape,
    cell: &CellIds,
    x: VarId,
    h: VarId,
    c: VarId,
    d_h: usize,
    channel_hook: &mut dyn FnMut(&mut Tape, Channel, VarId) -> Result<VarId>,
) -> Result<(VarId, VarId)> {
    let wx = tape.matmul(cell.w_ih, x)?;
    let uh = tape.matmul(cell.w_hh, h)?;
    let lin = tape.add(wx, uh)?;
    let pre = tape.add(lin, cell.b)?;
    let mut acts = [pre; 4];
    for ch in Channel::ALL {
        let a = tape.slice(pre, ch.index() * d_h, d_h)?;
        acts[ch.index()] = channel_hook(tape, ch, a)?;
    }
    let i = tape.sigmoid(acts[Channel::InputGate.index()])?;
    let f = tape.sigmoid(acts[Channel::ForgetGate.index()])?;
    let g = tape.tanh(acts[Channel::CellCandidate.index()])?;
    let o = tape.sigmoid(acts[Channel::OutputGate.index()])?;
    let fc = tape.hadamard(f, c)?;
    let ig = tape.hadamard(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.hadamard(o, tc)?;
    Ok((h_next, c_next))
}

fn apply_site(
    tape: &mut Tape,
    a: VarId,
    key: SiteKey,
    mode: PassMode<'_>,
    d_h: usize,
    applied: &mut usize,
) -> Result<VarId> {
    match mode {
        PassMode::Clean | PassMode::WithFeatureDelta(_) => Ok(a),
        PassMode::TrackSites => {
            let s = tape.site(&key.name(), Tensor::zeros(&[d_h]))?;
            tape.add(a, s)
        }
        PassMode::WithSites(bundle) => match bundle.get(&key) {
            Some(v) => {
                *applied += 1;
                let c = tape.constant(v.clone())?;
                tape.add(a, c)
            }
            None => Ok(a),
        },
    }
}

/// Runs one direction of one layer over a subsequence. `seq` pairs each
/// step's input node with the flattened utterance index it consumes.
#[allow(clippy::too_many_arguments)]
fn run_direction(
    tape: &mut Tape,
    leaves: &Leaves,
    cell: &CellIds,
    seq: &[(usize, VarId)],
    net: NetKind,
    layer: usize,
    dir: Direction,
    d_h: usize,
    mode: PassMode<'_>,
    applied: &mut usize,
) -> Result<Vec<VarId>> {
    let zero = leaves.zero_state.expect("LSTM run requires the zero-state leaf");
    let mut h = zero;
    let mut c = zero;
    let mut out = Vec::with_capacity(seq.len());
    let order: Vec<&(usize, VarId)> = match dir {
        Direction::Forward => seq.iter().collect(),
        Direction::Backward => seq.iter().rev().collect(),
    };
    for (flat, x) in order {
        let mut hook = |tape: &mut Tape, ch: Channel, a: VarId| {
            let key =
                SiteKey { net, layer, direction: dir, utterance: *flat, channel: ch };
            apply_site(tape, a, key, mode, d_h, applied)
        };
        let (h2, c2) = cell_step(tape, cell, *x, h, c, d_h, &mut hook)?;
        h = h2;
        c = c2;
        out.push(h2);
    }
    if dir == Direction::Backward {
        out.reverse();
    }
    Ok(out)
}

/// Runs a full BiLSTM stack over a subsequence, returning one `[2*d_h]`
/// node per position.
#[allow(clippy::too_many_arguments)]
fn run_stack(
    tape: &mut Tape,
    leaves: &Leaves,
    model: &Model,
    net: NetKind,
    seq: &[(usize, VarId)],
    mode: PassMode<'_>,
    applied: &mut usize,
) -> Result<Vec<VarId>> {
    let d_h = model.config.d_h;
    let net_idx = match net {
        NetKind::Situation => 0,
        NetKind::Speaker => 1,
    };
    let mut current: Vec<(usize, VarId)> = seq.to_vec();
    for layer in 0..model.config.num_lstm_layers {
        if layer > 0 {
            if let Some(layer_masks) = leaves.mask_hidden[net_idx].get(layer - 1) {
                for (flat, x) in &mut current {
                    *x = tape.hadamard(*x, layer_masks[*flat])?;
                }
            }
        }
        let fwd_cell = cell_ids(leaves, net, layer, Direction::Forward)?;
        let bwd_cell = cell_ids(leaves, net, layer, Direction::Backward)?;
        let fwd = run_direction(
            tape, leaves, &fwd_cell, &current, net, layer, Direction::Forward, d_h, mode, applied,
        )?;
        let bwd = run_direction(
            tape, leaves, &bwd_cell, &current, net, layer, Direction::Backward, d_h, mode, applied,
        )?;
        for (pos, (flat, x)) in current.iter_mut().enumerate() {
            let _ = flat;
            *x = tape.concat(&[fwd[pos], bwd[pos]])?;
        }
    }
    Ok(current.into_iter().map(|(_, x)| x).collect())
}

/// Builds the forward pass for a whole micro-batch on an existing tape.
pub fn build_forward(
    tape: &mut Tape,
    leaves: &Leaves,
    model: &Model,
    batch: &UtteranceBatch<'_>,
    mode: PassMode<'_>,
) -> Result<ForwardNodes> {
    let cfg = &model.config;
    let mut applied = 0usize;

    // Layer-0 inputs: feature leaves, plus the adversarial feature delta and
    // the input dropout mask where present.
    let mut inputs = Vec::with_capacity(batch.len());
    for (i, &x) in leaves.features.iter().enumerate() {
        let mut node = x;
        if let PassMode::WithFeatureDelta(deltas) = mode {
            if deltas.len() != batch.len() {
                return Err(Error::ShapeMismatch {
                    op: "build_forward",
                    detail: format!("{} feature deltas for {} utterances", deltas.len(), batch.len()),
                });
            }
            let d = tape.constant(deltas[i].clone())?;
            node = tape.add(node, d)?;
        }
        if let Some(&m) = leaves.mask_features.get(i) {
            node = tape.hadamard(node, m)?;
        }
        inputs.push(node);
    }

    let mut z_nodes: Vec<Option<VarId>> = vec![None; batch.len()];
    match &model.params {
        ModelParams::DualLstm(_) => {
            let o_id = leaves.params["o"];
            for (ci, conv) in batch.conversations.iter().enumerate() {
                let base = batch.flat_index(ci, 0);
                let seq: Vec<(usize, VarId)> =
                    (0..conv.len()).map(|pos| (base + pos, inputs[base + pos])).collect();

                let situation =
                    run_stack(tape, leaves, model, NetKind::Situation, &seq, mode, &mut applied)?;

                let mut speaker: Vec<Option<VarId>> = vec![None; conv.len()];
                for (_, positions) in conv.speaker_positions() {
                    if positions.len() < cfg.xi {
                        for &pos in &positions {
                            speaker[pos] = Some(o_id);
                        }
                    } else {
                        let sub: Vec<(usize, VarId)> =
                            positions.iter().map(|&pos| (base + pos, inputs[base + pos])).collect();
                        let feats = run_stack(
                            tape,
                            leaves,
                            model,
                            NetKind::Speaker,
                            &sub,
                            mode,
                            &mut applied,
                        )?;
                        for (j, &pos) in positions.iter().enumerate() {
                            speaker[pos] = Some(feats[j]);
                        }
                    }
                }

                for pos in 0..conv.len() {
                    let sp = speaker[pos].expect("every utterance has a speaker branch");
                    z_nodes[base + pos] = Some(tape.concat(&[situation[pos], sp])?);
                }
            }
        }
        ModelParams::Mlp(_) => {
            let w_h = leaves.params["mlp.w_h"];
            let b_h = leaves.params["mlp.b_h"];
            for (i, &x) in inputs.iter().enumerate() {
                let lin = tape.matmul(w_h, x)?;
                let pre = tape.add(lin, b_h)?;
                z_nodes[i] = Some(tape.tanh(pre)?);
            }
        }
    }

    if let PassMode::WithSites(bundle) = mode {
        if applied != bundle.len() {
            return Err(Error::Config(format!(
                "perturbation bundle has {} sites but only {} exist in this graph",
                bundle.len(),
                applied
            )));
        }
    }

    let w_c = leaves.params["w_c"];
    let b_c = leaves.params["b_c"];
    let mut z_out = Vec::with_capacity(batch.len());
    let mut log_probs = Vec::with_capacity(batch.len());
    for (i, z) in z_nodes.into_iter().enumerate() {
        let z = z.expect("all utterances encoded");
        let mut zc = z;
        if let Some(&m) = leaves.mask_z.get(i) {
            zc = tape.hadamard(zc, m)?;
        }
        let lin = tape.matmul(w_c, zc)?;
        let logits = tape.add(lin, b_c)?;
        log_probs.push(tape.log_softmax(logits)?);
        z_out.push(z);
    }
    Ok(ForwardNodes { z: z_out, log_probs })
}

/// All injection sites a [`PassMode::TrackSites`] pass would register for
/// this batch, sorted. The random-perturbation baseline draws its bundle
/// over exactly this set, and the contextual attack's bundle keys are a
/// (gradient-supported) copy of it.
pub fn enumerate_sites(model: &Model, batch: &UtteranceBatch<'_>) -> Vec<SiteKey> {
    let cfg = &model.config;
    let mut keys = Vec::new();
    if !matches!(model.params, ModelParams::DualLstm(_)) {
        return keys;
    }
    for (ci, conv) in batch.conversations.iter().enumerate() {
        let base = batch.flat_index(ci, 0);
        for layer in 0..cfg.num_lstm_layers {
            for direction in Direction::BOTH {
                for pos in 0..conv.len() {
                    for channel in Channel::ALL {
                        keys.push(SiteKey {
                            net: NetKind::Situation,
                            layer,
                            direction,
                            utterance: base + pos,
                            channel,
                        });
                    }
                }
                for (_, positions) in conv.speaker_positions() {
                    if positions.len() >= cfg.xi {
                        for &pos in &positions {
                            for channel in Channel::ALL {
                                keys.push(SiteKey {
                                    net: NetKind::Speaker,
                                    layer,
                                    direction,
                                    utterance: base + pos,
                                    channel,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    keys.sort_unstable();
    keys
}

/// Evaluation-mode forward pass: values, probabilities, and predictions.
pub struct InferOutput {
    /// Utterance representations, `[4*d_h]` each.
    pub z: Vec<Tensor>,
    pub log_probs: Vec<Tensor>,
    pub probs: Vec<Tensor>,
    /// Argmax class per utterance; ties resolve to the lowest index.
    pub predictions: Vec<usize>,
}

/// Runs the model on a batch without dropout, optionally with a
/// perturbation bundle applied.
pub fn infer(
    model: &Model,
    batch: &UtteranceBatch<'_>,
    bundle: Option<&PerturbationBundle>,
) -> Result<InferOutput> {
    let mode = match bundle {
        Some(b) => PassMode::WithSites(b),
        None => PassMode::Clean,
    };
    infer_with(model, batch, mode)
}

/// Like [`infer`] but with an arbitrary pass mode, so callers can also
/// evaluate under feature deltas.
pub fn infer_with(
    model: &Model,
    batch: &UtteranceBatch<'_>,
    mode: PassMode<'_>,
) -> Result<InferOutput> {
    let mut tape = Tape::new();
    let leaves = register_leaves(&mut tape, model, batch, None)?;
    let nodes = build_forward(&mut tape, &leaves, model, batch, mode)?;
    let z = nodes.z.iter().map(|&id| tape.value(id).clone()).collect();
    let log_probs: Vec<Tensor> =
        nodes.log_probs.iter().map(|&id| tape.value(id).clone()).collect();
    let probs: Vec<Tensor> = log_probs
        .iter()
        .map(|lp| Tensor::from_vec(lp.data().iter().map(|v| v.exp()).collect()))
        .collect();
    let predictions = probs.iter().map(|p| argmax(p.data())).collect();
    Ok(InferOutput { z, log_probs, probs, predictions })
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Single LSTM cell step at value level, with optional per-channel additive
/// perturbations. Returns `(h', c')`.
pub fn lstm_cell_step(
    params: &LstmCellParams,
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    perturb: Option<&BTreeMap<Channel, Tensor>>,
) -> Result<(Tensor, Tensor)> {
    let d_h = h.numel();
    let mut tape = Tape::new();
    let cell = CellIds {
        w_ih: tape.param("w_ih", params.w_ih.clone())?,
        w_hh: tape.param("w_hh", params.w_hh.clone())?,
        b: tape.param("b", params.b.clone())?,
    };
    let x = tape.input("x", x.clone())?;
    let h = tape.input("h", h.clone())?;
    let c = tape.input("c", c.clone())?;
    let mut hook = |tape: &mut Tape, ch: Channel, a: VarId| -> Result<VarId> {
        match perturb.and_then(|p| p.get(&ch)) {
            Some(v) => {
                let id = tape.constant(v.clone())?;
                tape.add(a, id)
            }
            None => Ok(a),
        }
    };
    let (h2, c2) = cell_step(&mut tape, &cell, x, h, c, d_h, &mut hook)?;
    Ok((tape.value(h2).clone(), tape.value(c2).clone()))
}

/// Situation-aware features of one conversation (`[2*d_h]` per utterance),
/// evaluation mode.
pub fn situation_features(model: &Model, conv: &Conversation) -> Result<Vec<Tensor>> {
    stack_features(model, conv, NetKind::Situation)
}

fn stack_features(model: &Model, conv: &Conversation, net: NetKind) -> Result<Vec<Tensor>> {
    if !matches!(model.params, ModelParams::DualLstm(_)) {
        return Err(Error::Config("LSTM features require the Dual-LSTM model".to_string()));
    }
    let batch = UtteranceBatch::new(vec![conv]);
    let mut tape = Tape::new();
    let leaves = register_leaves(&mut tape, model, &batch, None)?;
    let mut applied = 0;
    match net {
        NetKind::Situation => {
            let seq: Vec<(usize, VarId)> =
                (0..conv.len()).map(|pos| (pos, leaves.features[pos])).collect();
            let nodes = run_stack(
                &mut tape,
                &leaves,
                model,
                NetKind::Situation,
                &seq,
                PassMode::Clean,
                &mut applied,
            )?;
            Ok(nodes.into_iter().map(|id| tape.value(id).clone()).collect())
        }
        NetKind::Speaker => {
            let o_value = match &model.params {
                ModelParams::DualLstm(p) => p.cold_start.clone(),
                ModelParams::Mlp(_) => unreachable!(),
            };
            let mut out: Vec<Option<Tensor>> = vec![None; conv.len()];
            for (_, positions) in conv.speaker_positions() {
                if positions.len() < model.config.xi {
                    for &pos in &positions {
                        out[pos] = Some(o_value.clone());
                    }
                } else {
                    let sub: Vec<(usize, VarId)> =
                        positions.iter().map(|&pos| (pos, leaves.features[pos])).collect();
                    let nodes = run_stack(
                        &mut tape,
                        &leaves,
                        model,
                        NetKind::Speaker,
                        &sub,
                        PassMode::Clean,
                        &mut applied,
                    )?;
                    for (j, &pos) in positions.iter().enumerate() {
                        out[pos] = Some(tape.value(nodes[j]).clone());
                    }
                }
            }
            Ok(out.into_iter().map(|t| t.expect("every position covered")).collect())
        }
    }
}

/// Speaker-aware features of one conversation (`[2*d_h]` per utterance),
/// evaluation mode. Cold-start speakers receive the shared vector.
pub fn speaker_features(model: &Model, conv: &Conversation) -> Result<Vec<Tensor>> {
    stack_features(model, conv, NetKind::Speaker)
}

/// Affine-plus-softmax classifier head on a single representation.
pub fn classify(z: &Tensor, w_c: &Tensor, b_c: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let z = tape.input("z", z.clone())?;
    let w = tape.input("w_c", w_c.clone())?;
    let b = tape.input("b_c", b_c.clone())?;
    let lin = tape.matmul(w, z)?;
    let logits = tape.add(lin, b)?;
    let lp = tape.log_softmax(logits)?;
    Ok(Tensor::from_vec(tape.value(lp).data().iter().map(|v| v.exp()).collect()))
}
