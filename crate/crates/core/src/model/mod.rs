//! Conversation encoders: the Dual-LSTM model and a context-free MLP
//! baseline.
//!
//! The Dual-LSTM pairs two bidirectional LSTM stacks. The situation-aware
//! stack reads the whole conversation in order; the speaker-aware stack reads
//! each speaker's own utterances as a subsequence, also in conversation
//! order. A speaker with fewer than `xi` utterances in the conversation is a
//! cold start: all of their utterances share one trainable vector instead of
//! an LSTM pass. Each utterance's representation is the concatenation of its
//! situation and speaker features (`4 * d_h` values), classified by a single
//! affine layer plus softmax.
//!
//! Every LSTM cell exposes four named injection channels (input gate, forget
//! gate, cell candidate, output gate) at the pre-activation. A
//! [`PerturbationBundle`] maps [`SiteKey`]s to additive perturbations, which
//! is how contextual adversarial samples enter the forward pass.

pub mod checkpoint;
pub mod forward;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Structural hyperparameters shared by both model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Utterance feature dimension.
    pub d_u: usize,
    /// LSTM hidden size per direction.
    pub d_h: usize,
    /// Layers in each BiLSTM stack.
    pub num_lstm_layers: usize,
    /// Number of emotion classes.
    pub num_classes: usize,
    /// Cold-start threshold: speakers with fewer utterances than this share
    /// the trainable common vector. Zero disables the common-vector path.
    pub xi: usize,
    /// Dropout rate on LSTM inputs and on the pre-classifier representation.
    pub dropout: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_u == 0 || self.d_h == 0 {
            return Err(Error::Config("d_u and d_h must be positive".to_string()));
        }
        if self.num_lstm_layers == 0 {
            return Err(Error::Config("num_lstm_layers must be at least 1".to_string()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Width of an utterance representation, `[c_situation; c_speaker]`.
    pub fn z_dim(&self) -> usize {
        4 * self.d_h
    }
}

/// The four perturbation channels of an LSTM cell, addressed at the
/// pre-activation (before the channel's nonlinearity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    InputGate,
    ForgetGate,
    CellCandidate,
    OutputGate,
}

impl Channel {
    pub const ALL: [Channel; 4] =
        [Channel::InputGate, Channel::ForgetGate, Channel::CellCandidate, Channel::OutputGate];

    /// Offset of this channel inside the packed `[4*d_h]` pre-activation.
    pub fn index(self) -> usize {
        match self {
            Channel::InputGate => 0,
            Channel::ForgetGate => 1,
            Channel::CellCandidate => 2,
            Channel::OutputGate => 3,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Channel::InputGate => "ig",
            Channel::ForgetGate => "fg",
            Channel::CellCandidate => "cc",
            Channel::OutputGate => "og",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        Channel::ALL.into_iter().find(|c| c.tag() == tag)
    }
}

/// Which of the two BiLSTM stacks a site belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NetKind {
    Situation,
    Speaker,
}

impl NetKind {
    pub const BOTH: [NetKind; 2] = [NetKind::Situation, NetKind::Speaker];

    pub fn tag(self) -> &'static str {
        match self {
            NetKind::Situation => "si",
            NetKind::Speaker => "sp",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        NetKind::BOTH.into_iter().find(|n| n.tag() == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        Direction::BOTH.into_iter().find(|d| d.tag() == tag)
    }
}

/// Address of one injection site: network, layer, direction, utterance, and
/// cell channel.
///
/// `utterance` is the flattened utterance index within the micro-batch. Each
/// LSTM step of either network consumes exactly one utterance, so the
/// flattened index identifies the timestep unambiguously even for the
/// speaker network's subsequences. Cold-start speakers run no LSTM and have
/// no sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SiteKey {
    pub net: NetKind,
    pub layer: usize,
    pub direction: Direction,
    pub utterance: usize,
    pub channel: Channel,
}

impl SiteKey {
    /// Canonical leaf name on the tape, e.g. `site.si.l0.fwd.u3.ig`.
    pub fn name(&self) -> String {
        format!(
            "site.{}.l{}.{}.u{}.{}",
            self.net.tag(),
            self.layer,
            self.direction.tag(),
            self.utterance,
            self.channel.tag()
        )
    }

    /// Inverse of [`SiteKey::name`].
    pub fn parse(name: &str) -> Option<SiteKey> {
        let mut parts = name.split('.');
        if parts.next()? != "site" {
            return None;
        }
        let net = NetKind::from_tag(parts.next()?)?;
        let layer = parts.next()?.strip_prefix('l')?.parse().ok()?;
        let direction = Direction::from_tag(parts.next()?)?;
        let utterance = parts.next()?.strip_prefix('u')?.parse().ok()?;
        let channel = Channel::from_tag(parts.next()?)?;
        if parts.next().is_some() {
            return None;
        }
        Some(SiteKey { net, layer, direction, utterance, channel })
    }
}

/// Additive perturbations keyed by injection site.
///
/// An empty bundle reproduces the clean forward pass exactly. Iteration is
/// in sorted key order, keeping norm audits and serial application
/// deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerturbationBundle {
    map: BTreeMap<SiteKey, Tensor>,
}

impl PerturbationBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: SiteKey, value: Tensor) {
        self.map.insert(key, value);
    }

    pub fn get(&self, key: &SiteKey) -> Option<&Tensor> {
        self.map.get(key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SiteKey, &Tensor)> {
        self.map.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SiteKey> {
        self.map.keys()
    }
}

/// Parameters of one LSTM cell with the four channels packed row-wise in the
/// order input gate, forget gate, cell candidate, output gate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    /// `[4*d_h, d_in]`
    pub w_ih: Tensor,
    /// `[4*d_h, d_h]`
    pub w_hh: Tensor,
    /// `[4*d_h]`
    pub b: Tensor,
}

/// Forward and backward cells of one BiLSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub fwd: LstmCellParams,
    pub bwd: LstmCellParams,
}

/// A stack of BiLSTM layers; layer 0 reads `d_u` features, deeper layers
/// read the previous layer's `2*d_h` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<BiLstmLayer>,
}

/// All trainable tensors of the Dual-LSTM model.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLstmParams {
    pub situation: LstmStack,
    pub speaker: LstmStack,
    /// Shared cold-start speaker vector, `[2*d_h]`.
    pub cold_start: Tensor,
    /// Classifier weight, `[num_classes, 4*d_h]`.
    pub w_c: Tensor,
    /// Classifier bias, `[num_classes]`.
    pub b_c: Tensor,
}

/// Trainable tensors of the context-free baseline: one hidden tanh layer of
/// width `4*d_h` (so the classifier head matches the Dual-LSTM's) plus the
/// same affine classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `[4*d_h, d_u]`
    pub w_h: Tensor,
    /// `[4*d_h]`
    pub b_h: Tensor,
    /// `[num_classes, 4*d_h]`
    pub w_c: Tensor,
    /// `[num_classes]`
    pub b_c: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DualLstm,
    Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    DualLstm(DualLstmParams),
    Mlp(MlpParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::DualLstm(_) => ModelKind::DualLstm,
            ModelParams::Mlp(_) => ModelKind::Mlp,
        }
    }
}

/// A model: structural config plus parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
        .expect("shape/data agree by construction")
}

fn init_cell(rng: &mut impl Rng, d_in: usize, d_h: usize) -> LstmCellParams {
    let bound = 1.0 / (d_h as f64).sqrt();
    let w_ih = uniform_tensor(rng, &[4 * d_h, d_in], bound);
    let w_hh = uniform_tensor(rng, &[4 * d_h, d_h], bound);
    // Zero biases except the forget gate, which starts open so early
    // training does not wash out the cell state.
    let mut b = Tensor::zeros(&[4 * d_h]);
    let fg = Channel::ForgetGate.index();
    for v in &mut b.data_mut()[fg * d_h..(fg + 1) * d_h] {
        *v = 1.0;
    }
    LstmCellParams { w_ih, w_hh, b }
}

fn init_stack(rng: &mut impl Rng, cfg: &ModelConfig) -> LstmStack {
    let layers = (0..cfg.num_lstm_layers)
        .map(|l| {
            let d_in = if l == 0 { cfg.d_u } else { 2 * cfg.d_h };
            BiLstmLayer {
                fwd: init_cell(rng, d_in, cfg.d_h),
                bwd: init_cell(rng, d_in, cfg.d_h),
            }
        })
        .collect();
    LstmStack { layers }
}

impl Model {
    /// Fresh Dual-LSTM with the documented draw order: situation stack,
    /// speaker stack, cold-start vector, classifier. Reordering the draws
    /// would silently break every recorded seed.
    pub fn init_dual_lstm(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let situation = init_stack(rng, &config);
        let speaker = init_stack(rng, &config);
        let cold_start = uniform_tensor(rng, &[2 * config.d_h], 1.0 / (2.0 * config.d_h as f64).sqrt());
        let w_c = uniform_tensor(
            rng,
            &[config.num_classes, config.z_dim()],
            1.0 / (config.z_dim() as f64).sqrt(),
        );
        let b_c = Tensor::zeros(&[config.num_classes]);
        Ok(Model {
            config,
            params: ModelParams::DualLstm(DualLstmParams {
                situation,
                speaker,
                cold_start,
                w_c,
                b_c,
            }),
        })
    }

    /// Fresh context-free MLP baseline.
    pub fn init_mlp(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let w_h = uniform_tensor(rng, &[config.z_dim(), config.d_u], 1.0 / (config.d_u as f64).sqrt());
        let b_h = Tensor::zeros(&[config.z_dim()]);
        let w_c = uniform_tensor(
            rng,
            &[config.num_classes, config.z_dim()],
            1.0 / (config.z_dim() as f64).sqrt(),
        );
        let b_c = Tensor::zeros(&[config.num_classes]);
        Ok(Model { config, params: ModelParams::Mlp(MlpParams { w_h, b_h, w_c, b_c }) })
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    /// Parameter tensors with their canonical names, sorted by name.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        match &self.params {
            ModelParams::DualLstm(p) => {
                for (net, stack) in [(NetKind::Situation, &p.situation), (NetKind::Speaker, &p.speaker)] {
                    for (l, layer) in stack.layers.iter().enumerate() {
                        for (dir, cell) in
                            [(Direction::Forward, &layer.fwd), (Direction::Backward, &layer.bwd)]
                        {
                            let prefix = format!("{}.l{}.{}", net.tag(), l, dir.tag());
                            out.push((format!("{}.w_ih", prefix), &cell.w_ih));
                            out.push((format!("{}.w_hh", prefix), &cell.w_hh));
                            out.push((format!("{}.b", prefix), &cell.b));
                        }
                    }
                }
                out.push(("o".to_string(), &p.cold_start));
                out.push(("w_c".to_string(), &p.w_c));
                out.push(("b_c".to_string(), &p.b_c));
            }
            ModelParams::Mlp(p) => {
                out.push(("mlp.w_h".to_string(), &p.w_h));
                out.push(("mlp.b_h".to_string(), &p.b_h));
                out.push(("w_c".to_string(), &p.w_c));
                out.push(("b_c".to_string(), &p.b_c));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Mutable access to the same tensors, sorted by name.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        match &mut self.params {
            ModelParams::DualLstm(p) => {
                for (net, stack) in
                    [(NetKind::Situation, &mut p.situation), (NetKind::Speaker, &mut p.speaker)]
                {
                    for (l, layer) in stack.layers.iter_mut().enumerate() {
                        for (dir, cell) in [
                            (Direction::Forward, &mut layer.fwd),
                            (Direction::Backward, &mut layer.bwd),
                        ] {
                            let prefix = format!("{}.l{}.{}", net.tag(), l, dir.tag());
                            out.push((format!("{}.w_ih", prefix), &mut cell.w_ih));
                            out.push((format!("{}.w_hh", prefix), &mut cell.w_hh));
                            out.push((format!("{}.b", prefix), &mut cell.b));
                        }
                    }
                }
                out.push(("o".to_string(), &mut p.cold_start));
                out.push(("w_c".to_string(), &mut p.w_c));
                out.push(("b_c".to_string(), &mut p.b_c));
            }
            ModelParams::Mlp(p) => {
                out.push(("mlp.w_h".to_string(), &mut p.w_h));
                out.push(("mlp.b_h".to_string(), &mut p.b_h));
                out.push(("w_c".to_string(), &mut p.w_c));
                out.push(("b_c".to_string(), &mut p.b_c));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Names of all parameter tensors, sorted.
    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }
}
