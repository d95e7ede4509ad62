//! Synthetic conversation generator.
//!
//! Utterance features mix a class prototype, a carryover of the previous
//! utterance's features, and Gaussian noise:
//!
//! ```text
//! u_t = s * proto[y_t] + alpha * u_{t-1} + sigma * n_t,  n_t ~ N(0, I)
//! ```
//!
//! The carryover term makes labels easier to infer with conversational
//! context than from single utterances, which is the property the
//! context-aware models are supposed to exploit. Each speaker follows a
//! sticky Markov chain over classes that advances only when that speaker
//! talks, so consecutive utterances by one speaker tend to share a label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Conversation, DatasetMeta, Utterance};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};
use crate::tensor::Tensor;

/// Generator settings. Defaults produce a corpus small enough to train on
/// in seconds yet hard enough that context and speaker identity matter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub d_u: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_speakers: usize,
    pub max_speakers: usize,
    /// Prototype strength `s`.
    pub proto_scale: f64,
    /// Carryover weight `alpha` on the previous utterance.
    pub carryover: f64,
    /// Noise scale `sigma`.
    pub noise: f64,
    /// Probability that a speaker's next label repeats the current one.
    pub stay_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            d_u: 32,
            n_train: 200,
            n_val: 25,
            n_test: 50,
            min_len: 6,
            max_len: 16,
            min_speakers: 2,
            max_speakers: 4,
            proto_scale: 1.0,
            carryover: 0.6,
            noise: 0.8,
            stay_prob: 0.85,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".to_string()));
        }
        if self.d_u < self.num_classes {
            return Err(Error::Config(format!(
                "d_u = {} cannot hold {} orthogonal prototypes",
                self.d_u, self.num_classes
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("dialogue length bounds are inverted or zero".to_string()));
        }
        if self.min_speakers == 0 || self.min_speakers > self.max_speakers {
            return Err(Error::Config("speaker count bounds are inverted or zero".to_string()));
        }
        if !(0.0..1.0).contains(&self.stay_prob) && self.stay_prob != 1.0 {
            return Err(Error::Config("stay_prob must lie in [0, 1]".to_string()));
        }
        if self.carryover < 0.0 || self.noise < 0.0 || self.proto_scale <= 0.0 {
            return Err(Error::Config(
                "proto_scale must be positive; carryover and noise non-negative".to_string(),
            ));
        }
        Ok(())
    }

    /// Class prototype vectors: scaled standard basis vectors, so any two
    /// prototypes are orthogonal and `d_u >= num_classes` suffices.
    pub fn prototypes(&self) -> Vec<Tensor> {
        (0..self.num_classes)
            .map(|k| {
                let mut proto = vec![0.0; self.d_u];
                proto[k] = self.proto_scale;
                Tensor::from_vec(proto)
            })
            .collect()
    }

    pub fn meta(&self, split: Option<&str>) -> DatasetMeta {
        DatasetMeta {
            d_u: self.d_u,
            label_names: (0..self.num_classes).map(|k| format!("class_{}", k)).collect(),
            split: split.map(|s| s.to_string()),
        }
    }
}

fn next_label(current: usize, num_classes: usize, stay_prob: f64, rng: &mut ChaCha8Rng) -> usize {
    if rng.gen::<f64>() < stay_prob {
        return current;
    }
    // Uniform over the other classes.
    let step = rng.gen_range(1..num_classes);
    (current + step) % num_classes
}

fn generate_conversation(cfg: &SynthConfig, id: String, rng: &mut ChaCha8Rng) -> Conversation {
    let protos = cfg.prototypes();
    let len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let n_speakers = rng.gen_range(cfg.min_speakers..=cfg.max_speakers).min(len);

    // Every speaker gets at least one turn; remaining turns are uniform.
    let mut turn_speakers: Vec<usize> = (0..n_speakers).collect();
    for _ in n_speakers..len {
        turn_speakers.push(rng.gen_range(0..n_speakers));
    }
    turn_speakers.shuffle(rng);

    let mut chain_state: Vec<usize> =
        (0..n_speakers).map(|_| rng.gen_range(0..cfg.num_classes)).collect();
    let mut prev_features: Option<Vec<f64>> = None;
    let mut utterances = Vec::with_capacity(len);
    for &sp in &turn_speakers {
        let label = chain_state[sp];
        chain_state[sp] = next_label(label, cfg.num_classes, cfg.stay_prob, rng);
        let mut features = protos[label].data().to_vec();
        if let Some(prev) = &prev_features {
            for (f, p) in features.iter_mut().zip(prev) {
                *f += cfg.carryover * p;
            }
        }
        for f in features.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *f += cfg.noise * n;
        }
        prev_features = Some(features.clone());
        utterances.push(Utterance {
            speaker: format!("spk_{}", sp),
            features: Tensor::from_vec(features),
            label,
        });
    }
    Conversation { dialogue_id: id, utterances }
}

fn generate_split(
    cfg: &SynthConfig,
    prefix: &str,
    count: usize,
    seed: u64,
) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| generate_conversation(cfg, format!("{}_{:03}", prefix, i), &mut rng))
        .collect()
}

/// A generated corpus with train/val/test splits.
pub struct SynthCorpus {
    pub train: Vec<Conversation>,
    pub val: Vec<Conversation>,
    pub test: Vec<Conversation>,
    pub meta: DatasetMeta,
}

/// Generates the full corpus. Each split draws from its own stream derived
/// from the master seed, so changing `n_train` does not disturb the test
/// split.
pub fn generate(cfg: &SynthConfig, master_seed: u64) -> Result<SynthCorpus> {
    cfg.validate()?;
    let train = generate_split(cfg, "train", cfg.n_train, seeds::derive(master_seed, Stream::Synth, 0));
    let val = generate_split(cfg, "val", cfg.n_val, seeds::derive(master_seed, Stream::Synth, 1));
    let test = generate_split(cfg, "test", cfg.n_test, seeds::derive(master_seed, Stream::Synth, 2));
    Ok(SynthCorpus { train, val, test, meta: cfg.meta(None) })
}
