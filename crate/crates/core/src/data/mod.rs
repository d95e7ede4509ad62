//! Conversation datasets: in-memory types, persistence, splits, batching,
//! and a synthetic generator.
//!
//! A dataset is a list of [`Conversation`]s plus a [`DatasetMeta`] sidecar
//! describing the feature dimension and label vocabulary. Splits operate on
//! whole dialogues, never on utterances, so no conversation ever straddles
//! train and validation. Batches group whole conversations and expose a
//! flattened utterance view; that flattened index is the sample index used
//! by the contrastive objectives and the perturbation machinery.

pub mod jsonl;
pub mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One utterance: who spoke, the feature vector, and the label index.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub speaker: String,
    pub features: Tensor,
    pub label: usize,
}

/// One dialogue, in utterance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub dialogue_id: String,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Distinct speakers in first-appearance order.
    pub fn speakers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for u in &self.utterances {
            if !out.contains(&u.speaker.as_str()) {
                out.push(&u.speaker);
            }
        }
        out
    }

    /// Utterance positions per speaker, in conversation order, keyed in
    /// first-appearance order.
    pub fn speaker_positions(&self) -> Vec<(&str, Vec<usize>)> {
        let mut out: Vec<(&str, Vec<usize>)> = Vec::new();
        for (pos, u) in self.utterances.iter().enumerate() {
            match out.iter_mut().find(|(s, _)| *s == u.speaker) {
                Some((_, v)) => v.push(pos),
                None => out.push((&u.speaker, vec![pos])),
            }
        }
        out
    }
}

/// Sidecar metadata stored next to the JSONL conversations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Utterance feature dimension.
    pub d_u: usize,
    /// Class names; labels index into this list.
    pub label_names: Vec<String>,
    /// Which split this file holds ("train", "val", "test", ...).
    pub split: Option<String>,
}

impl DatasetMeta {
    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }
}

/// Checks conversations against metadata: consistent feature dimensions,
/// labels inside the vocabulary, no empty dialogues, unique dialogue ids.
pub fn validate_conversations(convs: &[Conversation], meta: &DatasetMeta) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for conv in convs {
        if !seen.insert(conv.dialogue_id.as_str()) {
            return Err(Error::Data(format!("duplicate dialogue id `{}`", conv.dialogue_id)));
        }
        if conv.is_empty() {
            return Err(Error::Data(format!("dialogue `{}` has no utterances", conv.dialogue_id)));
        }
        for (pos, u) in conv.utterances.iter().enumerate() {
            if u.features.shape() != [meta.d_u] {
                return Err(Error::Data(format!(
                    "dialogue `{}` utterance {}: features have shape {:?}, expected [{}]",
                    conv.dialogue_id,
                    pos,
                    u.features.shape(),
                    meta.d_u
                )));
            }
            if !u.features.is_finite() {
                return Err(Error::Data(format!(
                    "dialogue `{}` utterance {}: non-finite feature",
                    conv.dialogue_id, pos
                )));
            }
            if u.label >= meta.label_names.len() {
                return Err(Error::Data(format!(
                    "dialogue `{}` utterance {}: label {} outside vocabulary of {}",
                    conv.dialogue_id,
                    pos,
                    u.label,
                    meta.label_names.len()
                )));
            }
        }
    }
    Ok(())
}

/// Splits dialogues into train and validation parts.
///
/// The split shuffles dialogue indices with a dedicated seeded generator and
/// takes `round(n * val_fraction)` dialogues (at least one, and leaving at
/// least one for training) for validation. Utterances never cross the split.
pub fn split_train_val(
    conversations: Vec<Conversation>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<Conversation>, Vec<Conversation>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction {} outside [0, 1)", val_fraction)));
    }
    let n = conversations.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("need at least 2 dialogues to split, got {}", n)));
    }
    let val_count = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let val_set: std::collections::BTreeSet<usize> = order[..val_count].iter().copied().collect();

    let mut train = Vec::with_capacity(n - val_count);
    let mut val = Vec::with_capacity(val_count);
    for (i, conv) in conversations.into_iter().enumerate() {
        if val_set.contains(&i) {
            val.push(conv);
        } else {
            train.push(conv);
        }
    }
    Ok((train, val))
}

/// A micro-batch of whole conversations with a flattened utterance view.
#[derive(Debug, Clone)]
pub struct UtteranceBatch<'a> {
    pub conversations: Vec<&'a Conversation>,
    /// Flattened index -> (conversation index within batch, position).
    flat: Vec<(usize, usize)>,
}

impl<'a> UtteranceBatch<'a> {
    pub fn new(conversations: Vec<&'a Conversation>) -> Self {
        let mut flat = Vec::new();
        for (ci, conv) in conversations.iter().enumerate() {
            for pos in 0..conv.len() {
                flat.push((ci, pos));
            }
        }
        Self { conversations, flat }
    }

    /// Number of utterances across all conversations in the batch.
    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Utterance behind a flattened index.
    pub fn utterance(&self, i: usize) -> &Utterance {
        let (ci, pos) = self.flat[i];
        &self.conversations[ci].utterances[pos]
    }

    /// (conversation index within batch, utterance position) of a flattened
    /// index.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        self.flat[i]
    }

    /// Flattened index of (conversation index, position).
    pub fn flat_index(&self, ci: usize, pos: usize) -> usize {
        let before: usize = self.conversations[..ci].iter().map(|c| c.len()).sum();
        before + pos
    }

    /// Labels in flattened order.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.utterance(i).label).collect()
    }
}

/// Groups conversations into batches of whole conversations.
///
/// With `shuffle_seed` set, conversation order is permuted by a dedicated
/// seeded generator first; otherwise input order is kept. The final batch
/// may be smaller than `batch_size`.
pub fn batch_iter(
    conversations: &[Conversation],
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<UtteranceBatch<'_>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".to_string()));
    }
    let mut order: Vec<usize> = (0..conversations.len()).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    Ok(order
        .chunks(batch_size)
        .map(|chunk| UtteranceBatch::new(chunk.iter().map(|i| &conversations[*i]).collect()))
        .collect())
}

/// Writes learned representations as CSV: one row per utterance with the
/// dialogue id, position, label, and the representation coordinates.
pub fn write_representations_csv<W: std::io::Write>(
    out: &mut W,
    batch: &UtteranceBatch<'_>,
    reps: &[Tensor],
) -> Result<()> {
    if reps.len() != batch.len() {
        return Err(Error::Data(format!(
            "{} representations for {} utterances",
            reps.len(),
            batch.len()
        )));
    }
    let dim = reps.first().map_or(0, Tensor::numel);
    write!(out, "dialogue_id,position,label")?;
    for j in 0..dim {
        write!(out, ",z{}", j)?;
    }
    writeln!(out)?;
    for (i, rep) in reps.iter().enumerate() {
        let (ci, pos) = batch.locate(i);
        let u = batch.utterance(i);
        write!(out, "{},{},{}", batch.conversations[ci].dialogue_id, pos, u.label)?;
        for v in rep.data() {
            write!(out, ",{}", v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
