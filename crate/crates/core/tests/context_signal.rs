//! The synthetic corpus must carry a real context signal: a feature
//! component inherited from the previous utterance makes labels partially
//! inferable from dialogue order. Destroying that order by shuffling
//! utterances inside every dialogue should therefore cost the
//! context-aware model validation score, averaged over seeds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sacl_core::data::synth::{generate, SynthConfig};
use sacl_core::data::Conversation;
use sacl_core::model::{ModelConfig, ModelKind};
use sacl_core::trainer::{fit, TrainConfig};

fn shuffle_within_dialogues(conversations: &[Conversation], seed: u64) -> Vec<Conversation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    conversations
        .iter()
        .map(|c| {
            let mut shuffled = c.clone();
            shuffled.utterances.shuffle(&mut rng);
            shuffled
        })
        .collect()
}

fn mean_val_f1(
    train: &[Conversation],
    val: &[Conversation],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> f64 {
    let total: f64 = seeds
        .iter()
        .map(|&s| {
            fit(model_cfg, ModelKind::DualLstm, train, val, train_cfg, s)
                .expect("training succeeds")
                .log
                .best_val_weighted_f1
        })
        .sum();
    total / seeds.len() as f64
}

#[test]
fn shuffling_utterance_order_degrades_validation_score() {
    let synth = SynthConfig {
        n_train: 120,
        n_val: 30,
        n_test: 5,
        ..SynthConfig::default()
    };
    let corpus = generate(&synth, 20260816).unwrap();
    let shuffled_train = shuffle_within_dialogues(&corpus.train, 7);
    let shuffled_val = shuffle_within_dialogues(&corpus.val, 8);

    let model_cfg = ModelConfig {
        d_u: synth.d_u,
        d_h: 16,
        num_lstm_layers: 1,
        num_classes: synth.num_classes,
        xi: 2,
        dropout: 0.1,
    };
    let train_cfg = TrainConfig { epochs: 22, patience: 22, ..TrainConfig::default() };
    let seeds = [1, 2, 3];

    let ordered = mean_val_f1(&corpus.train, &corpus.val, &model_cfg, &train_cfg, &seeds);
    let shuffled =
        mean_val_f1(&shuffled_train, &shuffled_val, &model_cfg, &train_cfg, &seeds);

    println!("ordered {:.4} vs shuffled {:.4}", ordered, shuffled);
    assert!(
        ordered > shuffled,
        "ordered dialogues should beat shuffled ones, got {:.4} vs {:.4}",
        ordered,
        shuffled
    );
}
