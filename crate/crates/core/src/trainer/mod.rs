//! Training loop: objective and strategy selection, gradient
//! accumulation, Adam updates, early stopping, and multi-seed runs.
//!
//! One training step builds a single tape per micro-batch. Under an
//! adversarial strategy the tape hosts two forward passes: the clean pass
//! (tracking injection sites when the perturbation is contextual), a
//! backward pass over the attack loss to obtain the perturbation, and a
//! second forward pass with the perturbation applied as constants. The
//! joint loss then gets one more backward pass; both passes share the
//! same parameter and dropout-mask leaves, so their gradients combine on
//! the shared tape exactly as the summed objective requires. Treating the
//! perturbation as a constant in the second pass is what the inner
//! maximization demands: the attacker's dependence on the parameters is
//! not differentiated through.

pub mod adam;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{
    bundle_from_tape_sites, deltas_from_tape_features, random_contextual, NormQ,
};
use crate::data::{batch_iter, Conversation, UtteranceBatch};
use crate::error::{Error, Result};
use crate::eval::evaluate_split;
use crate::grad::{GradientMap, Tape};
use crate::model::forward::{
    build_forward, register_leaves, DropoutMasks, ForwardNodes, PassMode,
};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::objectives::{self, CeVariant};
use adam::{Adam, AdamConfig};

/// Loss selection. `Sacl` and `SoftScl` build the same per-pass term (a
/// classification term plus a scaled contrastive term); the adversarial
/// strategies add a second such term on the perturbed pass, and `Sacl`
/// under a plain strategy degenerates to `SoftScl` by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Ce,
    Focal,
    SupCon,
    SoftScl,
    Sacl,
}

/// How each micro-batch is (or is not) perturbed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Plain training, no perturbation.
    Vt,
    /// Adversarial deltas on the input features.
    At,
    /// Adversarial perturbations on the LSTM gate channels.
    Cat,
    /// Random perturbations on the LSTM gate channels, the magnitude
    /// control for `Cat`.
    Crt,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub strategy: Strategy,
    pub epochs: usize,
    /// Dialogues per micro-batch.
    pub batch_size: usize,
    /// Micro-batches whose gradients pool into one optimizer step.
    pub grad_accum_steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Perturbation budget.
    pub epsilon: f64,
    /// Probability that a micro-batch receives the adversarial term.
    pub perturbation_rate: f64,
    pub norm_q: NormQ,
    /// Contrastive weight on the clean pass.
    pub lambda: f64,
    /// Contrastive weight on the perturbed pass.
    pub lambda_radv: f64,
    /// Contrastive temperature on the clean pass.
    pub tau: f64,
    /// Contrastive temperature on the perturbed pass.
    pub tau_radv: f64,
    /// Focusing strength for the focal objective.
    pub gamma: f64,
    /// Reweight the classification term by inverse class frequency.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Ce,
            strategy: Strategy::Vt,
            epochs: 30,
            batch_size: 4,
            grad_accum_steps: 1,
            lr: 0.01,
            weight_decay: 1e-4,
            patience: 5,
            epsilon: 0.5,
            perturbation_rate: 1.0,
            norm_q: NormQ::L2,
            lambda: 0.1,
            lambda_radv: 0.1,
            tau: 1.0,
            tau_radv: 1.0,
            gamma: 2.0,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.grad_accum_steps == 0 {
            return Err(Error::Config(
                "epochs, batch_size, and grad_accum_steps must be positive".to_string(),
            ));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least one epoch".to_string()));
        }
        if self.lr < 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("lr and weight_decay must be non-negative".to_string()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::Config("epsilon must be non-negative".to_string()));
        }
        if !(0.0..=1.0).contains(&self.perturbation_rate) {
            return Err(Error::Config("perturbation_rate must lie in [0, 1]".to_string()));
        }
        if self.lambda < 0.0 || self.lambda_radv < 0.0 {
            return Err(Error::Config("contrastive weights must be non-negative".to_string()));
        }
        if self.tau <= 0.0 || self.tau_radv <= 0.0 {
            return Err(Error::Config("temperatures must be positive".to_string()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be non-negative".to_string()));
        }
        Ok(())
    }
}

/// Inverse-frequency class weights, rescaled to mean one so the loss
/// magnitude stays comparable with the unweighted case. Classes absent
/// from the data get weight zero and do not influence the rescaling.
pub fn compute_class_weights(conversations: &[Conversation], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    let mut total = 0usize;
    for conv in conversations {
        for u in &conv.utterances {
            if u.label >= num_classes {
                return Err(Error::Data(format!(
                    "label {} outside {} classes",
                    u.label, num_classes
                )));
            }
            counts[u.label] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Data("cannot weight classes of an empty corpus".to_string()));
    }
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { total as f64 / (num_classes as f64 * c as f64) })
        .collect();
    let present = weights.iter().filter(|&&w| w > 0.0).count();
    let mean = weights.iter().sum::<f64>() / present as f64;
    for w in weights.iter_mut() {
        *w /= mean;
    }
    Ok(weights)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-utterance training loss.
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_weighted_f1: f64,
    /// Whether this epoch improved the selection metric.
    pub improved: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_weighted_f1: f64,
    /// Timing is kept out of serialized logs so identical runs produce
    /// identical files; manifests carry wall-clock data instead.
    #[serde(skip)]
    pub wall_clock_secs: Option<f64>,
}

pub struct FitResult {
    pub model: Model,
    pub log: RunLog,
}

struct MicroOutcome {
    grads: GradientMap,
    loss: f64,
    utterances: usize,
}

/// One objective term over one forward pass's outputs.
fn objective_term(
    tape: &mut Tape,
    nodes: &ForwardNodes,
    labels: &[usize],
    cfg: &TrainConfig,
    weights: Option<&[f64]>,
    lambda: f64,
    tau: f64,
) -> Result<crate::grad::VarId> {
    match cfg.objective {
        Objective::Ce => objectives::cross_entropy(tape, &nodes.log_probs, labels, weights),
        Objective::Focal => {
            objectives::focal(tape, &nodes.log_probs, labels, cfg.gamma, weights)
        }
        Objective::SupCon => {
            let ce = objectives::cross_entropy(tape, &nodes.log_probs, labels, weights)?;
            if lambda == 0.0 {
                return Ok(ce);
            }
            let con = objectives::sup_con(tape, &nodes.z, labels, tau)?;
            let scaled = tape.scale(con, lambda)?;
            tape.add(ce, scaled)
        }
        Objective::SoftScl | Objective::Sacl => objectives::soft_scl(
            tape,
            &nodes.log_probs,
            &nodes.z,
            labels,
            CeVariant::CrossEntropy,
            lambda,
            tau,
            weights,
        ),
    }
}

fn micro_step(
    model: &Model,
    batch: &UtteranceBatch<'_>,
    cfg: &TrainConfig,
    weights: Option<&[f64]>,
    masks: &DropoutMasks,
    adversarial: bool,
    crt_seed: u64,
) -> Result<MicroOutcome> {
    let labels = batch.labels();
    let mut tape = Tape::new();
    let leaves = register_leaves(&mut tape, model, batch, Some(masks))?;

    let clean_mode = if adversarial && cfg.strategy == Strategy::Cat {
        PassMode::TrackSites
    } else {
        PassMode::Clean
    };
    let clean_nodes = build_forward(&mut tape, &leaves, model, batch, clean_mode)?;
    let clean_term =
        objective_term(&mut tape, &clean_nodes, &labels, cfg, weights, cfg.lambda, cfg.tau)?;

    let total = if adversarial {
        let adv_nodes = match cfg.strategy {
            Strategy::Cat => {
                let attack =
                    objectives::cross_entropy(&mut tape, &clean_nodes.log_probs, &labels, weights)?;
                tape.backward(attack)?;
                let bundle = bundle_from_tape_sites(&tape, cfg.epsilon, cfg.norm_q)?;
                tape.reset_grads();
                build_forward(&mut tape, &leaves, model, batch, PassMode::WithSites(&bundle))?
            }
            Strategy::At => {
                let attack =
                    objectives::cross_entropy(&mut tape, &clean_nodes.log_probs, &labels, weights)?;
                tape.backward(attack)?;
                let deltas = deltas_from_tape_features(
                    &tape,
                    &leaves.features,
                    model.config.d_u,
                    cfg.epsilon,
                    cfg.norm_q,
                );
                tape.reset_grads();
                build_forward(&mut tape, &leaves, model, batch, PassMode::WithFeatureDelta(&deltas))?
            }
            Strategy::Crt => {
                let bundle = random_contextual(model, batch, cfg.epsilon, crt_seed);
                build_forward(&mut tape, &leaves, model, batch, PassMode::WithSites(&bundle))?
            }
            Strategy::Vt => unreachable!("plain training never takes the adversarial branch"),
        };
        let adv_term = objective_term(
            &mut tape,
            &adv_nodes,
            &labels,
            cfg,
            weights,
            cfg.lambda_radv,
            cfg.tau_radv,
        )?;
        tape.add(clean_term, adv_term)?
    } else {
        clean_term
    };

    tape.backward(total)?;
    let names = model.param_names();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let grads = tape.gradients(&name_refs)?;
    let loss = tape.value(total).scalar_value()?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { context: "training loss".to_string() });
    }
    Ok(MicroOutcome { grads, loss, utterances: batch.len() })
}

fn apply_window(
    model: &mut Model,
    adam: &mut Adam,
    window: &mut GradientMap,
    utterances: usize,
) -> Result<()> {
    if utterances == 0 {
        return Ok(());
    }
    // Micro-batch losses are raw sums, so one division by the window's
    // utterance total makes the step an average over the whole window,
    // independent of how the window was split into micro-batches.
    window.scale(1.0 / utterances as f64);
    adam.step(model.named_params_mut(), window)?;
    *window = GradientMap::new();
    Ok(())
}

/// Trains one model from scratch. All randomness (initialization, batch
/// order, dropout, perturbation coins) derives from `seed`.
pub fn fit(
    model_config: &ModelConfig,
    kind: ModelKind,
    train: &[Conversation],
    val: &[Conversation],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FitResult> {
    cfg.validate()?;
    model_config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training needs non-empty train and val splits".to_string()));
    }
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = match kind {
        ModelKind::DualLstm => Model::init_dual_lstm(model_config.clone(), &mut rng)?,
        ModelKind::Mlp => Model::init_mlp(model_config.clone(), &mut rng)?,
    };
    let weights = if cfg.class_weighting {
        Some(compute_class_weights(train, model_config.num_classes)?)
    } else {
        None
    };
    let mut adam = Adam::new(AdamConfig::new(cfg.lr, cfg.weight_decay));

    let mut log = RunLog {
        seed,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_weighted_f1: f64::NEG_INFINITY,
        wall_clock_secs: None,
    };
    let mut best_model = model.clone();
    let mut epochs_since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        let shuffle_seed: u64 = rng.gen();
        let batches = batch_iter(train, cfg.batch_size, Some(shuffle_seed))?;
        let mut window = GradientMap::new();
        let mut window_utts = 0usize;
        let mut pending = 0usize;
        let mut epoch_loss = 0.0;
        let mut epoch_utts = 0usize;

        for batch in &batches {
            let masks = DropoutMasks::sample(&model, batch.len(), &mut rng);
            let adversarial = cfg.strategy != Strategy::Vt
                && rng.gen::<f64>() < cfg.perturbation_rate;
            let crt_seed = if adversarial && cfg.strategy == Strategy::Crt {
                rng.gen::<u64>()
            } else {
                0
            };
            let outcome =
                micro_step(&model, batch, cfg, weights.as_deref(), &masks, adversarial, crt_seed)?;
            window.merge_add(&outcome.grads)?;
            window_utts += outcome.utterances;
            pending += 1;
            epoch_loss += outcome.loss;
            epoch_utts += outcome.utterances;
            if pending == cfg.grad_accum_steps {
                apply_window(&mut model, &mut adam, &mut window, window_utts)?;
                pending = 0;
                window_utts = 0;
            }
        }
        if pending > 0 {
            apply_window(&mut model, &mut adam, &mut window, window_utts)?;
        }

        let val_eval = evaluate_split(&model, val, cfg.batch_size)?;
        let improved = val_eval.report.weighted_f1 > log.best_val_weighted_f1;
        if improved {
            log.best_val_weighted_f1 = val_eval.report.weighted_f1;
            log.best_epoch = epoch;
            best_model = model.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / epoch_utts as f64,
            val_accuracy: val_eval.report.accuracy,
            val_weighted_f1: val_eval.report.weighted_f1,
            improved,
        });
        if epochs_since_best >= cfg.patience {
            break;
        }
    }
    log.wall_clock_secs = Some(started.elapsed().as_secs_f64());
    Ok(FitResult { model: best_model, log })
}

/// Trains one model per seed, runs in parallel up to `max_threads` at a
/// time, and returns results in seed order.
pub fn fit_many(
    model_config: &ModelConfig,
    kind: ModelKind,
    train: &[Conversation],
    val: &[Conversation],
    cfg: &TrainConfig,
    seeds: &[u64],
    max_threads: usize,
) -> Result<Vec<FitResult>> {
    let threads = max_threads.max(1);
    let mut results: Vec<Option<Result<FitResult>>> = Vec::new();
    results.resize_with(seeds.len(), || None);
    for (chunk_idx, chunk) in seeds.chunks(threads).enumerate() {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (offset, &seed) in chunk.iter().enumerate() {
                handles.push((
                    chunk_idx * threads + offset,
                    scope.spawn(move || fit(model_config, kind, train, val, cfg, seed)),
                ));
            }
            for (index, handle) in handles {
                let joined = handle
                    .join()
                    .map_err(|_| Error::Config("a training thread panicked".to_string()));
                results[index] = Some(match joined {
                    Ok(inner) => inner,
                    Err(e) => Err(e),
                });
            }
        });
    }
    results
        .into_iter()
        .map(|slot| slot.expect("every seed scheduled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, SynthConfig};

    fn small_corpus(seed: u64) -> (Vec<Conversation>, Vec<Conversation>) {
        let cfg = SynthConfig {
            num_classes: 3,
            d_u: 6,
            n_train: 8,
            n_val: 3,
            n_test: 1,
            min_len: 4,
            max_len: 7,
            ..SynthConfig::default()
        };
        let corpus = generate(&cfg, seed).unwrap();
        (corpus.train, corpus.val)
    }

    fn small_model_config() -> ModelConfig {
        ModelConfig { d_u: 6, d_h: 3, num_lstm_layers: 1, num_classes: 3, xi: 2, dropout: 0.1 }
    }

    fn quick_train_config() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 3, patience: 5, ..TrainConfig::default() }
    }

    #[test]
    fn inverse_frequency_weights_on_a_skewed_corpus() {
        // 90 utterances of class 0 and 10 of class 1 weight to 0.2 / 1.8.
        let utterances = |label: usize, n: usize| -> Vec<crate::data::Utterance> {
            (0..n)
                .map(|_| crate::data::Utterance {
                    speaker: "A".to_string(),
                    features: crate::tensor::Tensor::zeros(&[2]),
                    label,
                })
                .collect()
        };
        let convs = vec![
            Conversation { dialogue_id: "a".into(), utterances: utterances(0, 90) },
            Conversation { dialogue_id: "b".into(), utterances: utterances(1, 10) },
        ];
        let w = compute_class_weights(&convs, 2).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-12);
        assert!((w[1] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn balanced_corpus_weights_to_one() {
        let (train, _) = small_corpus(31);
        let w = compute_class_weights(&train, 3).unwrap();
        let mean = w.iter().sum::<f64>() / 3.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_split_does_not_change_the_update() {
        // Raw-sum gradients over two micro-batches, divided by the joint
        // utterance count, must equal the one-batch gradient. Holds for
        // per-utterance losses (not contrastive ones, which couple batch
        // members).
        let (train, _) = small_corpus(7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = small_model_config();
        let model = Model::init_dual_lstm(
            ModelConfig { dropout: 0.0, ..config.clone() },
            &mut rng,
        )
        .unwrap();
        let cfg = TrainConfig { objective: Objective::Ce, ..quick_train_config() };

        let split_a = UtteranceBatch::new(vec![&train[0]]);
        let split_b = UtteranceBatch::new(vec![&train[1]]);
        let joint = UtteranceBatch::new(vec![&train[0], &train[1]]);
        let mut masks_rng = ChaCha8Rng::seed_from_u64(0);
        let masks_a = DropoutMasks::sample(&model, split_a.len(), &mut masks_rng);
        let masks_b = DropoutMasks::sample(&model, split_b.len(), &mut masks_rng);
        let masks_j = DropoutMasks::sample(&model, joint.len(), &mut masks_rng);

        let a = micro_step(&model, &split_a, &cfg, None, &masks_a, false, 0).unwrap();
        let b = micro_step(&model, &split_b, &cfg, None, &masks_b, false, 0).unwrap();
        let j = micro_step(&model, &joint, &cfg, None, &masks_j, false, 0).unwrap();

        let total = (a.utterances + b.utterances) as f64;
        assert_eq!(a.utterances + b.utterances, j.utterances);
        let mut pooled = a.grads;
        pooled.merge_add(&b.grads).unwrap();
        pooled.scale(1.0 / total);
        let mut reference = j.grads;
        reference.scale(1.0 / total);
        for (name, g) in pooled.iter() {
            let r = reference.get(name).unwrap();
            for (x, y) in g.data().iter().zip(r.data()) {
                assert!((x - y).abs() < 1e-9, "{}: {} vs {}", name, x, y);
            }
        }
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (train, val) = small_corpus(11);
        let config = small_model_config();
        let cfg = quick_train_config();
        let a = fit(&config, ModelKind::DualLstm, &train, &val, &cfg, 5).unwrap();
        let b = fit(&config, ModelKind::DualLstm, &train, &val, &cfg, 5).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(
            serde_json::to_string(&a.log).unwrap(),
            serde_json::to_string(&b.log).unwrap()
        );
        let c = fit(&config, ModelKind::DualLstm, &train, &val, &cfg, 6).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn zero_learning_rate_stops_after_patience_runs_out() {
        let (train, val) = small_corpus(13);
        let config = small_model_config();
        let cfg = TrainConfig {
            lr: 0.0,
            weight_decay: 0.0,
            epochs: 10,
            patience: 1,
            ..quick_train_config()
        };
        let result = fit(&config, ModelKind::DualLstm, &train, &val, &cfg, 9).unwrap();
        // Epoch 1 sets the best; epoch 2 cannot improve; patience 1 stops
        // the run right there.
        assert_eq!(result.log.epochs.len(), 2);
        assert_eq!(result.log.best_epoch, 1);
        assert!(result.log.epochs[0].improved);
        assert!(!result.log.epochs[1].improved);
    }

    #[test]
    fn adversarial_contrastive_under_plain_strategy_matches_soft_contrastive() {
        let (train, val) = small_corpus(17);
        let config = small_model_config();
        let sacl = TrainConfig {
            objective: Objective::Sacl,
            strategy: Strategy::Vt,
            ..quick_train_config()
        };
        let soft = TrainConfig {
            objective: Objective::SoftScl,
            strategy: Strategy::Vt,
            ..quick_train_config()
        };
        let a = fit(&config, ModelKind::DualLstm, &train, &val, &sacl, 21).unwrap();
        let b = fit(&config, ModelKind::DualLstm, &train, &val, &soft, 21).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn every_strategy_trains_and_returns_finite_losses() {
        let (train, val) = small_corpus(19);
        let config = small_model_config();
        for strategy in [Strategy::Vt, Strategy::At, Strategy::Cat, Strategy::Crt] {
            let cfg = TrainConfig {
                objective: Objective::Sacl,
                strategy,
                epochs: 1,
                ..quick_train_config()
            };
            let result = fit(&config, ModelKind::DualLstm, &train, &val, &cfg, 23).unwrap();
            for record in &result.log.epochs {
                assert!(record.train_loss.is_finite());
            }
        }
    }

    #[test]
    fn mlp_baseline_trains_too() {
        let (train, val) = small_corpus(29);
        let config = small_model_config();
        let cfg = quick_train_config();
        let result = fit(&config, ModelKind::Mlp, &train, &val, &cfg, 31).unwrap();
        assert!(result.log.best_val_weighted_f1 >= 0.0);
    }

    #[test]
    fn parallel_seeds_match_sequential_fits() {
        let (train, val) = small_corpus(37);
        let config = small_model_config();
        let cfg = TrainConfig { epochs: 1, ..quick_train_config() };
        let seeds = [3u64, 4, 5];
        let parallel =
            fit_many(&config, ModelKind::DualLstm, &train, &val, &cfg, &seeds, 3).unwrap();
        for (i, &seed) in seeds.iter().enumerate() {
            let sequential =
                fit(&config, ModelKind::DualLstm, &train, &val, &cfg, seed).unwrap();
            assert_eq!(parallel[i].model, sequential.model, "seed {}", seed);
        }
    }

    #[test]
    fn run_logs_serialize_without_timing() {
        let log = RunLog {
            seed: 1,
            epochs: Vec::new(),
            best_epoch: 0,
            best_val_weighted_f1: 0.5,
            wall_clock_secs: Some(12.5),
        };
        let json = serde_json::to_string(&log).unwrap();
        assert!(!json.contains("wall_clock"), "{}", json);
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let cfg = TrainConfig { perturbation_rate: 1.5, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { tau: 0.0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { patience: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
