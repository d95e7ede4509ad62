//! Model evaluation: clean and under-attack split evaluation, robustness
//! curves over a perturbation-budget grid, and clustering analysis of
//! learned representations.

use serde::{Deserialize, Serialize};

use crate::adversarial::{
    contextual_attack, feature_attack, random_contextual, random_features, NormQ,
};
use crate::data::{batch_iter, Conversation};
use crate::error::{Error, Result};
use crate::metrics::agreement::{
    adjusted_rand_index, fowlkes_mallows_index, normalized_mutual_info,
};
use crate::metrics::classification::{classification_report, ClassificationReport};
use crate::metrics::geometry::{
    calinski_harabasz_index, davies_bouldin_index, silhouette_coefficient,
};
use crate::metrics::kmeans::{kmeans, KmeansConfig};
use crate::metrics::robustness::{RobustnessCurve, RobustnessPoint};
use crate::model::forward::{infer, infer_with, PassMode};
use crate::model::Model;
use crate::seeds::{self, Stream};
use crate::tensor::Tensor;

/// Everything one pass over a split produces, flattened in conversation
/// order: per-utterance predictions, gold labels, representations, log
/// probabilities, and the aggregate classification report.
pub struct EvalOutput {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub representations: Vec<Tensor>,
    pub log_probs: Vec<Tensor>,
    pub report: ClassificationReport,
}

/// Which perturbation an under-attack evaluation applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Gradient ascent at the LSTM gate channels.
    Contextual,
    /// Gradient ascent on the input features.
    Feature,
    /// Random draws at the gate channels, magnitude-matched to
    /// `Contextual`.
    RandomContextual,
    /// Random draws on the input features.
    RandomFeature,
}

fn collect(
    outputs: Vec<(Vec<usize>, crate::model::forward::InferOutput)>,
    num_classes: usize,
) -> Result<EvalOutput> {
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    let mut representations = Vec::new();
    let mut log_probs = Vec::new();
    for (batch_labels, out) in outputs {
        labels.extend(batch_labels);
        predictions.extend(out.predictions);
        representations.extend(out.z);
        log_probs.extend(out.log_probs);
    }
    let report = classification_report(&labels, &predictions, num_classes)?;
    Ok(EvalOutput { predictions, labels, representations, log_probs, report })
}

/// Evaluates a split without perturbation. Conversations keep their input
/// order, so outputs align with the split regardless of batch size.
pub fn evaluate_split(
    model: &Model,
    conversations: &[Conversation],
    batch_size: usize,
) -> Result<EvalOutput> {
    let mut outputs = Vec::new();
    for batch in batch_iter(conversations, batch_size, None)? {
        let out = infer(model, &batch, None)?;
        outputs.push((batch.labels(), out));
    }
    collect(outputs, model.config.num_classes)
}

/// Evaluates a split with a fresh white-box or random perturbation per
/// batch. Gradient attacks maximize the unweighted classification loss on
/// the true labels; random baselines draw from a stream derived from
/// `seed` and the batch index, so results are reproducible for a fixed
/// batch size.
pub fn evaluate_under_attack(
    model: &Model,
    conversations: &[Conversation],
    batch_size: usize,
    kind: AttackKind,
    epsilon: f64,
    norm: NormQ,
    seed: u64,
) -> Result<EvalOutput> {
    let mut outputs = Vec::new();
    for (index, batch) in batch_iter(conversations, batch_size, None)?.iter().enumerate() {
        let batch_seed = seeds::derive(seed, Stream::Crt, index as u64);
        let out = match kind {
            AttackKind::Contextual => {
                let bundle = contextual_attack(model, batch, None, epsilon, norm)?;
                infer(model, batch, Some(&bundle))?
            }
            AttackKind::Feature => {
                let deltas = feature_attack(model, batch, None, epsilon, norm)?;
                infer_with(model, batch, PassMode::WithFeatureDelta(&deltas))?
            }
            AttackKind::RandomContextual => {
                let bundle = random_contextual(model, batch, epsilon, batch_seed);
                infer(model, batch, Some(&bundle))?
            }
            AttackKind::RandomFeature => {
                let deltas =
                    random_features(model.config.d_u, batch.len(), epsilon, batch_seed);
                infer_with(model, batch, PassMode::WithFeatureDelta(&deltas))?
            }
        };
        outputs.push((batch.labels(), out));
    }
    collect(outputs, model.config.num_classes)
}

/// Sweeps a strictly increasing budget grid and records accuracy and
/// weighted F1 at each point. A leading zero budget reproduces the clean
/// evaluation exactly, because a zero-budget attack is a no-op.
pub fn robustness_curve(
    model: &Model,
    conversations: &[Conversation],
    epsilons: &[f64],
    kind: AttackKind,
    norm: NormQ,
    batch_size: usize,
    seed: u64,
) -> Result<RobustnessCurve> {
    let mut points = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let eval =
            evaluate_under_attack(model, conversations, batch_size, kind, epsilon, norm, seed)?;
        points.push(RobustnessPoint {
            epsilon,
            accuracy: eval.report.accuracy,
            weighted_f1: eval.report.weighted_f1,
        });
    }
    RobustnessCurve::new(points)
}

/// K-means clustering of representations plus the six quality metrics:
/// agreement with gold labels (ARI, NMI, FMI) and cluster geometry
/// (silhouette, Calinski-Harabasz, Davies-Bouldin), all computed on the
/// k-means assignments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterEvaluation {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub ari: f64,
    pub nmi: f64,
    pub fmi: f64,
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
}

pub fn cluster_quality(
    representations: &[Tensor],
    labels: &[usize],
    k: usize,
    seed: u64,
) -> Result<ClusterEvaluation> {
    if representations.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} representations but {} labels",
            representations.len(),
            labels.len()
        )));
    }
    let points: Vec<Vec<f64>> =
        representations.iter().map(|t| t.data().to_vec()).collect();
    let result = kmeans(&points, &KmeansConfig::with_k(k), seed)?;
    Ok(ClusterEvaluation {
        k,
        seed,
        ari: adjusted_rand_index(&result.assignments, labels)?,
        nmi: normalized_mutual_info(&result.assignments, labels)?,
        fmi: fowlkes_mallows_index(&result.assignments, labels)?,
        silhouette: silhouette_coefficient(&points, &result.assignments)?,
        calinski_harabasz: calinski_harabasz_index(&points, &result.assignments)?,
        davies_bouldin: davies_bouldin_index(&points, &result.assignments)?,
        inertia: result.inertia,
        assignments: result.assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, SynthConfig};
    use crate::model::{Model, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (Model, Vec<Conversation>) {
        let synth = SynthConfig {
            num_classes: 3,
            d_u: 5,
            n_train: 0,
            n_val: 0,
            n_test: 7,
            min_len: 3,
            max_len: 6,
            ..SynthConfig::default()
        };
        let corpus = generate(&synth, 42).unwrap();
        let config =
            ModelConfig { d_u: 5, d_h: 4, num_lstm_layers: 1, num_classes: 3, xi: 2, dropout: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Model::init_dual_lstm(config, &mut rng).unwrap();
        (model, corpus.test)
    }

    #[test]
    fn split_evaluation_does_not_depend_on_batch_size() {
        let (model, convs) = fixture();
        let a = evaluate_split(&model, &convs, 1).unwrap();
        let b = evaluate_split(&model, &convs, 3).unwrap();
        let c = evaluate_split(&model, &convs, 100).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.predictions, c.predictions);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.report.accuracy.to_bits(), b.report.accuracy.to_bits());
        assert_eq!(a.report.weighted_f1.to_bits(), c.report.weighted_f1.to_bits());
        for (x, y) in a.log_probs.iter().zip(&b.log_probs) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn zero_budget_attack_reproduces_the_clean_evaluation() {
        let (model, convs) = fixture();
        let clean = evaluate_split(&model, &convs, 2).unwrap();
        for kind in [
            AttackKind::Contextual,
            AttackKind::Feature,
            AttackKind::RandomContextual,
            AttackKind::RandomFeature,
        ] {
            let attacked =
                evaluate_under_attack(&model, &convs, 2, kind, 0.0, NormQ::L2, 9).unwrap();
            assert_eq!(clean.predictions, attacked.predictions, "{:?}", kind);
            for (x, y) in clean.log_probs.iter().zip(&attacked.log_probs) {
                assert_eq!(x, y, "{:?}", kind);
            }
        }
    }

    #[test]
    fn positive_budget_perturbs_the_outputs() {
        let (model, convs) = fixture();
        let clean = evaluate_split(&model, &convs, 2).unwrap();
        for kind in [AttackKind::Contextual, AttackKind::Feature] {
            let attacked =
                evaluate_under_attack(&model, &convs, 2, kind, 2.0, NormQ::L2, 9).unwrap();
            let touched = clean
                .log_probs
                .iter()
                .zip(&attacked.log_probs)
                .any(|(x, y)| x != y);
            assert!(touched, "{:?} left every log-probability unchanged", kind);
        }
    }

    #[test]
    fn under_attack_evaluation_is_deterministic() {
        let (model, convs) = fixture();
        for kind in [AttackKind::RandomContextual, AttackKind::RandomFeature] {
            let a = evaluate_under_attack(&model, &convs, 2, kind, 1.0, NormQ::L2, 5).unwrap();
            let b = evaluate_under_attack(&model, &convs, 2, kind, 1.0, NormQ::L2, 5).unwrap();
            assert_eq!(a.predictions, b.predictions);
            assert_eq!(a.report.weighted_f1.to_bits(), b.report.weighted_f1.to_bits());
        }
    }

    #[test]
    fn curve_starts_at_the_clean_point_and_is_reproducible() {
        let (model, convs) = fixture();
        let grid = [0.0, 0.5, 1.0];
        let curve = robustness_curve(
            &model,
            &convs,
            &grid,
            AttackKind::Contextual,
            NormQ::L2,
            2,
            3,
        )
        .unwrap();
        let clean = evaluate_split(&model, &convs, 2).unwrap();
        assert_eq!(curve.points[0].weighted_f1.to_bits(), clean.report.weighted_f1.to_bits());
        assert_eq!(curve.points[0].accuracy.to_bits(), clean.report.accuracy.to_bits());
        let again = robustness_curve(
            &model,
            &convs,
            &grid,
            AttackKind::Contextual,
            NormQ::L2,
            2,
            3,
        )
        .unwrap();
        for (p, q) in curve.points.iter().zip(&again.points) {
            assert_eq!(p.weighted_f1.to_bits(), q.weighted_f1.to_bits());
        }
    }

    #[test]
    fn non_increasing_grid_is_rejected() {
        let (model, convs) = fixture();
        let err = robustness_curve(
            &model,
            &convs,
            &[0.5, 0.5],
            AttackKind::Feature,
            NormQ::L2,
            2,
            3,
        );
        assert!(err.is_err());
    }

    #[test]
    fn three_tight_blobs_cluster_perfectly() {
        let mut reps = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [0.0, 50.0, 100.0].iter().enumerate() {
            for i in 0..6 {
                reps.push(Tensor::from_vec(vec![center + 0.01 * i as f64, *center]));
                labels.push(c);
            }
        }
        let eval = cluster_quality(&reps, &labels, 3, 7).unwrap();
        assert!((eval.ari - 1.0).abs() < 1e-12);
        assert!((eval.nmi - 1.0).abs() < 1e-12);
        assert!((eval.fmi - 1.0).abs() < 1e-12);
        assert!(eval.silhouette > 0.99);
        assert!(eval.davies_bouldin < 0.01);
        assert_eq!(eval.k, 3);
    }

    #[test]
    fn cluster_quality_validates_its_inputs() {
        let reps = vec![Tensor::from_vec(vec![0.0, 0.0]); 3];
        assert!(cluster_quality(&reps, &[0, 1], 2, 0).is_err());
        assert!(cluster_quality(&reps, &[0, 1, 0], 5, 0).is_err());
    }
}
