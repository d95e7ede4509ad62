//! Evaluation metrics.
//!
//! Classification quality, clustering quality (both against reference
//! labels and label-free), significance testing, and robustness curves.
//! Every metric here is deterministic; the only randomness in evaluation
//! is the clustering initialization, which takes an explicit seed.

pub mod agreement;
pub mod classification;
pub mod geometry;
pub mod kmeans;
pub mod robustness;
pub mod ttest;

pub use agreement::{adjusted_rand_index, fowlkes_mallows_index, normalized_mutual_info};
pub use classification::{classification_report, ClassMetrics, ClassificationReport, ConfusionMatrix};
pub use geometry::{calinski_harabasz_index, davies_bouldin_index, silhouette_coefficient};
pub use kmeans::{kmeans, KmeansConfig, KmeansResult};
pub use robustness::{RobustnessCurve, RobustnessPoint};
pub use ttest::{paired_t_test, TTestResult};
