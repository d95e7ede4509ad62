//! K-means clustering with D-squared seeding and Lloyd iterations.
//!
//! Used to cluster utterance representations before scoring them against
//! reference labels. Runs several restarts and keeps the assignment with
//! the lowest within-cluster sum of squares.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop a restart once the inertia improvement falls below this.
    pub tol: f64,
}

impl KmeansConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, restarts: 10, max_iters: 300, tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let weighted = WeightedIndex::new(&dists).expect("positive total weight");
            weighted.sample(rng)
        } else {
            // All remaining mass sits on existing centroids; any point
            // works because duplicates will form empty clusters handled
            // during Lloyd iterations.
            rng.gen_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (d, p) in dists.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut assignments = Vec::with_capacity(points.len());
    let mut inertia = 0.0;
    for p in points {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignments.push(best);
        inertia += best_d;
    }
    (assignments, inertia)
}

fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    cfg: &KmeansConfig,
) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let dim = points[0].len();
    let (mut assignments, mut inertia) = assign(points, &centroids);
    for _ in 0..cfg.max_iters {
        // Recompute centroids.
        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..cfg.k {
            if counts[c] == 0 {
                // Revive an empty cluster at the point farthest from its
                // current centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .max_by(|(i, p), (j, q)| {
                        let di = sq_dist(p, &centroids[assignments[*i]]);
                        let dj = sq_dist(q, &centroids[assignments[*j]]);
                        di.partial_cmp(&dj).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                centroids[c] = points[far].clone();
            } else {
                for (e, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *e = s / counts[c] as f64;
                }
            }
        }
        let (next_assignments, next_inertia) = assign(points, &centroids);
        let improved = inertia - next_inertia;
        assignments = next_assignments;
        inertia = next_inertia;
        if improved.abs() < cfg.tol {
            break;
        }
    }
    (assignments, centroids, inertia)
}

/// Clusters `points` into `cfg.k` groups. Deterministic for a given seed.
pub fn kmeans(points: &[Vec<f64>], cfg: &KmeansConfig, seed: u64) -> Result<KmeansResult> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be positive".to_string()));
    }
    if points.len() < cfg.k {
        return Err(Error::Data(format!("{} points cannot form {} clusters", points.len(), cfg.k)));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Data("points have inconsistent dimensions".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let centroids = seed_centroids(points, cfg.k, &mut rng);
        let (assignments, centroids, inertia) = lloyd(points, centroids, cfg);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KmeansResult { assignments, centroids, inertia });
        }
    }
    Ok(best.expect("at least one restart ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blob(center: &[f64], n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + rng.gen_range(-spread..spread))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn recovers_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut points = Vec::new();
        points.extend(blob(&[0.0, 0.0], 20, 0.3, &mut rng));
        points.extend(blob(&[8.0, 0.0], 20, 0.3, &mut rng));
        points.extend(blob(&[0.0, 8.0], 20, 0.3, &mut rng));
        let result = kmeans(&points, &KmeansConfig::with_k(3), 11).unwrap();
        // All points of one blob share a cluster and the blobs use three
        // distinct clusters.
        for b in 0..3 {
            let first = result.assignments[b * 20];
            for i in 0..20 {
                assert_eq!(result.assignments[b * 20 + i], first, "blob {} split", b);
            }
        }
        let mut ids = vec![result.assignments[0], result.assignments[20], result.assignments[40]];
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn same_seed_same_result_different_seed_may_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let points = blob(&[0.0; 3], 30, 2.0, &mut rng);
        let a = kmeans(&points, &KmeansConfig::with_k(4), 5).unwrap();
        let b = kmeans(&points, &KmeansConfig::with_k(4), 5).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let points = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let result = kmeans(&points, &KmeansConfig::with_k(1), 9).unwrap();
        assert!((result.centroids[0][0] - 3.0).abs() < 1e-12);
        assert!((result.centroids[0][1] - 3.0).abs() < 1e-12);
        let expected_inertia: f64 =
            points.iter().map(|p| sq_dist(p, &result.centroids[0])).sum();
        assert!((result.inertia - expected_inertia).abs() < 1e-12);
    }

    #[test]
    fn k_equal_to_n_reaches_zero_inertia() {
        let points = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0], vec![4.0, 4.0]];
        let result = kmeans(&points, &KmeansConfig::with_k(4), 13).unwrap();
        assert!(result.inertia < 1e-18, "inertia {}", result.inertia);
        let mut ids = result.assignments.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn more_restarts_never_hurt() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut points = blob(&[0.0, 0.0], 12, 1.5, &mut rng);
        points.extend(blob(&[3.0, 3.0], 12, 1.5, &mut rng));
        let mut one = KmeansConfig::with_k(5);
        one.restarts = 1;
        let mut many = KmeansConfig::with_k(5);
        many.restarts = 12;
        let single = kmeans(&points, &one, 3).unwrap();
        let multi = kmeans(&points, &many, 3).unwrap();
        assert!(multi.inertia <= single.inertia + 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&points, &KmeansConfig::with_k(3), 1).is_err());
        assert!(kmeans(&points, &KmeansConfig::with_k(0), 1).is_err());
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(kmeans(&ragged, &KmeansConfig::with_k(1), 1).is_err());
    }
}
