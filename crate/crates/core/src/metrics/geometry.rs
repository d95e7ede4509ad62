//! Label-free cluster quality scores on Euclidean point sets.

use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn validate(points: &[Vec<f64>], assignments: &[usize]) -> Result<usize> {
    if points.len() != assignments.len() {
        return Err(Error::ShapeMismatch {
            op: "cluster geometry",
            detail: format!("{} points vs {} assignments", points.len(), assignments.len()),
        });
    }
    if points.is_empty() {
        return Err(Error::Data("no points to score".to_string()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Data("points have inconsistent dimensions".to_string()));
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    Ok(k)
}

fn cluster_sizes(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    sizes
}

fn centroids(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let sizes = cluster_sizes(assignments, k);
    let mut out = vec![vec![0.0; dim]; k];
    for (p, &a) in points.iter().zip(assignments) {
        for (acc, v) in out[a].iter_mut().zip(p) {
            *acc += v;
        }
    }
    for (c, &size) in out.iter_mut().zip(&sizes) {
        if size > 0 {
            for v in c.iter_mut() {
                *v /= size as f64;
            }
        }
    }
    out
}

/// Mean silhouette over all points. A point in a singleton cluster scores
/// zero. Requires at least two clusters.
pub fn silhouette_coefficient(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let k = validate(points, assignments)?;
    let sizes = cluster_sizes(assignments, k);
    let occupied = sizes.iter().filter(|&&s| s > 0).count();
    if occupied < 2 {
        return Err(Error::Degenerate("silhouette needs at least two clusters".to_string()));
    }
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        // Mean distance to every cluster.
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += dist(&points[i], &points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    Ok(total / n as f64)
}

/// Between-cluster over within-cluster dispersion, scaled by the degrees
/// of freedom. Larger is better. Requires `1 < k < n`.
pub fn calinski_harabasz_index(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let k_max = validate(points, assignments)?;
    let sizes = cluster_sizes(assignments, k_max);
    let k = sizes.iter().filter(|&&s| s > 0).count();
    let n = points.len();
    if k < 2 || n <= k {
        return Err(Error::Degenerate(format!(
            "dispersion ratio undefined for {} clusters over {} points",
            k, n
        )));
    }
    let dim = points[0].len();
    let per_cluster = centroids(points, assignments, k_max);
    let mut global = vec![0.0; dim];
    for p in points {
        for (g, v) in global.iter_mut().zip(p) {
            *g += v / n as f64;
        }
    }
    let mut between = 0.0;
    for (c, &size) in per_cluster.iter().zip(&sizes) {
        if size > 0 {
            let d = dist(c, &global);
            between += size as f64 * d * d;
        }
    }
    let mut within = 0.0;
    for (p, &a) in points.iter().zip(assignments) {
        let d = dist(p, &per_cluster[a]);
        within += d * d;
    }
    if within == 0.0 {
        // Perfectly tight clusters: the ratio diverges.
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Mean over clusters of the worst-case similarity to another cluster.
/// Smaller is better. Requires at least two clusters.
pub fn davies_bouldin_index(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let k_max = validate(points, assignments)?;
    let sizes = cluster_sizes(assignments, k_max);
    let occupied: Vec<usize> =
        (0..k_max).filter(|&c| sizes[c] > 0).collect();
    if occupied.len() < 2 {
        return Err(Error::Degenerate("cluster similarity needs two clusters".to_string()));
    }
    let per_cluster = centroids(points, assignments, k_max);
    // Mean distance of each cluster's points to its centroid.
    let mut scatter = vec![0.0; k_max];
    for (p, &a) in points.iter().zip(assignments) {
        scatter[a] += dist(p, &per_cluster[a]) / sizes[a] as f64;
    }
    let mut total = 0.0;
    for &i in &occupied {
        let mut worst = 0.0f64;
        for &j in &occupied {
            if i != j {
                let separation = dist(&per_cluster[i], &per_cluster[j]);
                let ratio = if separation == 0.0 {
                    f64::INFINITY
                } else {
                    (scatter[i] + scatter[j]) / separation
                };
                worst = worst.max(ratio);
            }
        }
        total += worst;
    }
    Ok(total / occupied.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_tight_blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ];
        (points, vec![0, 0, 1, 1])
    }

    // Direct per-point silhouette oracle, written as the plain definition.
    fn silhouette_oracle(points: &[Vec<f64>], assignments: &[usize]) -> f64 {
        let n = points.len();
        let mut total = 0.0;
        for i in 0..n {
            let same: Vec<usize> =
                (0..n).filter(|&j| j != i && assignments[j] == assignments[i]).collect();
            if same.is_empty() {
                continue;
            }
            let a: f64 =
                same.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            let clusters: std::collections::BTreeSet<usize> =
                assignments.iter().copied().collect();
            for c in clusters {
                if c == assignments[i] {
                    continue;
                }
                let other: Vec<usize> = (0..n).filter(|&j| assignments[j] == c).collect();
                let mean =
                    other.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>()
                        / other.len() as f64;
                b = b.min(mean);
            }
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn silhouette_on_separated_blobs_matches_hand_computation() {
        let (points, assignments) = two_tight_blobs();
        let sc = silhouette_coefficient(&points, &assignments).unwrap();
        // Every point: a = 1, b = (10 + sqrt(101)) / 2.
        let b = (10.0 + 101.0f64.sqrt()) / 2.0;
        let expected = (b - 1.0) / b;
        assert!((sc - expected).abs() < 1e-12, "{} vs {}", sc, expected);
        assert!((sc - silhouette_oracle(&points, &assignments)).abs() < 1e-12);
    }

    #[test]
    fn silhouette_matches_oracle_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..10 {
            let n = 12 + trial;
            let points: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let assignments: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            if assignments.iter().collect::<std::collections::BTreeSet<_>>().len() < 2 {
                continue;
            }
            let sc = silhouette_coefficient(&points, &assignments).unwrap();
            let reference = silhouette_oracle(&points, &assignments);
            assert!((sc - reference).abs() < 1e-10, "trial {}: {} vs {}", trial, sc, reference);
            assert!((-1.0..=1.0).contains(&sc));
        }
    }

    #[test]
    fn singleton_cluster_contributes_zero() {
        let points = vec![vec![0.0], vec![0.1], vec![5.0]];
        let assignments = vec![0, 0, 1];
        let sc = silhouette_coefficient(&points, &assignments).unwrap();
        let reference = silhouette_oracle(&points, &assignments);
        assert!((sc - reference).abs() < 1e-12);
        // The singleton point adds nothing; only the pair contributes.
        assert!(sc > 0.0 && sc < 2.0 / 3.0 + 1e-12);
    }

    #[test]
    fn dispersion_ratio_matches_direct_formula() {
        let (points, assignments) = two_tight_blobs();
        let chi = calinski_harabasz_index(&points, &assignments).unwrap();
        // Centroids (0, 0.5) and (10, 0.5); global mean (5, 0.5).
        // Between = 4 * 25 = 100, within = 4 * 0.25 = 1.
        let expected = (100.0 / 1.0) * ((4 - 2) as f64 / (2 - 1) as f64);
        assert!((chi - expected).abs() < 1e-9, "{} vs {}", chi, expected);
    }

    #[test]
    fn cluster_similarity_matches_direct_formula() {
        let (points, assignments) = two_tight_blobs();
        let dbi = davies_bouldin_index(&points, &assignments).unwrap();
        // Both clusters: scatter 0.5, separation 10.
        let expected = (0.5 + 0.5) / 10.0;
        assert!((dbi - expected).abs() < 1e-12, "{} vs {}", dbi, expected);
    }

    #[test]
    fn tighter_clusters_score_better_on_all_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let spread_of = |spread: f64, rng: &mut ChaCha8Rng| -> (Vec<Vec<f64>>, Vec<usize>) {
            let mut points = Vec::new();
            let mut assignments = Vec::new();
            for (c, center) in [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]].iter().enumerate() {
                for _ in 0..15 {
                    points.push(vec![
                        center[0] + rng.gen_range(-spread..spread),
                        center[1] + rng.gen_range(-spread..spread),
                    ]);
                    assignments.push(c);
                }
            }
            (points, assignments)
        };
        let (tight_p, tight_a) = spread_of(0.3, &mut rng);
        let (loose_p, loose_a) = spread_of(2.5, &mut rng);
        assert!(
            silhouette_coefficient(&tight_p, &tight_a).unwrap()
                > silhouette_coefficient(&loose_p, &loose_a).unwrap()
        );
        assert!(
            calinski_harabasz_index(&tight_p, &tight_a).unwrap()
                > calinski_harabasz_index(&loose_p, &loose_a).unwrap()
        );
        assert!(
            davies_bouldin_index(&tight_p, &tight_a).unwrap()
                < davies_bouldin_index(&loose_p, &loose_a).unwrap()
        );
    }

    #[test]
    fn degenerate_cluster_counts_are_reported() {
        let points = vec![vec![0.0], vec![1.0], vec![2.0]];
        let one_cluster = vec![0, 0, 0];
        assert!(silhouette_coefficient(&points, &one_cluster).is_err());
        assert!(calinski_harabasz_index(&points, &one_cluster).is_err());
        assert!(davies_bouldin_index(&points, &one_cluster).is_err());
        // k = n leaves no within-cluster degrees of freedom.
        let all_singletons = vec![0, 1, 2];
        assert!(calinski_harabasz_index(&points, &all_singletons).is_err());
    }
}
