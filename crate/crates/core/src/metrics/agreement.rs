//! Agreement between two labelings of the same items.
//!
//! All three scores are computed from the contingency table. The tests
//! cross-check them against independent pair-counting and distribution
//! definitions, including exhaustively over every pair of set partitions
//! of small item sets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

struct Contingency {
    /// Joint counts keyed by (label in u, label in v).
    cells: BTreeMap<(usize, usize), usize>,
    row_totals: BTreeMap<usize, usize>,
    col_totals: BTreeMap<usize, usize>,
    n: usize,
}

fn contingency(u: &[usize], v: &[usize]) -> Result<Contingency> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            op: "agreement",
            detail: format!("{} vs {} items", u.len(), v.len()),
        });
    }
    if u.is_empty() {
        return Err(Error::Data("agreement needs at least one item".to_string()));
    }
    let mut cells = BTreeMap::new();
    let mut row_totals = BTreeMap::new();
    let mut col_totals = BTreeMap::new();
    for (&a, &b) in u.iter().zip(v) {
        *cells.entry((a, b)).or_insert(0) += 1;
        *row_totals.entry(a).or_insert(0) += 1;
        *col_totals.entry(b).or_insert(0) += 1;
    }
    Ok(Contingency { cells, row_totals, col_totals, n: u.len() })
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index: pair-counting agreement corrected for chance.
/// Returns 1 for identical partitions; near 0 for independent ones. When
/// the chance correction is degenerate (both partitions all-singletons or
/// both one block) the partitions are equal and the score is 1.
pub fn adjusted_rand_index(u: &[usize], v: &[usize]) -> Result<f64> {
    let table = contingency(u, v)?;
    let sum_cells: f64 = table.cells.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = table.row_totals.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = table.col_totals.values().map(|&c| choose2(c)).sum();
    let total_pairs = choose2(table.n);
    if total_pairs == 0.0 {
        // A single item: both partitions are trivially identical.
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total_pairs;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

fn entropy(totals: &BTreeMap<usize, usize>, n: usize) -> f64 {
    totals
        .values()
        .map(|&c| {
            let p = c as f64 / n as f64;
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two constant labelings agree perfectly and score 1; a constant labeling
/// against a varying one carries no information and scores 0.
pub fn normalized_mutual_info(u: &[usize], v: &[usize]) -> Result<f64> {
    let table = contingency(u, v)?;
    let n = table.n as f64;
    let h_u = entropy(&table.row_totals, table.n);
    let h_v = entropy(&table.col_totals, table.n);
    if h_u == 0.0 && h_v == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (&(a, b), &c) in &table.cells {
        let p_joint = c as f64 / n;
        let p_a = table.row_totals[&a] as f64 / n;
        let p_b = table.col_totals[&b] as f64 / n;
        mi += p_joint * (p_joint / (p_a * p_b)).ln();
    }
    // Floating point can leave a tiny negative residue when MI is zero.
    let nmi = (2.0 * mi / (h_u + h_v)).clamp(0.0, 1.0);
    Ok(nmi)
}

/// Fowlkes-Mallows index: geometric mean of pair-level precision and
/// recall. Zero when either partition has no co-clustered pair.
pub fn fowlkes_mallows_index(u: &[usize], v: &[usize]) -> Result<f64> {
    let table = contingency(u, v)?;
    let tp: f64 = table.cells.values().map(|&c| choose2(c)).sum();
    let same_u: f64 = table.row_totals.values().map(|&c| choose2(c)).sum();
    let same_v: f64 = table.col_totals.values().map(|&c| choose2(c)).sum();
    if same_u == 0.0 || same_v == 0.0 {
        return Ok(0.0);
    }
    Ok(tp / (same_u * same_v).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Pair-level confusion counts, computed by brute force over all item
    // pairs. This is the independent oracle the closed forms must match.
    struct PairCounts {
        tp: f64,
        fp: f64,
        fn_: f64,
        tn: f64,
    }

    fn pair_counts(u: &[usize], v: &[usize]) -> PairCounts {
        let mut counts = PairCounts { tp: 0.0, fp: 0.0, fn_: 0.0, tn: 0.0 };
        for i in 0..u.len() {
            for j in (i + 1)..u.len() {
                match (u[i] == u[j], v[i] == v[j]) {
                    (true, true) => counts.tp += 1.0,
                    (false, true) => counts.fp += 1.0,
                    (true, false) => counts.fn_ += 1.0,
                    (false, false) => counts.tn += 1.0,
                }
            }
        }
        counts
    }

    fn ari_oracle(u: &[usize], v: &[usize]) -> f64 {
        let c = pair_counts(u, v);
        let num = 2.0 * (c.tp * c.tn - c.fn_ * c.fp);
        let den = (c.tp + c.fn_) * (c.fn_ + c.tn) + (c.tp + c.fp) * (c.fp + c.tn);
        if den == 0.0 {
            1.0
        } else {
            num / den
        }
    }

    fn fmi_oracle(u: &[usize], v: &[usize]) -> f64 {
        let c = pair_counts(u, v);
        let den = ((c.tp + c.fp) * (c.tp + c.fn_)).sqrt();
        if den == 0.0 {
            0.0
        } else {
            c.tp / den
        }
    }

    fn nmi_oracle(u: &[usize], v: &[usize]) -> f64 {
        // Plain probability sums over observed label pairs.
        let n = u.len() as f64;
        let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut pu: BTreeMap<usize, f64> = BTreeMap::new();
        let mut pv: BTreeMap<usize, f64> = BTreeMap::new();
        for (&a, &b) in u.iter().zip(v) {
            *joint.entry((a, b)).or_insert(0.0) += 1.0 / n;
            *pu.entry(a).or_insert(0.0) += 1.0 / n;
            *pv.entry(b).or_insert(0.0) += 1.0 / n;
        }
        let mi: f64 = joint
            .iter()
            .map(|(&(a, b), &p)| p * (p / (pu[&a] * pv[&b])).ln())
            .sum();
        let hu: f64 = pu.values().map(|&p| -p * p.ln()).sum();
        let hv: f64 = pv.values().map(|&p| -p * p.ln()).sum();
        if hu == 0.0 && hv == 0.0 {
            1.0
        } else if hu + hv == 0.0 {
            0.0
        } else {
            (2.0 * mi / (hu + hv)).clamp(0.0, 1.0)
        }
    }

    /// All set partitions of {0..n}, as canonical label vectors.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        // Restricted growth strings: item i may use any block label up to
        // one past the maximum used so far.
        let mut out = Vec::new();
        let mut current = vec![0usize; n];
        fn recurse(current: &mut Vec<usize>, i: usize, max_used: usize, out: &mut Vec<Vec<usize>>) {
            if i == current.len() {
                out.push(current.clone());
                return;
            }
            for label in 0..=max_used + 1 {
                current[i] = label;
                recurse(current, i + 1, max_used.max(label), out);
            }
        }
        if n > 0 {
            recurse(&mut current, 1, 0, &mut out);
        }
        out
    }

    #[test]
    fn identical_partitions_score_perfectly() {
        let u = vec![0, 0, 1, 2, 2, 1];
        assert!((adjusted_rand_index(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((normalized_mutual_info(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((fowlkes_mallows_index(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        // Relabeling clusters must not matter.
        let relabeled = vec![5, 5, 9, 7, 7, 9];
        assert!((adjusted_rand_index(&u, &relabeled).unwrap() - 1.0).abs() < 1e-12);
        assert!((normalized_mutual_info(&u, &relabeled).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_small_example() {
        // u = [0,0,1,1], v = [0,0,1,2]: one agreeing pair, one split pair.
        let u = vec![0, 0, 1, 1];
        let v = vec![0, 0, 1, 2];
        let ari = adjusted_rand_index(&u, &v).unwrap();
        assert!((ari - 4.0 / 7.0).abs() < 1e-12, "{}", ari);
        let fmi = fowlkes_mallows_index(&u, &v).unwrap();
        assert!((fmi - 1.0 / 2.0f64.sqrt()).abs() < 1e-12, "{}", fmi);
    }

    #[test]
    fn constant_against_varying_carries_no_information() {
        let constant = vec![3, 3, 3, 3];
        let varying = vec![0, 1, 0, 1];
        assert_eq!(normalized_mutual_info(&constant, &varying).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&constant, &varying).unwrap(), 0.0);
    }

    #[test]
    fn exhaustive_partition_pairs_match_the_oracles() {
        // Every ordered pair of set partitions on up to five items.
        for n in 2..=5 {
            let partitions = all_partitions(n);
            for u in &partitions {
                for v in &partitions {
                    let ari = adjusted_rand_index(u, v).unwrap();
                    let ari_ref = ari_oracle(u, v);
                    assert!(
                        (ari - ari_ref).abs() < 1e-10,
                        "ARI {} vs {} on {:?} / {:?}",
                        ari,
                        ari_ref,
                        u,
                        v
                    );
                    let fmi = fowlkes_mallows_index(u, v).unwrap();
                    let fmi_ref = fmi_oracle(u, v);
                    assert!((fmi - fmi_ref).abs() < 1e-10, "FMI on {:?} / {:?}", u, v);
                    let nmi = normalized_mutual_info(u, v).unwrap();
                    let nmi_ref = nmi_oracle(u, v);
                    assert!((nmi - nmi_ref).abs() < 1e-10, "NMI on {:?} / {:?}", u, v);
                    assert!(ari <= 1.0 + 1e-12);
                    assert!((0.0..=1.0 + 1e-12).contains(&nmi));
                    assert!((0.0..=1.0 + 1e-12).contains(&fmi));
                    // Symmetry in the two labelings.
                    assert!((ari - adjusted_rand_index(v, u).unwrap()).abs() < 1e-10);
                    assert!((nmi - normalized_mutual_info(v, u).unwrap()).abs() < 1e-10);
                    assert!((fmi - fowlkes_mallows_index(v, u).unwrap()).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn structured_partners_on_larger_sets() {
        // n = 7 and 8 with a handful of structured labelings instead of
        // the full cross product.
        for n in [7usize, 8] {
            let all_one = vec![0usize; n];
            let singletons: Vec<usize> = (0..n).collect();
            let halves: Vec<usize> = (0..n).map(|i| i / n.div_ceil(2)).collect();
            let alternating: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let cases = [all_one, singletons, halves, alternating];
            for u in &cases {
                for v in &cases {
                    let ari = adjusted_rand_index(u, v).unwrap();
                    assert!((ari - ari_oracle(u, v)).abs() < 1e-10);
                    let nmi = normalized_mutual_info(u, v).unwrap();
                    assert!((nmi - nmi_oracle(u, v)).abs() < 1e-10);
                    let fmi = fowlkes_mallows_index(u, v).unwrap();
                    assert!((fmi - fmi_oracle(u, v)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn independent_labelings_score_near_zero_ari() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 4000;
        let u: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let v: Vec<usize> = (0..n).map(|_| rng.gen_range(0..5)).collect();
        let ari = adjusted_rand_index(&u, &v).unwrap();
        assert!(ari.abs() < 0.02, "ARI {} for independent labelings", ari);
    }
}
