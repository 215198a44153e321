//! Agreement between a predicted clustering and ground-truth labels.

use std::collections::HashMap;
use std::hash::Hash;

use super::EvalError;

/// Maps arbitrary labels onto `0..distinct` in order of first appearance.
pub fn encode_labels<T: Eq + Hash + Clone>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<T, usize> = HashMap::new();
    let encoded = labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect();
    (encoded, ids.len())
}

fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<u64>>, usize, usize) {
    let (p, np) = encode_labels(pred);
    let (t, nt) = encode_labels(truth);
    let mut table = vec![vec![0u64; nt]; np];
    for (&a, &b) in p.iter().zip(&t) {
        table[a][b] += 1;
    }
    (table, np, nt)
}

/// Minimum-cost perfect matching on a square matrix (Kuhn-Munkres with
/// potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials; column 0 is the virtual start
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_v[j] {
                        min_v[j] = cur;
                        way[j] = j0;
                    }
                    if min_v[j] < delta {
                        delta = min_v[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            assignment[row_of[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Best one-to-one cluster-to-label agreement, as a fraction of items.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::TooFewItems { n: 0, needed: 1 });
    }
    let (table, np, nt) = contingency(pred, truth);
    let size = np.max(nt);
    let cost: Vec<Vec<i64>> = (0..size)
        .map(|r| (0..size).map(|c| if r < np && c < nt { -(table[r][c] as i64) } else { 0 }).collect())
        .collect();
    let matched: u64 =
        hungarian(&cost).into_iter().enumerate().filter(|&(r, c)| r < np && c < nt).map(|(r, c)| table[r][c]).sum();
    Ok(matched as f64 / pred.len() as f64)
}

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index from the contingency table.
///
/// When both partitions are trivial (one cluster each, or all singletons)
/// the index is undefined; they are then identical and 1 is returned.
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch { left: pred.len(), right: truth.len() });
    }
    let n = pred.len();
    if n < 2 {
        return Err(EvalError::TooFewItems { n, needed: 2 });
    }
    let (table, _, nt) = contingency(pred, truth);
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let row_sums: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let col_sums: f64 = (0..nt).map(|c| pairs(table.iter().map(|r| r[c]).sum())).sum();
    let expected = row_sums * col_sums / pairs(n as u64);
    let max_index = 0.5 * (row_sums + col_sums);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acc_examples() {
        assert_eq!(clustering_accuracy(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(clustering_accuracy(&[2, 0, 1, 1], &[2, 0, 1, 1]).unwrap(), 1.0);
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn acc_with_unequal_cluster_counts() {
        // three clusters against two labels: one cluster stays unmatched
        assert_eq!(clustering_accuracy(&[0, 0, 1, 2], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(clustering_accuracy(&[0, 0, 0, 0], &[0, 1, 2, 2]).unwrap(), 0.5);
    }

    #[test]
    fn ari_examples() {
        assert!((adjusted_rand_index(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(adjusted_rand_index(&[3, 3, 5, 5], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 1, 2], &[2, 1, 0]).unwrap(), 1.0);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = hungarian(&cost);
        let total: i64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5);
    }
}
