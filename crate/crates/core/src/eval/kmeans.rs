use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::vector::squared_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Lloyd iterations stop once no center moves farther than this.
    pub tol: f64,
    /// Independent k-means++ starts; the lowest inertia wins.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-6, restarts: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning run.
    pub inertia_history: Vec<f64>,
    pub restart: usize,
}

fn nearest(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // all remaining points coincide with a center
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[next] = true;
        centers.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &points[next]));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64, opts: &KMeansOptions, restart: usize) -> KMeansResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = points[0].len();
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut history = Vec::new();
    let mut assignments = vec![0; points.len()];

    for _ in 0..opts.max_iter {
        let mut inertia = 0.0;
        let mut dist = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            assignments[i] = c;
            dist[i] = d;
            inertia += d;
        }
        history.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut reseeded = vec![false; points.len()];
        let mut shift = 0.0f64;
        for c in 0..k {
            let new_center = if counts[c] == 0 {
                // empty cluster: restart it at the worst-fit point
                let far = (0..points.len())
                    .filter(|&i| !reseeded[i])
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("k <= n leaves a candidate");
                reseeded[far] = true;
                dist[far] = 0.0;
                points[far].clone()
            } else {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            };
            shift = shift.max(squared_distance(&centers[c], &new_center).sqrt());
            centers[c] = new_center;
        }
        if shift < opts.tol {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, &centers);
        assignments[i] = c;
        inertia += d;
    }
    history.push(inertia);
    KMeansResult { assignments, centers, inertia, inertia_history: history, restart }
}

/// k-means++ seeded Lloyd iterations, best of `opts.restarts` runs.
///
/// Restarts run in parallel; the winner is chosen by `(inertia, restart)`
/// so the result depends only on `seed`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, opts: &KMeansOptions) -> Result<KMeansResult, EvalError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(EvalError::TooManyClusters { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(EvalError::InvalidPoints);
    }
    let restarts = opts.restarts.max(1);
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let run_seed = seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            lloyd(points, k, run_seed, opts, r)
        })
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart"))
}
