//! Independent oracles and fixtures shared by the integration tests.
//!
//! Every oracle here is written from the metric's definition, without
//! calling into the crate's own metric code.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v = gaussian(dim, rng);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// AP@k straight from the definition: mean over the first k ranks of
/// precision@i at each relevant rank, divided by min(|R|, k).
pub fn ap_oracle(flags: &[bool], n_relevant: usize, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..k.min(flags.len()) {
        if flags[i] {
            let hits = flags[..=i].iter().filter(|&&f| f).count();
            total += hits as f64 / (i + 1) as f64;
        }
    }
    total / n_relevant.min(k) as f64
}

pub fn recall_any_oracle(flags: &[bool], k: usize) -> f64 {
    if flags.iter().take(k).any(|&f| f) {
        1.0
    } else {
        0.0
    }
}

pub fn recall_proportional_oracle(flags: &[bool], n_relevant: usize, k: usize) -> f64 {
    flags.iter().take(k).filter(|&&f| f).count() as f64 / n_relevant as f64
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best agreement over every injective map from predicted clusters to
/// labels (labels padded so both sides have the same count).
pub fn acc_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let k = kp.max(kt);
    let mut best = 0;
    for perm in permutations(k) {
        let matched = pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count();
        best = best.max(matched);
    }
    best as f64 / pred.len() as f64
}

/// Adjusted Rand index by enumerating every pair of items.
pub fn ari_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len();
    let (mut both, mut in_pred, mut in_truth) = (0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let p = pred[i] == pred[j];
            let t = truth[i] == truth[j];
            both += (p && t) as u8 as f64;
            in_pred += p as u8 as f64;
            in_truth += t as u8 as f64;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = in_pred * in_truth / pairs;
    let max = 0.5 * (in_pred + in_truth);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

/// Average ranks by counting: rank = 1 + #smaller + (#equal - 1) / 2.
pub fn ranks_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let smaller = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks_oracle(x), ranks_oracle(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (pivot_a, pivot_b) = (a[col].clone(), b[col].clone());
        for row in 0..n {
            let f = a[row][col] / pivot_a[col];
            if row != col && f != 0.0 {
                for (x, p) in a[row].iter_mut().zip(&pivot_a).skip(col) {
                    *x -= f * p;
                }
                for (x, p) in b[row].iter_mut().zip(&pivot_b) {
                    *x -= f * p;
                }
            }
        }
    }
    (0..n).map(|i| b[i].iter().map(|v| v / a[i][i]).collect()).collect()
}

/// Closed-form least-squares affine map `y ~ W x + c`, returned as
/// (row-major W, c).
pub fn least_squares_affine(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let din = xs[0].len();
    let dout = ys[0].len();
    // augmented inputs [x, 1]; normal equations (X^T X) B = X^T Y
    let aug: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().copied().chain([1.0]).collect()).collect();
    let m = din + 1;
    let mut xtx = vec![vec![0.0; m]; m];
    let mut xty = vec![vec![0.0; dout]; m];
    for (x, y) in aug.iter().zip(ys) {
        for i in 0..m {
            for j in 0..m {
                xtx[i][j] += x[i] * x[j];
            }
            for j in 0..dout {
                xty[i][j] += x[i] * y[j];
            }
        }
    }
    let beta = solve(xtx, xty); // m x dout
    let mut w = vec![0.0; dout * din];
    for o in 0..dout {
        for i in 0..din {
            w[o * din + i] = beta[i][o];
        }
    }
    let bias = (0..dout).map(|o| beta[din][o]).collect();
    (w, bias)
}
