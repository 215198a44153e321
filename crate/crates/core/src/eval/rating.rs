//! Agreement between predicted style scores and human ratings.

use super::EvalError;
use crate::decouple::UNIT_TOLERANCE;
use crate::vector::{dot, norm};

/// 1-based average ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(EvalError::TooFewItems { n: x.len(), needed: 2 });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Maps the cosine between a generated and a reference style vector onto
/// the 1–5 rating scale: `1 + 4 * (cos + 1) / 2`.
pub fn style_score(generated: &[f64], reference: &[f64]) -> Result<f64, EvalError> {
    if generated.len() != reference.len() {
        return Err(EvalError::LengthMismatch { left: generated.len(), right: reference.len() });
    }
    for v in [generated, reference] {
        let n = norm(v);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(EvalError::NotUnit { norm: n });
        }
    }
    let cos = dot(generated, reference).clamp(-1.0, 1.0);
    Ok(1.0 + 4.0 * (cos + 1.0) / 2.0)
}

pub fn mean_absolute_error(predicted: &[f64], target: &[f64]) -> Result<f64, EvalError> {
    if predicted.len() != target.len() {
        return Err(EvalError::LengthMismatch { left: predicted.len(), right: target.len() });
    }
    if predicted.is_empty() {
        return Err(EvalError::TooFewItems { n: 0, needed: 1 });
    }
    Ok(predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // average ranks [1, 2.5, 2.5, 4] vs [1, 3, 2, 4]: 4.5 / sqrt(4.5 * 5)
        let rho = spearman_rho(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 3.0 / 10f64.sqrt()).abs() < 1e-12, "{rho}");
        assert!(matches!(spearman_rho(&[1.0, 1.0], &[1.0, 2.0]), Err(EvalError::ZeroVariance)));
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0; 3]);
    }

    #[test]
    fn score_scale() {
        assert_eq!(style_score(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 5.0);
        assert_eq!(style_score(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(style_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 3.0);
        assert!(matches!(style_score(&[2.0, 0.0], &[1.0, 0.0]), Err(EvalError::NotUnit { .. })));
    }

    #[test]
    fn mae() {
        assert_eq!(mean_absolute_error(&[1.0, 4.0], &[2.0, 2.0]).unwrap(), 1.5);
    }
}
