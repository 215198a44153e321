//! Distillation objective for the alignment head and its analytic gradient.
//!
//! For a batch of `B` student outputs `s_i`, teacher image embeddings `t_i`
//! and (optionally) teacher text embeddings `w_i`, all compared by cosine:
//!
//! ```text
//! P_teacher(i) = softmax_j(cos(t_i, t_j) / tau_t)
//! P_img(i)     = softmax_j(cos(s_i, t_j) / tau_s)
//! P_txt(i)     = softmax_j(cos(s_i, w_j) / tau_s)
//! L = 1/B * sum_i [ H(P_teacher(i), P_img(i)) + H(onehot(i), P_txt(i)) ]
//! ```
//!
//! The second term is dropped when no text batch is given.

use rayon::prelude::*;

use super::{AlignmentError, AlignmentHead};
use crate::vector::{dot, norm};

/// A batch of rows already scaled to unit length.
#[derive(Debug, Clone)]
pub(crate) struct UnitRows(Vec<Vec<f64>>);

impl UnitRows {
    pub(crate) fn new(rows: &[Vec<f64>], batch: &'static str) -> Result<Self, AlignmentError> {
        rows.iter()
            .enumerate()
            .map(|(row, v)| {
                let n = norm(v);
                if !(n.is_finite() && n > crate::decouple::ZERO_NORM) {
                    return Err(AlignmentError::ZeroRow { batch, row });
                }
                Ok(v.iter().map(|x| x / n).collect())
            })
            .collect::<Result<_, _>>()
            .map(Self)
    }

    pub(crate) fn select(&self, idx: &[usize]) -> Self {
        Self(idx.iter().map(|&i| self.0[i].clone()).collect())
    }

    fn len(&self) -> usize {
        self.0.len()
    }

    fn dim(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }
}

fn log_softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    for z in logits.iter_mut() {
        *z -= lse;
    }
}

/// Loss of row `i` and, if requested, its gradient w.r.t. the unit student
/// vector `u`.
fn row_terms(
    i: usize,
    u: &[f64],
    teacher: &UnitRows,
    text: Option<&UnitRows>,
    tau_s: f64,
    tau_t: f64,
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let b = teacher.len();
    let mut target: Vec<f64> = teacher.0.iter().map(|t| dot(&teacher.0[i], t) / tau_t).collect();
    log_softmax(&mut target);
    let mut student: Vec<f64> = teacher.0.iter().map(|t| dot(u, t) / tau_s).collect();
    log_softmax(&mut student);
    let mut loss: f64 = target.iter().zip(&student).map(|(lt, ls)| -lt.exp() * ls).sum();

    let mut grad = want_grad.then(|| vec![0.0; u.len()]);
    if let Some(g) = grad.as_mut() {
        for j in 0..b {
            let coeff = (student[j].exp() - target[j].exp()) / tau_s;
            for (gk, tk) in g.iter_mut().zip(&teacher.0[j]) {
                *gk += coeff * tk;
            }
        }
    }

    if let Some(text) = text {
        let mut logits: Vec<f64> = text.0.iter().map(|w| dot(u, w) / tau_s).collect();
        log_softmax(&mut logits);
        loss -= logits[i];
        if let Some(g) = grad.as_mut() {
            for (j, (lj, w)) in logits.iter().zip(&text.0).enumerate() {
                let coeff = (lj.exp() - if i == j { 1.0 } else { 0.0 }) / tau_s;
                for (gk, wk) in g.iter_mut().zip(w) {
                    *gk += coeff * wk;
                }
            }
        }
    }
    (loss, grad)
}

fn check_batches(student: usize, teacher: &UnitRows, text: Option<&UnitRows>) -> Result<(), AlignmentError> {
    let b = teacher.len();
    if b < 2 {
        return Err(AlignmentError::BatchTooSmall(b));
    }
    if student != b || text.is_some_and(|t| t.len() != b) {
        return Err(AlignmentError::UnequalBatches { student, teacher: b, text: text.map(UnitRows::len) });
    }
    if let Some(t) = text {
        if t.dim() != teacher.dim() {
            return Err(AlignmentError::DimMismatch { expected: teacher.dim(), actual: t.dim() });
        }
    }
    Ok(())
}

/// The alignment objective on raw (not necessarily unit) batches.
pub fn alignment_loss(
    student: &[Vec<f64>],
    teacher_img: &[Vec<f64>],
    teacher_txt: Option<&[Vec<f64>]>,
    tau_s: f64,
    tau_t: f64,
) -> Result<f64, AlignmentError> {
    for tau in [tau_s, tau_t] {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(AlignmentError::Temperature(tau));
        }
    }
    let teacher = UnitRows::new(teacher_img, "teacher_img")?;
    let text = teacher_txt.map(|t| UnitRows::new(t, "teacher_txt")).transpose()?;
    check_batches(student.len(), &teacher, text.as_ref())?;
    let student = UnitRows::new(student, "student")?;
    if student.dim() != teacher.dim() {
        return Err(AlignmentError::DimMismatch { expected: teacher.dim(), actual: student.dim() });
    }
    let losses: Vec<f64> = (0..student.len())
        .into_par_iter()
        .map(|i| row_terms(i, &student.0[i], &teacher, text.as_ref(), tau_s, tau_t, false).0)
        .collect();
    Ok(losses.iter().sum::<f64>() / student.len() as f64)
}

/// Gradient of the loss with respect to the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    /// Row-major, same layout as [`AlignmentHead::weight`].
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGradient {
    pub fn norm(&self) -> f64 {
        self.weight.iter().chain(&self.bias).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Loss and analytic gradient for `head` applied to `inputs`.
pub fn loss_gradient(
    head: &AlignmentHead,
    inputs: &[Vec<f64>],
    teacher_img: &[Vec<f64>],
    teacher_txt: Option<&[Vec<f64>]>,
) -> Result<(f64, HeadGradient), AlignmentError> {
    let teacher = UnitRows::new(teacher_img, "teacher_img")?;
    let text = teacher_txt.map(|t| UnitRows::new(t, "teacher_txt")).transpose()?;
    loss_gradient_unit(head, inputs, &teacher, text.as_ref())
}

pub(crate) fn loss_gradient_unit(
    head: &AlignmentHead,
    inputs: &[Vec<f64>],
    teacher: &UnitRows,
    text: Option<&UnitRows>,
) -> Result<(f64, HeadGradient), AlignmentError> {
    check_batches(inputs.len(), teacher, text)?;
    if teacher.dim() != head.dim_out() {
        return Err(AlignmentError::DimMismatch { expected: head.dim_out(), actual: teacher.dim() });
    }
    for x in inputs {
        if x.len() != head.dim_in() {
            return Err(AlignmentError::DimMismatch { expected: head.dim_in(), actual: x.len() });
        }
    }
    let (tau_s, tau_t) = (head.tau_student(), head.tau_teacher());

    // Per-row gradient w.r.t. the raw student output; reduced below in row
    // order so the result does not depend on the thread count.
    let per_row: Vec<Result<(f64, Vec<f64>), AlignmentError>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let s = head.forward_unchecked(x);
            let n = norm(&s);
            if !(n.is_finite() && n > crate::decouple::ZERO_NORM) {
                return Err(AlignmentError::ZeroRow { batch: "student", row: i });
            }
            let u: Vec<f64> = s.iter().map(|v| v / n).collect();
            let (loss, g_u) = row_terms(i, &u, teacher, text, tau_s, tau_t, true);
            let g_u = g_u.expect("gradient requested");
            let radial = dot(&g_u, &u);
            let g_s = g_u.iter().zip(&u).map(|(g, uk)| (g - radial * uk) / n).collect();
            Ok((loss, g_s))
        })
        .collect();

    let b = inputs.len() as f64;
    let (din, dout) = (head.dim_in(), head.dim_out());
    let mut loss = 0.0;
    let mut weight = vec![0.0; din * dout];
    let mut bias = vec![0.0; dout];
    for (row, x) in per_row.into_iter().zip(inputs) {
        let (l, g_s) = row?;
        loss += l;
        for (r, gr) in g_s.iter().enumerate() {
            bias[r] += gr / b;
            let w_row = &mut weight[r * din..(r + 1) * din];
            for (w, xk) in w_row.iter_mut().zip(x) {
                *w += gr * xk / b;
            }
        }
    }
    Ok((loss / b, HeadGradient { weight, bias }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthonormal_pair_hand_value() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let loss = alignment_loss(&rows, &rows, Some(&rows), 1.0, 1.0).unwrap();
        let p = 1.0f64.exp() / (1.0 + 1.0f64.exp());
        let entropy = -(p * p.ln() + (1.0 - p) * (1.0 - p).ln());
        let cross_modal = (1.0 + (-1.0f64).exp()).ln();
        assert!((cross_modal - 0.3133).abs() < 1e-4);
        assert!((loss - (entropy + cross_modal)).abs() < 1e-12, "{loss}");
    }

    #[test]
    fn high_temperature_limit() {
        let s = vec![vec![1.0, 0.2], vec![0.1, 1.0], vec![-1.0, 0.3]];
        let t = vec![vec![0.5, 0.2], vec![0.3, -1.0], vec![1.0, 1.0]];
        let text_only =
            alignment_loss(&s, &t, Some(&t), 1e9, 1.0).unwrap() - alignment_loss(&s, &t, None, 1e9, 1.0).unwrap();
        assert!((text_only - 3.0f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_batches() {
        let one = vec![vec![1.0, 0.0]];
        assert!(matches!(alignment_loss(&one, &one, None, 1.0, 1.0), Err(AlignmentError::BatchTooSmall(1))));
        let two = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        let ok = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(alignment_loss(&two, &ok, None, 1.0, 1.0), Err(AlignmentError::ZeroRow { .. })));
        let three = vec![vec![1.0, 0.0]; 3];
        assert!(matches!(alignment_loss(&three, &ok, None, 1.0, 1.0), Err(AlignmentError::UnequalBatches { .. })));
    }
}
