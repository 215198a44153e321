mod common;

use common::*;
use sdec_core::alignment::{alignment_loss, loss_curve_csv, loss_gradient, train_alignment, AlignmentPair, LrSchedule};
use sdec_core::synthetic::random_orthogonal;
use sdec_core::{AlignmentError, AlignmentHead, TrainConfig};

fn e(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

#[test]
fn two_row_orthonormal_hand_value() {
    // student = teacher = text = {e1, e2}; logits are 1/tau on the diagonal
    // and 0 elsewhere, so every row contributes the same two terms
    let rows = vec![e(2, 0), e(2, 1)];
    let (ts, tt) = (0.1f64, 0.05f64);
    let p_teacher_diag = 1.0 / (1.0 + (-1.0 / tt).exp());
    let log_q_diag = -(1.0 + (-1.0 / ts).exp()).ln();
    let log_q_off = -1.0 / ts + log_q_diag;
    let distill = -(p_teacher_diag * log_q_diag + (1.0 - p_teacher_diag) * log_q_off);
    let cross = -log_q_diag;

    let without = alignment_loss(&rows, &rows, None, ts, tt).unwrap();
    assert!((without - distill).abs() < 1e-12, "{without} vs {distill}");
    let with = alignment_loss(&rows, &rows, Some(&rows), ts, tt).unwrap();
    assert!((with - (distill + cross)).abs() < 1e-12, "{with} vs {}", distill + cross);

    let head = AlignmentHead::identity(2, ts, tt).unwrap();
    let (loss, _) = loss_gradient(&head, &rows, &rows, Some(&rows)).unwrap();
    assert!((loss - with).abs() < 1e-12);
}

#[test]
fn loss_is_scale_invariant() {
    let mut r = rng(3);
    let s: Vec<Vec<f64>> = (0..6).map(|_| gaussian(5, &mut r)).collect();
    let t: Vec<Vec<f64>> = (0..6).map(|_| gaussian(5, &mut r)).collect();
    let scaled: Vec<Vec<f64>> = s.iter().map(|v| v.iter().map(|x| 7.5 * x).collect()).collect();
    let a = alignment_loss(&s, &t, Some(&t), 0.1, 0.05).unwrap();
    let b = alignment_loss(&scaled, &t, Some(&t), 0.1, 0.05).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn matching_temperatures_make_the_teacher_a_stationary_point() {
    // with tau_s = tau_t and no text term, the identity head reproduces the
    // teacher distribution exactly, so the gradient vanishes
    let mut r = rng(4);
    let t: Vec<Vec<f64>> = (0..8).map(|_| unit(6, &mut r)).collect();
    let head = AlignmentHead::identity(6, 0.07, 0.07).unwrap();
    let (_, grad) = loss_gradient(&head, &t, &t, None).unwrap();
    assert!(grad.norm() < 1e-10, "gradient norm {}", grad.norm());
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(5);
    let (din, dout, b) = (5, 4, 6);
    let x: Vec<Vec<f64>> = (0..b).map(|_| gaussian(din, &mut r)).collect();
    let t: Vec<Vec<f64>> = (0..b).map(|_| gaussian(dout, &mut r)).collect();
    let w: Vec<Vec<f64>> = (0..b).map(|_| gaussian(dout, &mut r)).collect();
    let weight = gaussian(din * dout, &mut r);
    let bias = gaussian(dout, &mut r);
    let head = AlignmentHead::new(din, dout, weight.clone(), bias.clone(), 0.2, 0.1).unwrap();
    let (_, grad) = loss_gradient(&head, &x, &t, Some(&w)).unwrap();

    let loss_at = |weight: Vec<f64>, bias: Vec<f64>| {
        let h = AlignmentHead::new(din, dout, weight, bias, 0.2, 0.1).unwrap();
        let out: Vec<Vec<f64>> = x.iter().map(|v| h.forward(v).unwrap()).collect();
        alignment_loss(&out, &t, Some(&w), 0.2, 0.1).unwrap()
    };
    let h = 1e-5;
    for i in 0..weight.len() {
        let (mut up, mut down) = (weight.clone(), weight.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (loss_at(up, bias.clone()) - loss_at(down, bias.clone())) / (2.0 * h);
        assert!((fd - grad.weight[i]).abs() < 1e-6 * fd.abs().max(1.0), "weight {i}: {fd} vs {}", grad.weight[i]);
    }
    for i in 0..bias.len() {
        let (mut up, mut down) = (bias.clone(), bias.clone());
        up[i] += h;
        down[i] -= h;
        let fd = (loss_at(weight.clone(), up) - loss_at(weight.clone(), down)) / (2.0 * h);
        assert!((fd - grad.bias[i]).abs() < 1e-6 * fd.abs().max(1.0), "bias {i}: {fd} vs {}", grad.bias[i]);
    }
}

fn rotation_pairs(n: usize, dim: usize, seed: u64) -> Vec<AlignmentPair> {
    let mut r = rng(seed);
    let q = random_orthogonal(dim, &mut r);
    (0..n)
        .map(|_| {
            let x = unit(dim, &mut r);
            let y: Vec<f64> = q.iter().map(|row| dot(row, &x)).collect();
            AlignmentPair { input: x, teacher_img: y.clone(), teacher_txt: Some(y) }
        })
        .collect()
}

#[test]
fn zero_epochs_returns_the_initial_head() {
    let pairs = rotation_pairs(10, 4, 1);
    let init = AlignmentHead::init(4, 4, 99, 0.1, 0.05).unwrap();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let out = train_alignment(&pairs, &cfg, Some(init.clone())).unwrap();
    assert_eq!(out.head, init);
    assert!(out.loss_curve.is_empty());
    assert_eq!(loss_curve_csv(&out.loss_curve), "epoch,loss\n");
}

#[test]
fn fixed_seed_is_bit_identical() {
    let pairs = rotation_pairs(64, 6, 2);
    let cfg = TrainConfig { learning_rate: 0.5, epochs: 20, batch_size: 16, seed: 7, ..TrainConfig::default() };
    let a = train_alignment(&pairs, &cfg, None).unwrap();
    let b = train_alignment(&pairs, &cfg, None).unwrap();
    assert_eq!(a.head.to_bytes(), b.head.to_bytes());
    let bits = |c: &[f64]| c.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loss_curve), bits(&b.loss_curve));
    let c = train_alignment(&pairs, &TrainConfig { seed: 8, ..cfg }, None).unwrap();
    assert_ne!(a.head.to_bytes(), c.head.to_bytes());
}

#[test]
fn full_batch_loss_decreases_monotonically() {
    let pairs = rotation_pairs(200, 8, 3);
    let cfg = TrainConfig { learning_rate: 0.5, epochs: 200, warmup_fraction: 0.0, ..TrainConfig::default() };
    let out = train_alignment(&pairs, &cfg, None).unwrap();
    for (i, w) in out.loss_curve.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-6, "epoch {}: {} -> {}", i + 2, w[0], w[1]);
    }
    assert!(out.loss_curve.last().unwrap() < &(0.5 * out.loss_curve[0]));
}

#[test]
fn schedule_warms_up_then_decays() {
    let s = LrSchedule::new(1.0, 0.1, 100);
    assert!((s.at(0) - 0.1).abs() < 1e-12);
    assert!((s.at(9) - 1.0).abs() < 1e-12);
    assert!((s.at(10) - 1.0).abs() < 1e-12);
    // halfway through the 90 decay steps
    assert!((s.at(55) - 0.5).abs() < 1e-12);
    assert!(s.at(99) > 0.0 && s.at(99) < 1e-3);
    for step in 10..99 {
        assert!(s.at(step + 1) <= s.at(step));
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let pairs = rotation_pairs(4, 3, 4);
    let cfg = TrainConfig::default();
    assert!(matches!(train_alignment(&pairs[..1], &cfg, None), Err(AlignmentError::NotEnoughRows { .. })));
    let wrong = AlignmentHead::identity(2, 0.1, 0.05).unwrap();
    assert!(matches!(train_alignment(&pairs, &cfg, Some(wrong)), Err(AlignmentError::HeadDims { .. })));
    let mut nan = pairs.clone();
    nan[0].input[0] = f64::NAN;
    assert!(matches!(train_alignment(&nan, &cfg, None), Err(AlignmentError::NonFiniteInput)));
    let mut zero = pairs.clone();
    zero[1].teacher_img = vec![0.0; 3];
    assert!(matches!(train_alignment(&zero, &cfg, None), Err(AlignmentError::ZeroRow { .. })));
    for bad in [
        TrainConfig { learning_rate: 0.0, ..cfg.clone() },
        TrainConfig { batch_size: 1, ..cfg.clone() },
        TrainConfig { tau_student: -1.0, ..cfg.clone() },
        TrainConfig { warmup_fraction: 1.5, ..cfg.clone() },
    ] {
        assert!(train_alignment(&pairs, &bad, None).is_err());
    }
    assert!(matches!(alignment_loss(&[e(2, 0)], &[e(2, 0)], None, 0.1, 0.05), Err(AlignmentError::BatchTooSmall(1))));
}
