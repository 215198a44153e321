use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_gradient_unit, UnitRows};
use super::{AlignmentError, AlignmentHead};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Rows per step; batches larger than the data set are full-batch.
    pub batch_size: usize,
    pub seed: u64,
    pub tau_student: f64,
    pub tau_teacher: f64,
    /// Fraction of all steps spent in linear warm-up before cosine decay.
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 4096,
            seed: 0,
            tau_student: 0.1,
            tau_teacher: 0.05,
            warmup_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        let bad = |msg: &str| Err(AlignmentError::Config(msg.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1]");
        }
        for tau in [self.tau_student, self.tau_teacher] {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(AlignmentError::Temperature(tau));
            }
        }
        Ok(())
    }
}

/// Linear warm-up to the base rate, then cosine decay to zero.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    base: f64,
    warmup_steps: usize,
    total_steps: usize,
}

impl LrSchedule {
    pub fn new(base: f64, warmup_fraction: f64, total_steps: usize) -> Self {
        let warmup_steps = ((warmup_fraction * total_steps as f64).round() as usize).min(total_steps);
        Self { base, warmup_steps, total_steps }
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.base * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let decay_steps = (self.total_steps - self.warmup_steps).max(1) as f64;
        let progress = (step - self.warmup_steps) as f64 / decay_steps;
        0.5 * self.base * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// One training example: a uni-modal input and its multi-modal targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPair {
    pub input: Vec<f64>,
    pub teacher_img: Vec<f64>,
    pub teacher_txt: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: AlignmentHead,
    /// Mean pre-update batch loss, one entry per epoch.
    pub loss_curve: Vec<f64>,
}

/// Trains `init` (or a seeded Gaussian head) with plain gradient descent.
///
/// The cross-modal term is used only when every pair carries a text target.
/// Results are bit-identical for a fixed config, independent of the rayon
/// thread count.
pub fn train_alignment(
    pairs: &[AlignmentPair],
    config: &TrainConfig,
    init: Option<AlignmentHead>,
) -> Result<TrainOutcome, AlignmentError> {
    config.validate()?;
    if pairs.len() < 2 {
        return Err(AlignmentError::NotEnoughRows { rows: pairs.len(), needed: 2 });
    }
    let dim_in = pairs[0].input.len();
    let dim_out = pairs[0].teacher_img.len();
    for p in pairs {
        if p.input.len() != dim_in {
            return Err(AlignmentError::DimMismatch { expected: dim_in, actual: p.input.len() });
        }
        if p.input.iter().any(|v| !v.is_finite()) {
            return Err(AlignmentError::NonFiniteInput);
        }
    }
    let mut head = match init {
        Some(h) => {
            h.expect_dims(dim_in, dim_out)?;
            h
        }
        None => AlignmentHead::init(dim_in, dim_out, config.seed, config.tau_student, config.tau_teacher)?,
    };

    let inputs: Vec<Vec<f64>> = pairs.iter().map(|p| p.input.clone()).collect();
    let teacher_rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.teacher_img.clone()).collect();
    let teacher = UnitRows::new(&teacher_rows, "teacher_img")?;
    let text = if pairs.iter().all(|p| p.teacher_txt.is_some()) {
        let rows: Vec<Vec<f64>> = pairs.iter().map(|p| p.teacher_txt.clone().unwrap()).collect();
        Some(UnitRows::new(&rows, "teacher_txt")?)
    } else {
        if pairs.iter().any(|p| p.teacher_txt.is_some()) {
            log::warn!("some pairs lack a text target; training without the cross-modal term");
        }
        None
    };

    let n = pairs.len();
    let batch = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let batches_per_epoch = n / batch;
    let schedule = LrSchedule::new(config.learning_rate, config.warmup_fraction, config.epochs * batches_per_epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5de0_a119);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        // a trailing partial batch is dropped so every step sees `batch` rows
        for idx in order.chunks_exact(batch) {
            let (x, t, w);
            let (inputs_b, teacher_b, text_b) = if batch == n {
                (&inputs[..], &teacher, text.as_ref())
            } else {
                x = idx.iter().map(|&i| inputs[i].clone()).collect::<Vec<_>>();
                t = teacher.select(idx);
                w = text.as_ref().map(|w| w.select(idx));
                (&x[..], &t, w.as_ref())
            };
            let (loss, grad) = loss_gradient_unit(&head, inputs_b, teacher_b, text_b)?;
            if !loss.is_finite() {
                return Err(AlignmentError::NonFiniteLoss { epoch, step });
            }
            epoch_loss += loss;
            let lr = schedule.at(step);
            let (weight, bias) = head.params_mut();
            for (p, g) in weight.iter_mut().zip(&grad.weight).chain(bias.iter_mut().zip(&grad.bias)) {
                *p -= lr * g;
            }
            if weight.iter().chain(bias.iter()).any(|p| !p.is_finite()) {
                return Err(AlignmentError::NonFiniteLoss { epoch, step });
            }
            step += 1;
        }
        let mean = epoch_loss / batches_per_epoch as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { head, loss_curve })
}

/// Renders a loss curve as `epoch,loss` CSV with 1-based epochs.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, loss) in curve.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    out
}
