//! Affine alignment of uni-modal embeddings into the multi-modal space,
//! trained by self-distillation plus a cross-modal text constraint.

mod head;
mod loss;
mod train;

pub use head::{load_head, save_head, AlignmentHead, HEAD_MAGIC, HEAD_VERSION};
pub use loss::{alignment_loss, loss_gradient, HeadGradient};
pub use train::{loss_curve_csv, train_alignment, AlignmentPair, LrSchedule, TrainConfig, TrainOutcome};

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum AlignmentError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("head maps {head_in} -> {head_out} but {expected_in} -> {expected_out} is required")]
    HeadDims { head_in: usize, head_out: usize, expected_in: usize, expected_out: usize },
    #[error("inconsistent head shape: {dim_out}x{dim_in} with {weight_len} weights and {bias_len} biases")]
    Shape { dim_in: usize, dim_out: usize, weight_len: usize, bias_len: usize },
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("non-finite head parameter")]
    NonFiniteParameter,
    #[error("non-finite input vector")]
    NonFiniteInput,
    #[error("batch size {0} is below the minimum of 2")]
    BatchTooSmall(usize),
    #[error("batch sizes differ: student {student}, teacher {teacher}, text {text:?}")]
    UnequalBatches { student: usize, teacher: usize, text: Option<usize> },
    #[error("zero-norm row {row} in {batch} batch")]
    ZeroRow { batch: &'static str, row: usize },
    #[error("need at least {needed} training rows, got {rows}")]
    NotEnoughRows { rows: usize, needed: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}
