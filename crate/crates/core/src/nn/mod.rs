//! Small dense networks: ReLU hidden layers with inverted dropout, a linear
//! head, the losses used for classification and alignment, AdamW with a
//! linear warmup/decay schedule, and a deterministic training loop that
//! keeps the epoch with the best dev MAP.
//!
//! Everything runs in `f64`. Checkpoints store `f32`, and models are rounded
//! to `f32` when a checkpoint is taken so a reloaded model computes exactly
//! what the in-memory one did.

mod checkpoint;
mod gradcheck;
mod loss;
mod mlp;
mod optim;
mod train;

pub use checkpoint::{fingerprint, head_bytes, sha256_hex, weight_bytes, Checkpoint, EpochLog, FORMAT_VERSION, MAGIC};
pub use gradcheck::{gradcheck, gradcheck_model, gradcheck_suite, relative_error, GradcheckCase, STEP as GRADCHECK_STEP};
pub use loss::{
    ce_loss, ce_loss_grad, composite_loss, hinge_loss, hinge_loss_grad, mse_loss, mse_loss_grad, positive_scores,
    softmax,
};
pub use mlp::{Dense, Grads, InputBlock, Mlp, MlpSpec, Output, Trace};
pub use optim::{adamw_step, lr_schedule, AdamState};
pub use train::{
    eval_loss, loss_and_grads, predict_scores, train_classifier, train_model, train_model_with, DevSet, Loss,
    TrainConfig, TrainOptions, TrainSet,
};
