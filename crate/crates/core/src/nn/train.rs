use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, EpochLog};
use super::loss::{ce_loss_grad, check_lambda, hinge_loss_grad, mse_loss_grad, positive_scores};
use super::mlp::{Grads, Mlp, MlpSpec, Trace};
use super::optim::{adamw_step, lr_schedule, AdamState};
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::eval::map_of_scores;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub warmup_proportion: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight of the alignment term in the composite loss.
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 15,
            warmup_proportion: 0.1,
            weight_decay: 0.02,
            batch_size: 32,
            seed: 0,
            lambda: 0.75,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_proportion) {
            return Err(Error::Config(format!(
                "warmup proportion {} outside [0, 1]",
                self.warmup_proportion
            )));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("weight decay {} is negative", self.weight_decay)));
        }
        check_lambda(self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Loss {
    /// Softmax cross-entropy on a two-logit head.
    CrossEntropy,
    /// Hinge on a single-score head; label 0 counts as -1.
    Hinge,
    /// MSE between logits and per-row targets.
    LogitMse,
    /// `lambda * mse(rep, targets) + (1 - lambda) * ce(logits, labels)`.
    Composite { lambda: f64 },
}

impl Loss {
    /// Default classification loss for a head width.
    pub fn for_head(n_classes: usize) -> Self {
        if n_classes == 1 {
            Loss::Hinge
        } else {
            Loss::CrossEntropy
        }
    }
}

/// Training rows. `targets` is required by [`Loss::LogitMse`] (width
/// `n_classes`) and [`Loss::Composite`] (width `rep_dim`).
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub x: &'a Array2<f64>,
    pub labels: &'a [u8],
    pub targets: Option<&'a Array2<f64>>,
}

impl<'a> TrainSet<'a> {
    pub fn new(x: &'a Array2<f64>, labels: &'a [u8]) -> Self {
        Self { x, labels, targets: None }
    }

    pub fn with_targets(mut self, targets: &'a Array2<f64>) -> Self {
        self.targets = Some(targets);
        self
    }

    fn check(&self, loss: Loss) -> Result<()> {
        if self.x.nrows() != self.labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                self.x.nrows(),
                self.labels.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y > 1) {
            return Err(Error::Validation(format!("label {bad} is not 0 or 1")));
        }
        let needs_targets = matches!(loss, Loss::LogitMse | Loss::Composite { .. });
        match self.targets {
            None if needs_targets => Err(Error::Config(format!("{loss:?} needs per-row targets"))),
            Some(t) if t.nrows() != self.x.nrows() => Err(Error::Shape(format!(
                "{} target rows for {} feature rows",
                t.nrows(),
                self.x.nrows()
            ))),
            _ => Ok(()),
        }
    }

    fn rows(&self, idx: &[usize]) -> (Array2<f64>, Vec<u8>, Option<Array2<f64>>) {
        (
            self.x.select(Axis(0), idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
            self.targets.map(|t| t.select(Axis(0), idx)),
        )
    }
}

/// Dev rows for checkpoint selection; labels and events come from `utterances`.
#[derive(Debug, Clone, Copy)]
pub struct DevSet<'a> {
    pub x: &'a Array2<f64>,
    pub utterances: &'a [Utterance],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub loss: Loss,
    /// Keep the head fixed (no update, no decay).
    pub freeze_head: bool,
}

/// Loss value and gradients at the output of an already-run forward pass.
fn objective(
    loss: Loss,
    logits: &Array2<f64>,
    rep: &Array2<f64>,
    labels: &[u8],
    targets: Option<&Array2<f64>>,
) -> Result<(f64, Array2<f64>, Option<Array2<f64>>)> {
    let need = || targets.ok_or_else(|| Error::Config(format!("{loss:?} needs per-row targets")));
    Ok(match loss {
        Loss::CrossEntropy => {
            if logits.ncols() != 2 {
                return Err(Error::Config("cross-entropy needs a two-logit head".into()));
            }
            let (l, g) = ce_loss_grad(logits, labels);
            (l, g, None)
        }
        Loss::Hinge => {
            if logits.ncols() != 1 {
                return Err(Error::Config("hinge loss needs a single-score head".into()));
            }
            let (l, g) = hinge_loss_grad(logits, labels);
            (l, g, None)
        }
        Loss::LogitMse => {
            let (l, g) = mse_loss_grad(logits, need()?)?;
            (l, g, None)
        }
        Loss::Composite { lambda } => {
            check_lambda(lambda)?;
            if logits.ncols() != 2 {
                return Err(Error::Config("composite loss needs a two-logit head".into()));
            }
            let (align, d_rep) = mse_loss_grad(rep, need()?)?;
            let (ce, d_logits) = ce_loss_grad(logits, labels);
            (
                lambda * align + (1.0 - lambda) * ce,
                d_logits * (1.0 - lambda),
                Some(d_rep * lambda),
            )
        }
    })
}

fn loss_and_grads_traced(model: &Mlp, loss: Loss, out_trace: (super::mlp::Output, Trace), labels: &[u8], targets: Option<&Array2<f64>>) -> Result<(f64, Grads)> {
    let (out, trace) = out_trace;
    let (l, d_logits, d_rep) = objective(loss, &out.logits, &out.rep, labels, targets)?;
    Ok((l, model.backward(&trace, &d_logits, d_rep.as_ref())))
}

/// Eval-mode loss and analytic gradients over the whole set.
pub fn loss_and_grads(model: &Mlp, loss: Loss, data: &TrainSet) -> Result<(f64, Grads)> {
    data.check(loss)?;
    let ot = model.forward_traced(data.x, None::<&mut ChaCha8Rng>)?;
    loss_and_grads_traced(model, loss, ot, data.labels, data.targets)
}

/// Eval-mode loss over the whole set.
pub fn eval_loss(model: &Mlp, loss: Loss, data: &TrainSet) -> Result<f64> {
    data.check(loss)?;
    let out = model.forward(data.x)?;
    Ok(objective(loss, &out.logits, &out.rep, data.labels, data.targets)?.0)
}

/// Check-worthiness scores in [0, 1], one per row.
pub fn predict_scores(model: &Mlp, x: &Array2<f64>) -> Result<Vec<f64>> {
    Ok(positive_scores(&model.forward(x)?.logits))
}

fn dev_map(model: &Mlp, dev: &DevSet) -> Result<f64> {
    map_of_scores(dev.utterances, &predict_scores(model, dev.x)?)
}

/// Trains a freshly initialized model with the loss matching its head and
/// returns the epoch with the best dev MAP.
pub fn train_classifier(train: &TrainSet, dev: &DevSet, spec: &MlpSpec, config: &TrainConfig) -> Result<Checkpoint> {
    let model = Mlp::init(spec, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
    let opts = TrainOptions {
        loss: Loss::for_head(spec.n_classes),
        freeze_head: false,
    };
    train_model(model, train, dev, config, opts)
}

pub fn train_model(model: Mlp, train: &TrainSet, dev: &DevSet, config: &TrainConfig, opts: TrainOptions) -> Result<Checkpoint> {
    train_model_with(model, train, dev, config, opts, |_, _| {})
}

/// As [`train_model`], calling `on_epoch` with each epoch's log and the
/// model as it stands after that epoch.
pub fn train_model_with<F>(
    mut model: Mlp,
    train: &TrainSet,
    dev: &DevSet,
    config: &TrainConfig,
    opts: TrainOptions,
    mut on_epoch: F,
) -> Result<Checkpoint>
where
    F: FnMut(&EpochLog, &Mlp),
{
    config.validate()?;
    train.check(opts.loss)?;
    if train.x.nrows() == 0 {
        return Err(Error::Validation("empty training set".into()));
    }
    if dev.x.nrows() != dev.utterances.len() {
        return Err(Error::Shape(format!(
            "{} dev feature rows for {} dev utterances",
            dev.x.nrows(),
            dev.utterances.len()
        )));
    }

    let n = train.x.nrows();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let n_layers = model.layers().len();
    let mut states: Vec<(AdamState, AdamState)> = model
        .layers()
        .iter()
        .map(|d| (AdamState::new(d.w.len()), AdamState::new(d.b.len())))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(Mlp, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            step += 1;
            let lr = lr_schedule(step, total_steps, config.learning_rate, config.warmup_proportion);
            let (xb, yb, tb) = train.rows(idx);
            let ot = model.forward_traced(&xb, Some(&mut dropout_rng))?;
            let (loss, grads) = loss_and_grads_traced(&model, opts.loss, ot, &yb, tb.as_ref())?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {loss} at epoch {epoch}, step {step} (lr {lr:e})"
                )));
            }
            loss_sum += loss * idx.len() as f64;
            for (i, (layer, g)) in model.layers_mut().into_iter().zip(grads).enumerate() {
                if opts.freeze_head && i + 1 == n_layers {
                    continue;
                }
                let (sw, sb) = &mut states[i];
                let w = layer.w.as_slice_mut().expect("standard layout");
                adamw_step(w, g.w.as_slice().expect("standard layout"), sw, lr, config.weight_decay);
                let b = layer.b.as_slice_mut().expect("standard layout");
                adamw_step(b, g.b.as_slice().expect("standard layout"), sb, lr, config.weight_decay);
            }
        }
        let mut snapshot = model.clone();
        snapshot.round_to_f32();
        let map = dev_map(&snapshot, dev)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / n as f64,
            dev_map: map,
        };
        log::debug!("epoch {epoch}: train loss {:.6}, dev MAP {map:.4}", log.train_loss);
        on_epoch(&log, &model);
        history.push(log);
        if best.as_ref().is_none_or(|b| map > b.2) {
            best = Some((snapshot, epoch, map));
        }
    }
    let (model, epoch, dev_map) = best.expect("at least one epoch");
    Ok(Checkpoint::new(model, config.clone(), epoch, dev_map, history))
}
