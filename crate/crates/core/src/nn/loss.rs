use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

fn log_softmax_row(row: ndarray::ArrayView1<f64>) -> Array1<f64> {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    row.mapv(|v| v - lse)
}

pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let ls = log_softmax_row(row.view());
        row.assign(&ls.mapv(f64::exp));
    }
    out
}

/// Check-worthiness score of each row: class-1 softmax probability for a
/// two-logit head, logistic of the score for a single-score head.
pub fn positive_scores(logits: &Array2<f64>) -> Vec<f64> {
    match logits.ncols() {
        1 => logits.column(0).iter().map(|&s| 1.0 / (1.0 + (-s).exp())).collect(),
        _ => softmax(logits).column(1).to_vec(),
    }
}

/// Mean of `-log softmax(logits)[label]`.
pub fn ce_loss(logits: &Array2<f64>, labels: &[u8]) -> f64 {
    ce_loss_grad(logits, labels).0
}

pub fn ce_loss_grad(logits: &Array2<f64>, labels: &[u8]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        let ls = log_softmax_row(row);
        loss -= ls[y as usize];
        let mut g = ls.mapv(f64::exp);
        g[y as usize] -= 1.0;
        grad.row_mut(i).assign(&(g / n));
    }
    (loss / n, grad)
}

/// Mean squared elementwise difference.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    Ok(mse_loss_grad(pred, target)?.0)
}

pub fn mse_loss_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    let diff = pred - target;
    let n = diff.len().max(1) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// `lambda * align + (1 - lambda) * ce`.
pub fn composite_loss(align: f64, ce: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(lambda * align + (1.0 - lambda) * ce)
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// Mean of `max(0, 1 - y s)` with `y` in {-1, +1}.
pub fn hinge_loss(scores: &[f64], labels: &[i8]) -> f64 {
    let n = scores.len().max(1) as f64;
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (1.0 - y as f64 * s).max(0.0))
        .sum::<f64>()
        / n
}

/// Hinge loss on a single-column score matrix with 0/1 labels (0 maps to -1).
pub fn hinge_loss_grad(scores: &Array2<f64>, labels: &[u8]) -> (f64, Array2<f64>) {
    let n = scores.nrows() as f64;
    let mut grad = Array2::zeros(scores.dim());
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let y = if y == 1 { 1.0 } else { -1.0 };
        let margin = 1.0 - y * scores[[i, 0]];
        if margin > 0.0 {
            loss += margin;
            grad[[i, 0]] = -y / n;
        }
    }
    (loss / n, grad)
}
