use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ndarray::Array2;
use rand_distr::StandardNormal;

use super::mlp::{InputBlock, Mlp, MlpSpec};
use super::train::{eval_loss, loss_and_grads, Loss, TrainSet};
use crate::error::Result;

pub const STEP: f64 = 1e-4;

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// near-zero gradients from amplifying finite-difference rounding.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// A model for gradient checking. Biases are drawn from U(-0.1, 0.1)
/// instead of zero so no pre-activation sits exactly on the ReLU kink,
/// where the derivative is undefined and finite differences disagree with
/// any one-sided choice.
pub fn gradcheck_model(spec: &MlpSpec, seed: u64) -> Result<Mlp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mlp::init(spec, &mut rng)?;
    for d in m.layers_mut() {
        d.b.mapv_inplace(|_| rng.random_range(-0.1..0.1));
    }
    Ok(m)
}

/// Largest relative error between the analytic gradient and central
/// differences with step [`STEP`], over every parameter. Eval mode.
pub fn gradcheck(model: &Mlp, loss: Loss, data: &TrainSet) -> Result<f64> {
    let (_, grads) = loss_and_grads(model, loss, data)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (li, g) in grads.iter().enumerate() {
        let analytic: Vec<f64> = g.w.iter().chain(g.b.iter()).copied().collect();
        for (pi, &a) in analytic.iter().enumerate() {
            let orig = param(&mut probe, li, pi, None);
            param(&mut probe, li, pi, Some(orig + STEP));
            let up = eval_loss(&probe, loss, data)?;
            param(&mut probe, li, pi, Some(orig - STEP));
            let down = eval_loss(&probe, loss, data)?;
            param(&mut probe, li, pi, Some(orig));
            worst = worst.max(relative_error(a, (up - down) / (2.0 * STEP)));
        }
    }
    Ok(worst)
}

/// One row of [`gradcheck_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckCase {
    pub name: String,
    pub max_rel_error: f64,
}

/// Gradient checks over every loss the trainer uses (cross-entropy, hinge,
/// logit MSE and the composite loss at λ ∈ {0, 0.25, 0.75, 1}) on nets with
/// 0 to 3 hidden layers and one with input projections.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradcheckCase>> {
    let d = 4;
    let n = 7;
    let archs: Vec<(String, MlpSpec)> = vec![
        ("linear".into(), MlpSpec::new(d, &[], 2, 0.0)),
        ("h5".into(), MlpSpec::new(d, &[5], 2, 0.2)),
        ("h6-4".into(), MlpSpec::new(d, &[6, 4], 2, 0.2)),
        ("h5-4-3".into(), MlpSpec::new(d, &[5, 4, 3], 2, 0.2)),
        (
            "proj2+2-h3".into(),
            MlpSpec::new(d, &[3], 2, 0.0).with_blocks(vec![
                InputBlock { dim: 2, project_to: Some(3) },
                InputBlock { dim: 2, project_to: Some(2) },
            ]),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let mut out = Vec::new();
    for (k, (arch, spec)) in archs.into_iter().enumerate() {
        let model_seed = seed.wrapping_add(100 + k as u64);
        let rep_targets = Array2::from_shape_simple_fn((n, spec.rep_dim()), || rng.sample(StandardNormal));
        let logit_targets = Array2::from_shape_simple_fn((n, 2), || rng.sample(StandardNormal));
        let two = gradcheck_model(&spec, model_seed)?;
        let mut cases = vec![
            ("ce".to_string(), Loss::CrossEntropy, &logit_targets),
            ("logit-mse".to_string(), Loss::LogitMse, &logit_targets),
        ];
        for lambda in [0.0, 0.25, 0.75, 1.0] {
            cases.push((format!("composite-{lambda}"), Loss::Composite { lambda }, &rep_targets));
        }
        for (name, loss, targets) in cases {
            let set = TrainSet::new(&x, &labels).with_targets(targets);
            out.push(GradcheckCase {
                name: format!("{arch}/{name}"),
                max_rel_error: gradcheck(&two, loss, &set)?,
            });
        }
        let one = gradcheck_model(&MlpSpec { n_classes: 1, ..spec }, model_seed)?;
        out.push(GradcheckCase {
            name: format!("{arch}/hinge"),
            max_rel_error: gradcheck(&one, Loss::Hinge, &TrainSet::new(&x, &labels))?,
        });
    }
    Ok(out)
}

/// Reads parameter `pi` of layer `li` (weights then bias), optionally
/// replacing it; returns the previous value.
fn param(model: &mut Mlp, li: usize, pi: usize, set: Option<f64>) -> f64 {
    let mut layers = model.layers_mut();
    let d = &mut layers[li];
    let n_w = d.w.len();
    let slot = if pi < n_w {
        &mut d.w.as_slice_mut().expect("standard layout")[pi]
    } else {
        &mut d.b[pi - n_w]
    };
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;

    fn data(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
        let y = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        (x, y)
    }

    #[test]
    fn ce_up_to_three_hidden_layers() {
        for (k, hidden) in [vec![], vec![5], vec![6, 4], vec![5, 4, 3]].into_iter().enumerate() {
            let (x, y) = data(7, 4, k as u64);
            let spec = MlpSpec::new(4, &hidden, 2, 0.3);
            let m = gradcheck_model(&spec, k as u64 + 10).unwrap();
            let err = gradcheck(&m, Loss::CrossEntropy, &TrainSet::new(&x, &y)).unwrap();
            assert!(err <= 1e-4, "hidden {hidden:?}: {err}");
        }
    }

    #[test]
    fn suite_covers_every_loss_within_tolerance() {
        let cases = gradcheck_suite(0).unwrap();
        assert_eq!(cases.len(), 5 * 7);
        for c in &cases {
            assert!(c.max_rel_error <= 1e-4, "{}: {}", c.name, c.max_rel_error);
        }
    }

    #[test]
    fn projection_blocks_check() {
        let (x, y) = data(6, 5, 2);
        let spec = MlpSpec::new(5, &[3], 2, 0.0).with_blocks(vec![
            InputBlock { dim: 2, project_to: Some(3) },
            InputBlock { dim: 3, project_to: Some(2) },
        ]);
        let m = gradcheck_model(&spec, 4).unwrap();
        assert!(gradcheck(&m, Loss::CrossEntropy, &TrainSet::new(&x, &y)).unwrap() <= 1e-4);
    }

    #[test]
    fn linear_mse_matches_closed_form() {
        let (x, _) = data(9, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let target = Array2::from_shape_simple_fn((9, 1), || rng.sample::<f64, _>(StandardNormal));
        let y = vec![0; 9];
        let mut lin = Dense::zeros(3, 1);
        lin.w = Array2::from_shape_vec((3, 1), vec![0.3, -0.2, 0.5]).unwrap();
        let m = Mlp::from_layers(&MlpSpec::new(3, &[], 1, 0.0), vec![lin.clone()]).unwrap();
        let set = TrainSet::new(&x, &y).with_targets(&target);
        let (_, g) = loss_and_grads(&m, Loss::LogitMse, &set).unwrap();
        // 2/N X^T (X w - y), bias zero.
        let resid = x.dot(&lin.w) - &target;
        let want = x.t().dot(&resid) * (2.0 / 9.0);
        for (a, b) in g[0].w.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!(gradcheck(&m, Loss::LogitMse, &set).unwrap() <= 1e-4);
    }
}
