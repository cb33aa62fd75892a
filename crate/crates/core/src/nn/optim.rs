use serde::{Deserialize, Serialize};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay:
/// `p -= lr_t * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr_t: f64, weight_decay: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    if state.m.len() != params.len() {
        *state = AdamState::new(params.len());
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr_t * (m_hat / (v_hat.sqrt() + EPS) + weight_decay * params[i]);
    }
}

/// Linear warmup to `peak_lr` over the first `ceil(warmup_proportion * total)`
/// steps, then linear decay to zero at `total_steps`. Steps count from 1.
pub fn lr_schedule(step: usize, total_steps: usize, peak_lr: f64, warmup_proportion: f64) -> f64 {
    let total = total_steps.max(1);
    let step = step.clamp(1, total);
    let warm = (warmup_proportion * total as f64).ceil() as usize;
    if warm > 0 && step <= warm {
        peak_lr * step as f64 / warm as f64
    } else if total == warm {
        peak_lr
    } else {
        peak_lr * (total - step) as f64 / (total - warm) as f64
    }
}
