//! Bias-corrected Adam over flat parameter slices.
//!
//! Every optimizable quantity in the pipeline lives in (or is viewed as) a
//! flat `f64` slice, so one optimizer covers nodes, colors, multipliers,
//! and both networks. State is per-slice; steps are deterministic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    adam_step_masked(params, grads, None, state, hyper)
}

/// Adam with an optional freeze mask: frozen coordinates keep their value
/// and their moments are cleared, so momentum can never drag them later.
/// This is how pinned nodes stay pinned while their gradients still exist.
pub fn adam_step_masked(
    params: &mut [f64],
    grads: &[f64],
    frozen: Option<&[bool]>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(f) = frozen {
        if f.len() != params.len() {
            return Err(Error::ShapeMismatch("freeze mask length".into()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        if frozen.is_some_and(|f| f[i]) {
            state.m[i] = 0.0;
            state.v[i] = 0.0;
            continue;
        }
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}
