//! Gated recurrent unit.
//!
//! ```text
//! z = σ(W_z x + U_z h + b_z)          update gate
//! r = σ(W_r x + U_r h + b_r)          reset gate
//! n = tanh(W_n x + U_n (r ⊙ h) + b_n) candidate
//! h' = (1 − z) ⊙ h + z ⊙ n
//! ```
//!
//! The reset gate multiplies the previous state before the candidate's
//! recurrent map. With `h` in `(−1, 1)` the output is a convex combination of
//! two vectors in `(−1, 1)`, so it stays there.

use super::params::{GateWeights, ModelParams};
use super::{matvec_acc, matvec_t_acc, outer_acc, sigmoid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(pub Vec<f64>);

impl HiddenState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self(vec![0.0; hidden_size])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn gru_step(x: &[f64], h_prev: &HiddenState, params: &ModelParams) -> Result<HiddenState> {
    check_dims(x, &h_prev.0, params)?;
    Ok(HiddenState(step_cached(x, &h_prev.0, params).h))
}

pub(crate) fn check_dims(x: &[f64], h_prev: &[f64], params: &ModelParams) -> Result<()> {
    if x.len() != params.input_size {
        return Err(Error::Shape(format!(
            "covariate vector has length {}, model expects {}",
            x.len(),
            params.input_size
        )));
    }
    if h_prev.len() != params.hidden_size {
        return Err(Error::Shape(format!(
            "hidden state has length {}, model expects {}",
            h_prev.len(),
            params.hidden_size
        )));
    }
    Ok(())
}

fn affine(gate: &GateWeights, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut a = gate.bias.clone();
    matvec_acc(&gate.input, x, &mut a);
    matvec_acc(&gate.recurrent, h, &mut a);
    a
}

pub(crate) fn step_cached(x: &[f64], h_prev: &[f64], params: &ModelParams) -> StepCache {
    let z: Vec<f64> = affine(&params.update, x, h_prev).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine(&params.reset, x, h_prev).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut n = params.candidate.bias.clone();
    matvec_acc(&params.candidate.input, x, &mut n);
    matvec_acc(&params.candidate.recurrent, &rh, &mut n);
    n.iter_mut().for_each(|v| *v = v.tanh());
    let h = (0..h_prev.len())
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * n[i])
        .collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        n,
        h,
    }
}

/// Accumulates gate gradients for one step given `dL/dh_t` and returns
/// `dL/dh_{t-1}`.
pub(crate) fn step_backward(
    cache: &StepCache,
    dh: &[f64],
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Vec<f64> {
    let hs = dh.len();
    let mut dh_prev: Vec<f64> = (0..hs).map(|i| dh[i] * (1.0 - cache.z[i])).collect();

    let dz_pre: Vec<f64> = (0..hs)
        .map(|i| dh[i] * (cache.n[i] - cache.h_prev[i]) * cache.z[i] * (1.0 - cache.z[i]))
        .collect();
    let dn_pre: Vec<f64> = (0..hs)
        .map(|i| dh[i] * cache.z[i] * (1.0 - cache.n[i] * cache.n[i]))
        .collect();

    let rh: Vec<f64> = cache.r.iter().zip(&cache.h_prev).map(|(a, b)| a * b).collect();
    outer_acc(&mut grads.candidate.input, &dn_pre, &cache.x);
    outer_acc(&mut grads.candidate.recurrent, &dn_pre, &rh);
    add_into(&mut grads.candidate.bias, &dn_pre);
    let mut drh = vec![0.0; hs];
    matvec_t_acc(&params.candidate.recurrent, &dn_pre, &mut drh);

    let dr_pre: Vec<f64> = (0..hs)
        .map(|i| drh[i] * cache.h_prev[i] * cache.r[i] * (1.0 - cache.r[i]))
        .collect();
    for i in 0..hs {
        dh_prev[i] += drh[i] * cache.r[i];
    }

    outer_acc(&mut grads.reset.input, &dr_pre, &cache.x);
    outer_acc(&mut grads.reset.recurrent, &dr_pre, &cache.h_prev);
    add_into(&mut grads.reset.bias, &dr_pre);
    matvec_t_acc(&params.reset.recurrent, &dr_pre, &mut dh_prev);

    outer_acc(&mut grads.update.input, &dz_pre, &cache.x);
    outer_acc(&mut grads.update.recurrent, &dz_pre, &cache.h_prev);
    add_into(&mut grads.update.bias, &dz_pre);
    matvec_t_acc(&params.update.recurrent, &dz_pre, &mut dh_prev);

    dh_prev
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}
