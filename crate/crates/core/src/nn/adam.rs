use super::params::Parameters;
use crate::{Error, Result};

/// Bias-corrected Adam state for a parameter set of type `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub step_count: u64,
    pub first_moment: P,
    pub second_moment: P,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<P: Parameters> AdamState<P> {
    pub fn new(like: &P, learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            first_moment: like.zeros_like(),
            second_moment: like.zeros_like(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }
}

/// One Adam step, in place. Gradients are checked for non-finite entries
/// before anything is modified.
pub fn adam_update<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState<P>) -> Result<()> {
    let gt = grads.tensors();
    if let Some(idx) = gt.iter().position(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteGradient(format!("#{idx}")));
    }
    let pt = params.tensors_mut();
    if pt.len() != gt.len() || pt.iter().zip(&gt).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::Shape("gradient shape differs from parameters".into()));
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;

    let ms = state.first_moment.tensors_mut();
    let vs = state.second_moment.tensors_mut();
    for (((p, g), m), v) in pt.into_iter().zip(gt).zip(ms).zip(vs) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
