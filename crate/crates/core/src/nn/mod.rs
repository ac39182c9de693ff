//! Minimal neural-network kernel: activations, GRU cell, parameter store,
//! Adam and a finite-difference gradient oracle.

pub mod adam;
pub mod finite_diff;
pub mod gru;
pub mod params;

pub use adam::{adam_update, AdamState};
pub use finite_diff::finite_diff_gradient;
pub use gru::{gru_step, HiddenState};
pub use params::{GateWeights, ModelParams, Parameters};

/// `ln(1 + e^z)`, evaluated piecewise so that neither tail overflows.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic sigmoid; also the derivative of [`softplus`].
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += M v` for a row-major `rows × v.len()` matrix.
pub(crate) fn matvec_acc(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += dot(row, v);
    }
}

/// `out += Mᵀ u` for a row-major `u.len() × out.len()` matrix.
pub(crate) fn matvec_t_acc(m: &[f64], u: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &ui) in m.chunks_exact(cols).zip(u) {
        if ui == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(row) {
            *o += ui * w;
        }
    }
}

/// `m += u vᵀ`.
pub(crate) fn outer_acc(m: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (row, &ui) in m.chunks_exact_mut(cols).zip(u) {
        if ui == 0.0 {
            continue;
        }
        for (w, vj) in row.iter_mut().zip(v) {
            *w += ui * vj;
        }
    }
}
