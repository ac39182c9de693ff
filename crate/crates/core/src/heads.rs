//! Output heads that turn hidden states into per-step cumulative-hazard
//! increments `Λ_t`.
//!
//! The hazard head emits `Λ_t = softplus(w · h_t)` directly. The parametric
//! heads emit distribution parameters `softplus(w_j · h_t + b_j)` at every
//! step and integrate the corresponding hazard over `(t − 1, t]`:
//!
//! | head        | parameters | `Λ_t`                                   |
//! |-------------|------------|-----------------------------------------|
//! | exponential | `ρ`        | `ρ`                                     |
//! | Weibull     | `b, k`     | `(t/b)^k − ((t − 1)/b)^k`               |
//! | Rayleigh    | `b`        | Weibull with `k = 2`                    |
//! | Poisson     | `μ`        | `−ln(1 − f_t / S_t)`, support `T ≥ 1`   |
//!
//! For the Poisson head `f_t = pmf(t − 1; μ)` and `S_t = Σ_{j ≥ t−1} pmf(j; μ)`,
//! so `exp(−Σ_{s≤t} Λ_s) = P{T > t}`.

use serde::{Deserialize, Serialize};

use crate::nn::{dot, softplus, HiddenState};
use crate::{Error, Result};

/// Cap on a Poisson increment, i.e. the discrete hazard is kept below
/// `1 − 1e-12`.
pub const POISSON_MAX_INCREMENT: f64 = 27.631_021_115_928_547; // −ln(1e-12)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Hazard,
    Exponential,
    Weibull,
    Rayleigh,
    Poisson,
}

impl HeadKind {
    pub fn num_outputs(self) -> usize {
        match self {
            HeadKind::Weibull => 2,
            _ => 1,
        }
    }

    pub fn has_bias(self) -> bool {
        self != HeadKind::Hazard
    }
}

/// Per-timestep distribution parameters, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub enum DistParams {
    Exponential { rate: Vec<f64> },
    Weibull { scale: Vec<f64>, shape: Vec<f64> },
    Rayleigh { scale: Vec<f64> },
    Poisson { mean: Vec<f64> },
}

impl DistParams {
    pub fn len(&self) -> usize {
        match self {
            DistParams::Exponential { rate } => rate.len(),
            DistParams::Weibull { scale, .. } => scale.len(),
            DistParams::Rayleigh { scale } => scale.len(),
            DistParams::Poisson { mean } => mean.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kind(&self) -> HeadKind {
        match self {
            DistParams::Exponential { .. } => HeadKind::Exponential,
            DistParams::Weibull { .. } => HeadKind::Weibull,
            DistParams::Rayleigh { .. } => HeadKind::Rayleigh,
            DistParams::Poisson { .. } => HeadKind::Poisson,
        }
    }

    /// Parameters at 1-based step `t`.
    fn at(&self, t: usize) -> [f64; 2] {
        let i = t - 1;
        match self {
            DistParams::Exponential { rate } => [rate[i], 0.0],
            DistParams::Weibull { scale, shape } => [scale[i], shape[i]],
            DistParams::Rayleigh { scale } => [scale[i], 0.0],
            DistParams::Poisson { mean } => [mean[i], 0.0],
        }
    }
}

/// Pre-activations `w_j · h + b_j` for one hidden state.
pub(crate) fn head_preactivations(h: &[f64], weights: &[f64], bias: &[f64], outputs: usize) -> Vec<f64> {
    (0..outputs)
        .map(|j| {
            let row = &weights[j * h.len()..(j + 1) * h.len()];
            dot(row, h) + bias.get(j).copied().unwrap_or(0.0)
        })
        .collect()
}

pub fn head_params(
    h_seq: &[HiddenState],
    kind: HeadKind,
    weights: &[f64],
    bias: &[f64],
) -> Result<DistParams> {
    if kind == HeadKind::Hazard {
        return Err(Error::Argument("the hazard head has no distribution parameters".into()));
    }
    let first = h_seq
        .first()
        .ok_or_else(|| Error::Argument("empty hidden sequence".into()))?;
    let hs = first.0.len();
    let outputs = kind.num_outputs();
    if weights.len() != outputs * hs || bias.len() != outputs {
        return Err(Error::Shape(format!(
            "{kind:?} head needs {outputs}×{hs} weights and {outputs} biases, got {} and {}",
            weights.len(),
            bias.len()
        )));
    }
    let mut cols = vec![Vec::with_capacity(h_seq.len()); outputs];
    for h in h_seq {
        if h.0.len() != hs {
            return Err(Error::Shape("hidden states differ in length".into()));
        }
        for (j, a) in head_preactivations(&h.0, weights, bias, outputs).into_iter().enumerate() {
            cols[j].push(softplus(a));
        }
    }
    let mut it = cols.into_iter();
    let first = it.next().unwrap();
    Ok(match kind {
        HeadKind::Exponential => DistParams::Exponential { rate: first },
        HeadKind::Weibull => DistParams::Weibull {
            scale: first,
            shape: it.next().unwrap(),
        },
        HeadKind::Rayleigh => DistParams::Rayleigh { scale: first },
        HeadKind::Poisson => DistParams::Poisson { mean: first },
        HeadKind::Hazard => unreachable!(),
    })
}

/// An increment with its derivatives with respect to the (up to two)
/// distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Increment {
    pub value: f64,
    pub grad: [f64; 2],
    pub clamped: bool,
}

pub fn hazard_increment(params: &DistParams, t: usize) -> Result<f64> {
    if t == 0 || t > params.len() {
        return Err(Error::Argument(format!("t = {t} outside 1..={}", params.len())));
    }
    Ok(increment(params.kind(), &params.at(t), t).value)
}

pub(crate) fn increment(kind: HeadKind, p: &[f64], t: usize) -> Increment {
    match kind {
        HeadKind::Hazard | HeadKind::Exponential => Increment {
            value: p[0],
            grad: [1.0, 0.0],
            clamped: false,
        },
        HeadKind::Weibull => weibull_increment(p[0], p[1], t),
        HeadKind::Rayleigh => {
            let inc = weibull_increment(p[0], 2.0, t);
            Increment {
                grad: [inc.grad[0], 0.0],
                ..inc
            }
        }
        HeadKind::Poisson => poisson_increment(p[0], t),
    }
}

/// `(t/b)^k − ((t−1)/b)^k` and its partials in `b` and `k`.
fn weibull_increment(scale: f64, shape: f64, t: usize) -> Increment {
    let hi = t as f64 / scale;
    let lo = (t - 1) as f64 / scale;
    let hi_k = pow_shape(hi, shape);
    let lo_k = pow_shape(lo, shape);
    let value = hi_k - lo_k;
    let d_scale = -shape / scale * value;
    let lo_term = if t == 1 { 0.0 } else { lo_k * lo.ln() };
    let d_shape = hi_k * hi.ln() - lo_term;
    Increment {
        value,
        grad: [d_scale, d_shape],
        clamped: false,
    }
}

/// `x^k`. The square is spelled out so a constant `k = 2` (Rayleigh) and a
/// runtime `k = 2` round identically.
fn pow_shape(x: f64, k: f64) -> f64 {
    if k == 2.0 {
        x * x
    } else {
        x.powf(k)
    }
}

/// Shifted-Poisson increment at step `t`.
///
/// With `m = t − 1` the ratio `S_t / f_t` is `1 + q` where
/// `q = Σ_{i≥1} Π_{l=1..i} μ/(m + l)`, so `Λ_t = ln(1 + 1/q)` and no factorial
/// or `e^{−μ}` term is ever formed.
fn poisson_increment(mean: f64, t: usize) -> Increment {
    let m = (t - 1) as f64;
    let mut term = 1.0;
    // term / μ, carried separately so tiny means stay exact
    let mut term_over_mean = 1.0 / mean;
    let mut q = 0.0;
    let mut dq = 0.0;
    for i in 1..200_000usize {
        let ratio = mean / (m + i as f64);
        term *= ratio;
        term_over_mean *= ratio;
        q += term;
        dq += i as f64 * term_over_mean;
        if ratio < 1.0 && term <= 1e-18 * q {
            break;
        }
    }
    let value = (1.0 / q).ln_1p();
    if !(value.is_finite() && value <= POISSON_MAX_INCREMENT) {
        return Increment {
            value: POISSON_MAX_INCREMENT,
            grad: [0.0, 0.0],
            clamped: true,
        };
    }
    Increment {
        value,
        grad: [-dq / (q * (1.0 + q)), 0.0],
        clamped: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ModelParams;
    use crate::survival::{hazards_to_survival, HazardSequence};
    use proptest::prelude::*;

    fn poisson_pmf(j: usize, mean: f64) -> f64 {
        // e^{−μ} μ^j / j!, in log space
        let lf: f64 = (1..=j).map(|v| (v as f64).ln()).sum();
        (-mean + j as f64 * mean.ln() - lf).exp()
    }

    #[test]
    fn zero_weights_give_ln2() {
        let hs = vec![HiddenState(vec![0.3, -0.2]); 4];
        for kind in [HeadKind::Exponential, HeadKind::Weibull, HeadKind::Rayleigh, HeadKind::Poisson] {
            let n = kind.num_outputs();
            let p = head_params(&hs, kind, &vec![0.0; 2 * n], &vec![0.0; n]).unwrap();
            assert_eq!(p.len(), 4);
            for t in 1..=4 {
                let v = p.at(t);
                assert_eq!(v[0], std::f64::consts::LN_2);
                if kind == HeadKind::Weibull {
                    assert_eq!(v[1], std::f64::consts::LN_2);
                }
            }
        }
    }

    #[test]
    fn arity() {
        assert_eq!(HeadKind::Exponential.num_outputs(), 1);
        assert_eq!(HeadKind::Rayleigh.num_outputs(), 1);
        assert_eq!(HeadKind::Poisson.num_outputs(), 1);
        assert_eq!(HeadKind::Weibull.num_outputs(), 2);
    }

    #[test]
    fn shape_mismatch() {
        let hs = vec![HiddenState(vec![0.0; 3])];
        assert!(matches!(
            head_params(&hs, HeadKind::Weibull, &[0.0; 3], &[0.0; 2]),
            Err(Error::Shape(_))
        ));
        assert!(head_params(&[], HeadKind::Weibull, &[], &[]).is_err());
    }

    #[test]
    fn seeded_weights_match_scalar_evaluation() {
        let p = ModelParams::init(2, 3, HeadKind::Weibull, 21).unwrap();
        let bias = [0.4, -0.7];
        let hs = vec![HiddenState(vec![0.1, -0.5, 0.9]), HiddenState(vec![-0.3, 0.2, 0.05])];
        let out = head_params(&hs, HeadKind::Weibull, &p.head_weights, &bias).unwrap();
        let DistParams::Weibull { scale, shape } = out else { panic!() };
        for (t, h) in hs.iter().enumerate() {
            for (j, col) in [&scale, &shape].into_iter().enumerate() {
                let mut a = bias[j];
                for k in 0..3 {
                    a += p.head_weights[j * 3 + k] * h.0[k];
                }
                let want = (1.0 + a.exp()).ln();
                assert!((col[t] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exponential_constant_rate_survival() {
        let p = DistParams::Exponential { rate: vec![0.3; 3] };
        let inc: Vec<f64> = (1..=3).map(|t| hazard_increment(&p, t).unwrap()).collect();
        let s = hazards_to_survival(&HazardSequence::new(inc).unwrap());
        assert!((s.at(3) - 0.406_569_659_740_599_1).abs() < 1e-15);
    }

    #[test]
    fn rayleigh_first_step() {
        let p = DistParams::Rayleigh { scale: vec![2.0] };
        assert_eq!(hazard_increment(&p, 1).unwrap(), 0.25);
    }

    #[test]
    fn weibull_unit_shape_is_exponential() {
        let p = DistParams::Weibull {
            scale: vec![1.0; 6],
            shape: vec![1.0; 6],
        };
        for t in 1..=6 {
            assert_eq!(hazard_increment(&p, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn out_of_range_step() {
        let p = DistParams::Poisson { mean: vec![1.0; 2] };
        assert!(hazard_increment(&p, 0).is_err());
        assert!(hazard_increment(&p, 3).is_err());
    }

    #[test]
    fn poisson_reproduces_pmf_tail() {
        for mean in [0.05, 0.3, 1.0, 2.5, 4.0, 7.0, 10.0] {
            let mut cum = 0.0;
            for t in 1..=25 {
                cum += poisson_increment(mean, t).value;
                let tail: f64 = 1.0 - (0..t).map(|j| poisson_pmf(j, mean)).sum::<f64>();
                let brute: f64 = (t..400).map(|j| poisson_pmf(j, mean)).sum();
                let s = (-cum).exp();
                assert!((s - brute).abs() < 1e-9, "μ={mean} t={t}: {s} vs {brute}");
                assert!((s - tail).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn poisson_clamps_vanishing_mean() {
        let inc = poisson_increment(1e-300, 20);
        assert!(inc.clamped);
        assert_eq!(inc.value, POISSON_MAX_INCREMENT);
        assert!(!poisson_increment(0.5, 20).clamped);
    }

    fn fd_check(kind: HeadKind, p: [f64; 2], t: usize) {
        let inc = increment(kind, &p, t);
        for j in 0..kind.num_outputs() {
            let h = 1e-6 * p[j];
            let mut up = p;
            let mut dn = p;
            up[j] += h;
            dn[j] -= h;
            let fd = (increment(kind, &up, t).value - increment(kind, &dn, t).value) / (2.0 * h);
            let g = inc.grad[j];
            assert!((fd - g).abs() <= 1e-6 * fd.abs().max(g.abs()).max(1e-6), "{kind:?} t={t} j={j}: {g} vs {fd}");
        }
    }

    #[test]
    fn increment_derivatives_match_finite_differences() {
        for t in [1, 2, 5, 13] {
            fd_check(HeadKind::Weibull, [1.7, 0.6], t);
            fd_check(HeadKind::Weibull, [4.0, 2.3], t);
            fd_check(HeadKind::Rayleigh, [3.0, 0.0], t);
            fd_check(HeadKind::Poisson, [0.8, 0.0], t);
            fd_check(HeadKind::Poisson, [9.0, 0.0], t);
            fd_check(HeadKind::Exponential, [0.3, 0.0], t);
        }
    }

    proptest! {
        #[test]
        fn weibull_k2_is_rayleigh_bitwise(b in 0.05f64..20.0, t in 1usize..30) {
            let w = hazard_increment(&DistParams::Weibull { scale: vec![b; t], shape: vec![2.0; t] }, t).unwrap();
            let r = hazard_increment(&DistParams::Rayleigh { scale: vec![b; t] }, t).unwrap();
            prop_assert_eq!(w.to_bits(), r.to_bits());
        }

        #[test]
        fn weibull_k1_is_exponential(b in 0.05f64..20.0, t in 1usize..30) {
            let w = hazard_increment(&DistParams::Weibull { scale: vec![b; t], shape: vec![1.0; t] }, t).unwrap();
            prop_assert!((w - 1.0 / b).abs() <= 1e-12 * (1.0 / b) * t as f64);
        }

        #[test]
        fn increments_positive(
            b in 0.1f64..10.0, k in 0.2f64..4.0, mu in 0.01f64..15.0, t in 1usize..25,
        ) {
            prop_assert!(weibull_increment(b, k, t).value > 0.0);
            prop_assert!(poisson_increment(mu, t).value > 0.0);
        }
    }
}
