//! Discrete-time survival formalism.
//!
//! With per-step hazards `λ_t > 0` the survival curve is
//! `S_t = exp(−Σ_{k≤t} λ_k)` and `F(t) = 1 − S_t`. For a subject with censor
//! indicator `c` and label time `t*` the two per-sample losses are
//!
//! ```text
//! regular (SAFE-r):          Σ_{t≤t*} λ_t − c · ln(e^{λ_{t*}} − 1)
//! early detection (SAFE):    Σ_{t≤t*} λ_t − c · ln(e^{Σ_{t≤t*} λ_t} − 1)
//! ```
//!
//! Both are non-negative: the event term of the early-detection loss equals
//! `−ln(1 − e^{−Σλ})`, and the regular one equals
//! `Σ_{t<t*} λ_t − ln(1 − e^{−λ_{t*}})`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lower clamp applied to hazards before a loss is evaluated.
pub const HAZARD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Early-detection likelihood: event term `P{T < t*}`.
    #[serde(rename = "safe")]
    Safe,
    /// Regular survival likelihood: event term `P{T = t*}`.
    #[serde(rename = "safe-r")]
    SafeR,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Safe => "safe",
            LossKind::SafeR => "safe-r",
        }
    }
}

/// Strictly positive, finite per-step hazards.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardSequence(Vec<f64>);

impl HazardSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("hazard sequence is empty".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Argument(format!(
                "hazard at t = {} is {v}; hazards must be positive and finite",
                i + 1
            )));
        }
        Ok(Self(values))
    }

    /// Raises every entry below [`HAZARD_FLOOR`] to the floor and returns how
    /// many entries were changed. Non-finite entries are rejected.
    pub fn clamped(mut values: Vec<f64>) -> Result<(Self, usize)> {
        let mut count = 0;
        for v in values.iter_mut() {
            if v.is_nan() || *v == f64::INFINITY {
                return Err(Error::Argument(format!("non-finite hazard {v}")));
            }
            if *v < HAZARD_FLOOR {
                *v = HAZARD_FLOOR;
                count += 1;
            }
        }
        Ok((Self::new(values)?, count))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn cumulative(&self, t: usize) -> f64 {
        self.0[..t].iter().sum()
    }
}

/// Survival probabilities, in `(0, 1]` and non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve(Vec<f64>);

impl SurvivalCurve {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `S_t` for 1-based `t`.
    pub fn at(&self, t: usize) -> f64 {
        self.0[t - 1]
    }

    /// First 1-based `t` with `S_t < τ`.
    pub fn first_below(&self, tau: f64) -> Option<usize> {
        self.0.iter().position(|&s| s < tau).map(|i| i + 1)
    }
}

/// Censor indicator and label time of one subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CensorLabel {
    /// `true` for an observed event (`c = 1`).
    pub event: bool,
    /// Event time when `event`, last observed time otherwise; 1-based.
    pub t_label: usize,
}

impl CensorLabel {
    pub fn new(event: bool, t_label: usize) -> Self {
        Self { event, t_label }
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.t_label == 0 || self.t_label > len {
            return Err(Error::Argument(format!(
                "t_label {} outside 1..={len}",
                self.t_label
            )));
        }
        Ok(())
    }
}

pub fn hazards_to_survival(hazards: &HazardSequence) -> SurvivalCurve {
    let mut cum = 0.0;
    SurvivalCurve(
        hazards
            .0
            .iter()
            .map(|l| {
                cum += l;
                (-cum).exp()
            })
            .collect(),
    )
}

/// `F(t) = 1 − S_t`.
pub fn cdf_from_hazards(hazards: &HazardSequence, t: usize) -> Result<f64> {
    if t == 0 || t > hazards.len() {
        return Err(Error::Argument(format!("t = {t} outside 1..={}", hazards.len())));
    }
    Ok(-(-hazards.cumulative(t)).exp_m1())
}

/// `ln(e^s − 1)` for `s > 0` without overflow or cancellation.
pub fn stable_log_expm1(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Argument(format!("ln(e^s − 1) needs s > 0, got {s}")));
    }
    Ok(if s <= 30.0 {
        s.exp_m1().ln()
    } else {
        s + (-(-s).exp()).ln_1p()
    })
}

pub fn safe_r_loss(hazards: &HazardSequence, label: CensorLabel) -> Result<f64> {
    label.check(hazards.len())?;
    let total = hazards.cumulative(label.t_label);
    if !label.event {
        return Ok(total);
    }
    let last = hazards.0[label.t_label - 1];
    Ok(total - stable_log_expm1(last)?)
}

pub fn safe_loss(hazards: &HazardSequence, label: CensorLabel) -> Result<f64> {
    label.check(hazards.len())?;
    let total = hazards.cumulative(label.t_label);
    if !label.event {
        return Ok(total);
    }
    if !(total > 0.0) {
        return Err(Error::Argument("cumulative hazard is zero for an event sample".into()));
    }
    // Σλ − ln(e^{Σλ} − 1) = −ln(1 − e^{−Σλ})
    Ok(-(-(-total).exp()).ln_1p())
}

pub fn sample_loss(hazards: &HazardSequence, label: CensorLabel, kind: LossKind) -> Result<f64> {
    match kind {
        LossKind::Safe => safe_loss(hazards, label),
        LossKind::SafeR => safe_r_loss(hazards, label),
    }
}

/// Plain sum of per-sample losses.
pub fn batch_loss(records: &[(HazardSequence, CensorLabel)], kind: LossKind) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    records
        .iter()
        .map(|(h, l)| sample_loss(h, *l, kind))
        .sum()
}

/// `∂ℓ/∂λ_t` for `t = 1..=t_label`.
///
/// Uses `e^x/(e^x − 1) = −1/expm1(−x)`.
pub fn analytic_hazard_grad(
    hazards: &HazardSequence,
    label: CensorLabel,
    kind: LossKind,
) -> Result<Vec<f64>> {
    label.check(hazards.len())?;
    let n = label.t_label;
    let mut grad = vec![1.0; n];
    if !label.event {
        return Ok(grad);
    }
    match kind {
        LossKind::SafeR => {
            let last = hazards.0[n - 1];
            grad[n - 1] = 1.0 + 1.0 / (-last).exp_m1();
        }
        LossKind::Safe => {
            let total = hazards.cumulative(n);
            let g = 1.0 + 1.0 / (-total).exp_m1();
            grad.fill(g);
        }
    }
    Ok(grad)
}
