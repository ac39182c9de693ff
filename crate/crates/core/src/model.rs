//! Recurrent survival model: GRU over the covariate sequence, a head per
//! step, and reverse-mode differentiation of either loss through both.

use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::heads::{head_preactivations, increment, HeadKind, Increment};
use crate::nn::gru::{check_dims, step_backward, step_cached, StepCache};
use crate::nn::params::{ModelParams, Parameters};
use crate::nn::{sigmoid, softplus};
use crate::survival::{
    analytic_hazard_grad, hazards_to_survival, sample_loss, CensorLabel, HazardSequence, LossKind,
    SurvivalCurve, HAZARD_FLOOR,
};
use crate::{Error, Result};

/// Model selector used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "safe")]
    Safe,
    #[serde(rename = "safe-r")]
    SafeR,
    #[serde(rename = "exponential")]
    Exponential,
    #[serde(rename = "weibull")]
    Weibull,
    #[serde(rename = "rayleigh")]
    Rayleigh,
    #[serde(rename = "poisson")]
    Poisson,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Safe,
        ModelKind::SafeR,
        ModelKind::Exponential,
        ModelKind::Weibull,
        ModelKind::Rayleigh,
        ModelKind::Poisson,
    ];

    pub fn head(self) -> HeadKind {
        match self {
            ModelKind::Safe | ModelKind::SafeR => HeadKind::Hazard,
            ModelKind::Exponential => HeadKind::Exponential,
            ModelKind::Weibull => HeadKind::Weibull,
            ModelKind::Rayleigh => HeadKind::Rayleigh,
            ModelKind::Poisson => HeadKind::Poisson,
        }
    }

    /// Loss used for training. Parametric heads take `parametric_loss`.
    pub fn loss(self, parametric_loss: LossKind) -> LossKind {
        match self {
            ModelKind::Safe => LossKind::Safe,
            ModelKind::SafeR => LossKind::SafeR,
            _ => parametric_loss,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Safe => "safe",
            ModelKind::SafeR => "safe-r",
            ModelKind::Exponential => "exponential",
            ModelKind::Weibull => "weibull",
            ModelKind::Rayleigh => "rayleigh",
            ModelKind::Poisson => "poisson",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

struct Trace {
    steps: Vec<StepCache>,
    preacts: Vec<Vec<f64>>,
    increments: Vec<Increment>,
}

fn forward_trace(x_seq: &[Vec<f64>], params: &ModelParams) -> Result<Trace> {
    if x_seq.is_empty() {
        return Err(Error::Argument("empty covariate sequence".into()));
    }
    let outputs = params.head.num_outputs();
    let mut h = vec![0.0; params.hidden_size];
    let mut steps = Vec::with_capacity(x_seq.len());
    let mut preacts = Vec::with_capacity(x_seq.len());
    let mut increments = Vec::with_capacity(x_seq.len());
    for (i, x) in x_seq.iter().enumerate() {
        check_dims(x, &h, params)?;
        let cache = step_cached(x, &h, params);
        let a = head_preactivations(&cache.h, &params.head_weights, &params.head_bias, outputs);
        let p: Vec<f64> = a.iter().map(|&v| softplus(v)).collect();
        increments.push(increment(params.head, &p, i + 1));
        preacts.push(a);
        h.clone_from(&cache.h);
        steps.push(cache);
    }
    Ok(Trace {
        steps,
        preacts,
        increments,
    })
}

/// Clamps increments to [`HAZARD_FLOOR`]; returns the sequence and the
/// per-step clamp flags.
fn clamp_increments(incs: &[Increment]) -> Result<(HazardSequence, Vec<bool>)> {
    if let Some(t) = incs.iter().position(|inc| !inc.value.is_finite()) {
        return Err(Error::NonFiniteOutput(format!("increment at t = {} is {}", t + 1, incs[t].value)));
    }
    let mut flags = Vec::with_capacity(incs.len());
    let values = incs
        .iter()
        .map(|inc| {
            let low = inc.value < HAZARD_FLOOR;
            flags.push(low || inc.clamped);
            if low {
                HAZARD_FLOOR
            } else {
                inc.value
            }
        })
        .collect();
    Ok((HazardSequence::new(values)?, flags))
}

/// Hazards (or parametric increments) at every step, with the number of
/// entries that had to be clamped.
pub fn forward_hazards_counted(x_seq: &[Vec<f64>], params: &ModelParams) -> Result<(HazardSequence, usize)> {
    let trace = forward_trace(x_seq, params)?;
    let (h, flags) = clamp_increments(&trace.increments)?;
    Ok((h, flags.iter().filter(|&&f| f).count()))
}

pub fn forward_hazards(x_seq: &[Vec<f64>], params: &ModelParams) -> Result<HazardSequence> {
    forward_hazards_counted(x_seq, params).map(|(h, _)| h)
}

pub fn survival_curve(x_seq: &[Vec<f64>], params: &ModelParams) -> Result<SurvivalCurve> {
    forward_hazards(x_seq, params).map(|h| hazards_to_survival(&h))
}

fn check_label(x_seq: &[Vec<f64>], label: CensorLabel) -> Result<()> {
    if label.t_label == 0 || label.t_label > x_seq.len() {
        return Err(Error::Argument(format!(
            "t_label {} outside 1..={}",
            label.t_label,
            x_seq.len()
        )));
    }
    Ok(())
}

/// Per-sample loss; only the first `t_label` steps are evaluated.
pub fn loss(x_seq: &[Vec<f64>], params: &ModelParams, kind: LossKind, label: CensorLabel) -> Result<f64> {
    loss_counted(x_seq, params, kind, label).map(|(l, _)| l)
}

pub fn loss_counted(
    x_seq: &[Vec<f64>],
    params: &ModelParams,
    kind: LossKind,
    label: CensorLabel,
) -> Result<(f64, usize)> {
    check_label(x_seq, label)?;
    let (h, clamped) = forward_hazards_counted(&x_seq[..label.t_label], params)?;
    Ok((sample_loss(&h, label, kind)?, clamped))
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: ModelParams,
    /// Steps whose increment was clamped; these pass no gradient.
    pub clamped: usize,
}

/// Loss and its gradient with respect to every parameter, by
/// backpropagation through time over the first `t_label` steps.
pub fn backward(x_seq: &[Vec<f64>], params: &ModelParams, kind: LossKind, label: CensorLabel) -> Result<LossGrad> {
    check_label(x_seq, label)?;
    let n = label.t_label;
    let trace = forward_trace(&x_seq[..n], params)?;
    let (hazards, flags) = clamp_increments(&trace.increments)?;
    let loss = sample_loss(&hazards, label, kind)?;
    let dl = analytic_hazard_grad(&hazards, label, kind)?;

    let hs = params.hidden_size;
    let outputs = params.head.num_outputs();
    let mut grads = params.zeros_like();
    let mut dh_head = vec![vec![0.0; hs]; n];

    for t in 0..n {
        if flags[t] {
            continue;
        }
        let h_t = &trace.steps[t].h;
        for j in 0..outputs {
            let g = dl[t] * trace.increments[t].grad[j] * sigmoid(trace.preacts[t][j]);
            if g == 0.0 {
                continue;
            }
            let row = j * hs..(j + 1) * hs;
            for (w, hv) in grads.head_weights[row.clone()].iter_mut().zip(h_t) {
                *w += g * hv;
            }
            if params.head.has_bias() {
                grads.head_bias[j] += g;
            }
            for (d, w) in dh_head[t].iter_mut().zip(&params.head_weights[row]) {
                *d += g * w;
            }
        }
    }

    let mut carry = vec![0.0; hs];
    for t in (0..n).rev() {
        let dh: Vec<f64> = dh_head[t].iter().zip(&carry).map(|(a, b)| a + b).collect();
        carry = step_backward(&trace.steps[t], &dh, params, &mut grads);
    }

    Ok(LossGrad {
        loss,
        grads,
        clamped: flags.iter().filter(|&&f| f).count(),
    })
}

/// Sum of per-record losses over a padded batch. Each row runs over the full
/// padded length; the mask and `t_label` decide which steps enter the loss.
pub fn masked_batch_loss(params: &ModelParams, batch: &Batch, kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for b in 0..batch.len() {
        let rows = batch.padded_row(b);
        let trace = forward_trace(&rows, params)?;
        let label = batch.labels[b];
        let masked: Vec<Increment> = trace
            .increments
            .iter()
            .enumerate()
            .filter(|(t, _)| batch.mask_at(b, *t) && *t < label.t_label)
            .map(|(_, inc)| *inc)
            .collect();
        let (h, _) = clamp_increments(&masked)?;
        total += sample_loss(&h, label, kind)?;
    }
    Ok(total)
}
