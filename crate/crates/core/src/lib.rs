//! Discrete-time recurrent survival models for early detection of terminal
//! events from sequences of time-varying covariates.
//!
//! A GRU consumes one covariate vector per timestep and a head maps each hidden
//! state to a positive hazard `λ_t`. The survival curve
//! `S_t = exp(-Σ_{k≤t} λ_k)` is non-increasing by construction, so a subject
//! flagged at `S_t < τ` stays flagged.
//!
//! Two training objectives are provided:
//!
//! * [`LossKind::SafeR`], the regular discrete survival negative log-likelihood
//!   (`P{T = t}` for events, `P{T ≥ t}` for censored subjects).
//! * [`LossKind::Safe`], the early-detection likelihood that replaces the event
//!   term with `P{T < t}` so every hazard before the label time is pushed up.
//!
//! Parametric heads (exponential, Weibull, Rayleigh, Poisson) live in
//! [`heads`] and plug into the same losses through per-step cumulative-hazard
//! increments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod compare;
pub mod data;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod heads;
pub mod model;
pub mod nn;
pub mod survival;
pub mod train;

pub use error::{Error, Result};
pub use heads::HeadKind;
pub use model::ModelKind;
pub use nn::params::ModelParams;
pub use survival::{CensorLabel, HazardSequence, LossKind, SurvivalCurve};

/// Largest `k` for the `@k` metric suite.
pub const K_MAX: usize = 5;
