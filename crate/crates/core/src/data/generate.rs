use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::UserRecord;
use crate::{Error, Result};

/// Synthetic benchmark settings. Defaults mirror a balanced 5 540-user set
/// with five per-step delta features and sequence lengths 12–21.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub fraud_fraction: f64,
    pub covariate_dim: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Suspension delay after onset, uniform in `delay_min..=delay_max`.
    pub delay_min: usize,
    pub delay_max: usize,
    /// Censor normal users at a uniformly drawn step instead of at the end of
    /// their sequence.
    pub scatter_censoring: bool,
    /// AR(1) coefficient of the per-feature delta process.
    pub ar_coefficient: f64,
    pub noise_std: f64,
    /// Mean shift (in units of `noise_std`) applied after onset to a random
    /// non-empty subset of features.
    pub shift_magnitude: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_users: 5540,
            fraud_fraction: 0.5,
            covariate_dim: 5,
            min_length: 12,
            max_length: 21,
            delay_min: 1,
            delay_max: 6,
            scatter_censoring: false,
            ar_coefficient: 0.5,
            noise_std: 1.0,
            shift_magnitude: 1.5,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.fraud_fraction) {
            return bad(format!("fraud_fraction {} outside [0, 1]", self.fraud_fraction));
        }
        if self.covariate_dim == 0 {
            return bad("covariate_dim must be positive".into());
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad(format!(
                "length range [{}, {}] is empty",
                self.min_length, self.max_length
            ));
        }
        if self.delay_min == 0 || self.delay_min > self.delay_max {
            return bad(format!(
                "delay range [{}, {}] must be non-empty and start at 1 or later",
                self.delay_min, self.delay_max
            ));
        }
        if self.min_length < self.delay_max + 2 {
            return bad(format!(
                "min_length {} leaves no onset time in [2, length − {}]",
                self.min_length, self.delay_max
            ));
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return bad(format!("ar_coefficient {} is not stationary", self.ar_coefficient));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) || !self.shift_magnitude.is_finite() {
            return bad("noise_std must be positive and shift_magnitude finite".into());
        }
        Ok(())
    }

    pub fn n_fraud(&self) -> usize {
        (self.n_users as f64 * self.fraud_fraction).round() as usize
    }
}

/// Deterministic synthetic dataset.
///
/// Every user's per-step deltas follow a stationary AR(1) process. A
/// fraudster's deltas gain a mean shift on some features from the onset time
/// `τ ∈ [2, L − delay_max]` onwards, and the suspension label arrives
/// `delay ∈ [delay_min, delay_max]` steps after onset.
pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<UserRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_fraud = cfg.n_fraud();
    let mut is_fraud: Vec<bool> = (0..cfg.n_users).map(|i| i < n_fraud).collect();
    is_fraud.shuffle(&mut rng);

    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let phi = cfg.ar_coefficient;
    let stationary_sd = 1.0 / (1.0 - phi * phi).sqrt();

    let mut out = Vec::with_capacity(cfg.n_users);
    for (i, &fraud) in is_fraud.iter().enumerate() {
        let len = rng.random_range(cfg.min_length..=cfg.max_length);
        let mut state: Vec<f64> = (0..cfg.covariate_dim)
            .map(|_| noise.sample(&mut rng) * stationary_sd)
            .collect();
        let mut covariates = Vec::with_capacity(len);
        for t in 0..len {
            if t > 0 {
                for s in state.iter_mut() {
                    *s = phi * *s + noise.sample(&mut rng);
                }
            }
            covariates.push(state.clone());
        }

        let record = if fraud {
            let onset = rng.random_range(2..=len - cfg.delay_max);
            let delay = rng.random_range(cfg.delay_min..=cfg.delay_max);
            let mut shifted: Vec<bool> = (0..cfg.covariate_dim).map(|_| rng.random_bool(0.5)).collect();
            if !shifted.iter().any(|&s| s) {
                let k = rng.random_range(0..cfg.covariate_dim);
                shifted[k] = true;
            }
            let shift = cfg.shift_magnitude * cfg.noise_std;
            for row in covariates.iter_mut().skip(onset - 1) {
                for (v, &on) in row.iter_mut().zip(&shifted) {
                    if on {
                        *v += shift;
                    }
                }
            }
            UserRecord {
                user_id: format!("u{i:06}"),
                covariates,
                c: 1,
                t_label: onset + delay,
                ground_truth_fraud_time: Some(onset),
            }
        } else {
            let t_label = if cfg.scatter_censoring {
                rng.random_range(1..=len)
            } else {
                len
            };
            covariates.truncate(t_label);
            UserRecord {
                user_id: format!("u{i:06}"),
                covariates,
                c: 0,
                t_label,
                ground_truth_fraud_time: None,
            }
        };
        out.push(record);
    }
    Ok(out)
}

/// Users with pure-noise covariates whose event time is geometric with
/// `P{T > t} = e^{−rate·t}`, observed over `length` steps.
pub fn generate_constant_hazard(
    n_users: usize,
    covariate_dim: usize,
    rate: f64,
    length: usize,
    seed: u64,
) -> Result<Vec<UserRecord>> {
    if !(rate > 0.0) || length == 0 || covariate_dim == 0 {
        return Err(Error::Config("rate, length and covariate_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_event = -(-rate).exp_m1();
    let noise = Normal::new(0.0, 1.0).unwrap();
    Ok((0..n_users)
        .map(|i| {
            let covariates: Vec<Vec<f64>> = (0..length)
                .map(|_| (0..covariate_dim).map(|_| noise.sample(&mut rng)).collect())
                .collect();
            let event_time = (1..=length).find(|_| rng.random_bool(p_event));
            let (c, t_label) = match event_time {
                Some(t) => (1, t),
                None => (0, length),
            };
            UserRecord {
                user_id: format!("h{i:06}"),
                covariates,
                c,
                t_label,
                ground_truth_fraud_time: None,
            }
        })
        .collect())
}
