//! Analytic-versus-finite-difference gradient suites and the hazard
//! gradient sign laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{self, ModelKind};
use crate::nn::finite_diff::{finite_diff_gradient, relative_error, DEFAULT_STEP};
use crate::nn::params::{ModelParams, Parameters};
use crate::survival::{analytic_hazard_grad, sample_loss, CensorLabel, HazardSequence, LossKind};
use crate::Result;

pub const HAZARD_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;
/// Relative-error floor: `1e-4` relative or `1e-7` absolute.
pub const MODEL_FLOOR: f64 = 1e-3;
/// Hazard gradients are compared purely relatively.
pub const HAZARD_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub hazard_cases: usize,
    /// Instances per (model, censor class) suite.
    pub model_cases: usize,
    /// Perturbs every analytic gradient; the run must then fail.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            hazard_cases: 200,
            model_cases: 10,
            corrupt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    /// `None` for suites that check exact laws rather than tolerances.
    pub max_rel_error: Option<f64>,
    pub tolerance: Option<f64>,
    pub violations: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn failing(&self) -> impl Iterator<Item = &SuiteResult> {
        self.suites.iter().filter(|s| !s.passed)
    }
}

const CORRUPTION: f64 = 1.0 + 1e-3;

fn suite_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0xA24B_AED4_963E_E407).wrapping_add(tag)
}

/// Random hazards with a random censor label.
pub fn hazard_instance(rng: &mut ChaCha8Rng) -> (HazardSequence, CensorLabel) {
    let len = rng.random_range(1..=12);
    let values = (0..len).map(|_| rng.random_range(0.05..3.0)).collect();
    let label = CensorLabel::new(rng.random_bool(0.5), rng.random_range(1..=len));
    (HazardSequence::new(values).expect("positive hazards"), label)
}

fn tolerance_suite(name: String, errors: Vec<f64>, tol: f64) -> SuiteResult {
    let max = errors.iter().copied().fold(0.0, f64::max);
    let violations = errors.iter().filter(|&&e| !(e <= tol)).count();
    SuiteResult {
        name,
        cases: errors.len(),
        max_rel_error: Some(max),
        tolerance: Some(tol),
        violations,
        passed: violations == 0,
    }
}

pub fn hazard_suite(kind: LossKind, opts: &GradcheckOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed(opts.seed, 1));
    let mut errors = Vec::with_capacity(opts.hazard_cases);
    for _ in 0..opts.hazard_cases {
        let (h, label) = hazard_instance(&mut rng);
        let mut analytic = analytic_hazard_grad(&h, label, kind)?;
        if opts.corrupt {
            analytic.iter_mut().for_each(|g| *g *= CORRUPTION);
        }
        let f = |v: &Vec<f64>| {
            HazardSequence::new(v.clone())
                .and_then(|h| sample_loss(&h, label, kind))
                .unwrap_or(f64::NAN)
        };
        let fd = finite_diff_gradient(f, &h.values().to_vec(), DEFAULT_STEP);
        let err = analytic
            .iter()
            .zip(&fd)
            .map(|(a, b)| relative_error(*a, *b, HAZARD_FLOOR))
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(tolerance_suite(format!("hazard-grad/{}", kind.as_str()), errors, HAZARD_TOLERANCE))
}

pub fn sign_law_suite(opts: &GradcheckOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed(opts.seed, 1));
    let mut violations = 0;
    for _ in 0..opts.hazard_cases {
        let (h, label) = hazard_instance(&mut rng);
        let scale = if opts.corrupt { CORRUPTION } else { 1.0 };
        let safe = analytic_hazard_grad(&h, label, LossKind::Safe)?;
        let safe_r = analytic_hazard_grad(&h, label, LossKind::SafeR)?;
        let ok = if label.event {
            safe.iter().all(|&g| g * scale < 0.0)
                && safe_r[..label.t_label - 1].iter().all(|&g| g * scale == 1.0)
        } else {
            safe.iter().chain(&safe_r).all(|&g| g * scale == 1.0)
        };
        violations += usize::from(!ok);
    }
    Ok(SuiteResult {
        name: "sign-law".into(),
        cases: opts.hazard_cases,
        max_rel_error: None,
        tolerance: None,
        violations,
        passed: violations == 0,
    })
}

/// A small random model and sequence for gradient checking.
pub fn model_instance(model: ModelKind, event: bool, rng: &mut ChaCha8Rng) -> Result<(ModelParams, Vec<Vec<f64>>, CensorLabel)> {
    let input = rng.random_range(1..=3);
    let hidden = rng.random_range(1..=4);
    let len = rng.random_range(1..=5);
    let mut params = ModelParams::init(input, hidden, model.head(), rng.random())?;
    for gate in [&mut params.update, &mut params.reset, &mut params.candidate] {
        gate.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    params.head_bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    let x = (0..len)
        .map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let label = CensorLabel::new(event, rng.random_range(1..=len));
    Ok((params, x, label))
}

pub fn bptt_suite(model: ModelKind, event: bool, opts: &GradcheckOptions) -> Result<SuiteResult> {
    let tag = 100 + 2 * ModelKind::ALL.iter().position(|&m| m == model).unwrap_or(0) as u64 + u64::from(event);
    let mut rng = ChaCha8Rng::seed_from_u64(suite_seed(opts.seed, tag));
    let mut errors = Vec::with_capacity(opts.model_cases);
    for i in 0..opts.model_cases {
        let (params, x, label) = model_instance(model, event, &mut rng)?;
        // Parametric heads alternate between the two losses.
        let loss = match model {
            ModelKind::Safe | ModelKind::SafeR => model.loss(LossKind::Safe),
            _ if i % 2 == 0 => LossKind::Safe,
            _ => LossKind::SafeR,
        };
        let mut analytic = model::backward(&x, &params, loss, label)?.grads;
        if opts.corrupt {
            analytic.tensors_mut().into_iter().flatten().for_each(|g| *g *= CORRUPTION);
        }
        let f = |p: &ModelParams| model::loss(&x, p, loss, label).unwrap_or(f64::NAN);
        let fd = finite_diff_gradient(f, &params, DEFAULT_STEP);
        let err = analytic
            .tensors()
            .iter()
            .zip(fd.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| relative_error(*u, *v, MODEL_FLOOR)))
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let class = if event { "event" } else { "censored" };
    Ok(tolerance_suite(format!("bptt/{}/{class}", model.as_str()), errors, MODEL_TOLERANCE))
}

pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut suites = vec![
        hazard_suite(LossKind::Safe, opts)?,
        hazard_suite(LossKind::SafeR, opts)?,
        sign_law_suite(opts)?,
    ];
    let cells: Vec<(ModelKind, bool)> = ModelKind::ALL
        .iter()
        .flat_map(|&m| [(m, false), (m, true)])
        .collect();
    let bptt: Vec<SuiteResult> = cells
        .par_iter()
        .map(|&(m, e)| bptt_suite(m, e, opts))
        .collect::<Result<_>>()?;
    suites.extend(bptt);
    Ok(GradcheckReport { seed: opts.seed, suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_passes() {
        let report = run(&GradcheckOptions::default()).unwrap();
        for s in &report.suites {
            assert!(s.passed, "{s:?}");
        }
        assert_eq!(report.suites.len(), 3 + 12);
    }

    #[test]
    fn corruption_fails_every_suite() {
        let opts = GradcheckOptions {
            corrupt: true,
            hazard_cases: 20,
            model_cases: 2,
            ..Default::default()
        };
        let report = run(&opts).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failing().count(), report.suites.len());
    }

    #[test]
    fn coverage_lists_every_model_and_class() {
        let opts = GradcheckOptions {
            hazard_cases: 1,
            model_cases: 1,
            ..Default::default()
        };
        let names: Vec<_> = run(&opts).unwrap().suites.into_iter().map(|s| s.name).collect();
        for m in ModelKind::ALL {
            for class in ["event", "censored"] {
                assert!(names.contains(&format!("bptt/{}/{class}", m.as_str())));
            }
        }
    }
}
