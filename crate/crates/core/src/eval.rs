//! Threshold selection, @k classification metrics and early-detection
//! reports. Records passed here must already be normalized.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::UserRecord;
use crate::model;
use crate::nn::params::ModelParams;
use crate::survival::SurvivalCurve;
use crate::{Error, Result, K_MAX};

/// Survival cutoff in `(0, 1)`; a user is flagged once `S_t < τ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(Error::Argument(format!("threshold {tau} outside (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsAtK {
    pub fn from_counts(k: usize, tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            k,
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            tp,
            fp,
            tn,
            fn_,
        }
    }
}

/// Metrics averaged over `k = 1..=K_MAX`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

impl MeanMetrics {
    pub fn of(at_k: &[MetricsAtK]) -> Self {
        let n = at_k.len().max(1) as f64;
        let mean = |f: fn(&MetricsAtK) -> f64| at_k.iter().map(f).sum::<f64>() / n;
        Self {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            accuracy: mean(|m| m.accuracy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub t_label: usize,
    pub n_fraudsters: usize,
    pub n_early: usize,
    pub fraction_early_detected: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_early_timestamps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyDetectionReport {
    pub groups: Vec<GroupReport>,
    pub n_fraudsters: usize,
    pub n_early: usize,
    pub fraction_early_detected: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_early_timestamps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub threshold: Threshold,
    pub at_k: Vec<MetricsAtK>,
    pub mean: MeanMetrics,
    pub early: EarlyDetectionReport,
}

pub fn curves(params: &ModelParams, records: &[UserRecord]) -> Result<Vec<SurvivalCurve>> {
    records
        .par_iter()
        .map(|r| model::survival_curve(&r.covariates, params))
        .collect()
}

/// Smallest 1-based `t` with `S_t < τ`.
pub fn predict_flag_time(params: &ModelParams, record: &UserRecord, tau: Threshold) -> Result<Option<usize>> {
    Ok(model::survival_curve(&record.covariates, params)?.first_below(tau.value()))
}

/// Whether a curve is flagged using its first `k` steps. Checks that the
/// first-flag rule and the `S_k < τ` rule agree.
fn flagged_by(curve: &SurvivalCurve, tau: f64, k: usize) -> bool {
    let kk = k.min(curve.len());
    let by_flag = curve.first_below(tau).is_some_and(|t| t <= kk);
    let by_value = curve.at(kk) < tau;
    assert_eq!(by_flag, by_value, "survival curve is not monotone");
    by_flag
}

pub fn metrics_from_curves(
    curves: &[SurvivalCurve],
    records: &[UserRecord],
    tau: Threshold,
    k: usize,
) -> Result<MetricsAtK> {
    if records.is_empty() {
        return Err(Error::Argument("metrics of an empty record set".into()));
    }
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (curve, r) in curves.iter().zip(records) {
        match (flagged_by(curve, tau.value(), k), r.is_event()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(MetricsAtK::from_counts(k, tp, fp, tn, fn_))
}

pub fn metrics_at_k(params: &ModelParams, tau: Threshold, test: &[UserRecord], k: usize) -> Result<MetricsAtK> {
    metrics_from_curves(&curves(params, test)?, test, tau, k)
}

/// Per-`k` survival values `S_min(k, len)` split by class, each sorted.
fn survival_columns(curves: &[SurvivalCurve], records: &[UserRecord]) -> [Vec<Vec<f64>>; 2] {
    let mut cols = [vec![Vec::new(); K_MAX], vec![Vec::new(); K_MAX]];
    for (curve, r) in curves.iter().zip(records) {
        let class = usize::from(r.is_event());
        for k in 1..=K_MAX {
            cols[class][k - 1].push(curve.at(k.min(curve.len())));
        }
    }
    for side in cols.iter_mut() {
        for col in side.iter_mut() {
            col.sort_by(f64::total_cmp);
        }
    }
    cols
}

/// Mean F1 over `k = 1..=K_MAX` for threshold `tau`.
fn mean_f1(cols: &[Vec<Vec<f64>>; 2], tau: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..K_MAX {
        let neg = &cols[0][k];
        let pos = &cols[1][k];
        let tp = pos.partition_point(|&s| s < tau);
        let fp = neg.partition_point(|&s| s < tau);
        total += MetricsAtK::from_counts(k + 1, tp, fp, neg.len() - fp, pos.len() - tp).f1;
    }
    total / K_MAX as f64
}

/// Candidate thresholds: distinct observed survival values, midpoints
/// between neighbours, and one point above the largest value.
fn candidate_grid(curves: &[SurvivalCurve]) -> Vec<f64> {
    let mut values: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.values()[..c.len().min(K_MAX)].iter().copied())
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut grid = Vec::with_capacity(2 * values.len() + 1);
    for w in values.windows(2) {
        grid.push(w[0]);
        grid.push(0.5 * (w[0] + w[1]));
    }
    if let Some(&last) = values.last() {
        grid.push(last);
        grid.push(0.5 * (last + 1.0));
    }
    grid.retain(|&t| t > 0.0 && t < 1.0);
    grid
}

pub fn select_threshold_from_curves(curves: &[SurvivalCurve], validation: &[UserRecord]) -> Result<Threshold> {
    let n_pos = validation.iter().filter(|r| r.is_event()).count();
    if n_pos == 0 || n_pos == validation.len() {
        return Err(Error::Data("threshold selection needs both classes in validation".into()));
    }
    let cols = survival_columns(curves, validation);
    let mut best: Option<(f64, f64)> = None;
    for tau in candidate_grid(curves) {
        let f1 = mean_f1(&cols, tau);
        match best {
            Some((bf, bt)) if f1 < bf || (f1 == bf && tau <= bt) => {}
            _ => best = Some((f1, tau)),
        }
    }
    let (_, tau) = best.ok_or_else(|| Error::Data("no candidate thresholds in (0, 1)".into()))?;
    Threshold::new(tau)
}

/// Threshold maximizing mean F1 over `k = 1..=K_MAX` on validation data,
/// ties going to the larger threshold.
pub fn select_threshold(params: &ModelParams, validation: &[UserRecord]) -> Result<Threshold> {
    select_threshold_from_curves(&curves(params, validation)?, validation)
}

pub fn early_detection_from_curves(
    curves: &[SurvivalCurve],
    records: &[UserRecord],
    tau: Threshold,
) -> EarlyDetectionReport {
    // t_label -> (fraudsters, early, summed lead)
    let mut groups: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (curve, r) in curves.iter().zip(records) {
        if !r.is_event() {
            continue;
        }
        let g = groups.entry(r.t_label).or_default();
        g.0 += 1;
        if let Some(t) = curve.first_below(tau.value()).filter(|&t| t < r.t_label) {
            g.1 += 1;
            g.2 += r.t_label - t;
        }
    }
    let mean = |early: usize, lead: usize| (early > 0).then(|| lead as f64 / early as f64);
    let (mut n, mut early, mut lead) = (0, 0, 0);
    let groups = groups
        .into_iter()
        .map(|(t_label, (gn, ge, gl))| {
            n += gn;
            early += ge;
            lead += gl;
            GroupReport {
                t_label,
                n_fraudsters: gn,
                n_early: ge,
                fraction_early_detected: ratio(ge, gn),
                mean_early_timestamps: mean(ge, gl),
            }
        })
        .collect();
    EarlyDetectionReport {
        groups,
        n_fraudsters: n,
        n_early: early,
        fraction_early_detected: ratio(early, n),
        mean_early_timestamps: mean(early, lead),
    }
}

/// Fraudsters grouped by label time; a fraudster counts as early when
/// flagged strictly before its label time.
pub fn early_detection_report(params: &ModelParams, tau: Threshold, test: &[UserRecord]) -> Result<EarlyDetectionReport> {
    Ok(early_detection_from_curves(&curves(params, test)?, test, tau))
}

/// Metrics at `k = 1..=K_MAX`, their mean, and the early-detection report.
pub fn evaluate(params: &ModelParams, tau: Threshold, test: &[UserRecord]) -> Result<Evaluation> {
    let cs = curves(params, test)?;
    let at_k = (1..=K_MAX)
        .map(|k| metrics_from_curves(&cs, test, tau, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        threshold: tau,
        mean: MeanMetrics::of(&at_k),
        at_k,
        early: early_detection_from_curves(&cs, test, tau),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{hazards_to_survival, HazardSequence};
    use crate::HeadKind;

    fn record(id: &str, event: bool, len: usize, t_label: usize) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            covariates: vec![vec![0.0]; len],
            c: u8::from(event),
            t_label,
            ground_truth_fraud_time: None,
        }
    }

    fn const_curve(lambda: f64, len: usize) -> SurvivalCurve {
        hazards_to_survival(&HazardSequence::new(vec![lambda; len]).unwrap())
    }

    fn zero_model() -> ModelParams {
        ModelParams::zeros(1, 2, HeadKind::Hazard).unwrap()
    }

    #[test]
    fn threshold_domain() {
        assert!(Threshold::new(0.0).is_err());
        assert!(Threshold::new(1.0).is_err());
        assert!(Threshold::new(f64::NAN).is_err());
        assert!(Threshold::new(0.5).is_ok());
    }

    #[test]
    fn flag_time_examples() {
        let p = zero_model();
        let r = record("a", false, 12, 12);
        assert_eq!(predict_flag_time(&p, &r, Threshold::new(1.0 - 1e-12).unwrap()).unwrap(), Some(1));
        assert_eq!(predict_flag_time(&p, &r, Threshold::new(1e-300).unwrap()).unwrap(), None);
        assert_eq!(predict_flag_time(&p, &r, Threshold::new(0.3).unwrap()).unwrap(), Some(2));
    }

    #[test]
    fn flag_everyone_and_no_one() {
        let p = zero_model();
        let test: Vec<_> = (0..10).map(|i| record(&i.to_string(), i < 3, 12, 12)).collect();
        let all = metrics_at_k(&p, Threshold::new(1.0 - 1e-12).unwrap(), &test, 1).unwrap();
        assert_eq!(all.recall, 1.0);
        assert_eq!(all.accuracy, 0.3);
        let none = metrics_at_k(&p, Threshold::new(1e-300).unwrap(), &test, 5).unwrap();
        assert_eq!((none.precision, none.f1), (0.0, 0.0));
        assert_eq!(none.accuracy, 0.7);
        assert!(metrics_at_k(&p, Threshold::new(0.5).unwrap(), &[], 1).is_err());
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let m = MetricsAtK::from_counts(1, 3, 1, 4, 2);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert!((m.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.7);
    }

    #[test]
    fn separable_curves_reach_perfect_f1_at_five() {
        let records: Vec<_> = (0..20).map(|i| record(&i.to_string(), i % 2 == 0, 12, 12)).collect();
        let curves: Vec<_> = records
            .iter()
            .enumerate()
            .map(|(i, r)| const_curve(if r.is_event() { 0.5 + 0.01 * i as f64 } else { 0.01 + 0.001 * i as f64 }, 12))
            .collect();
        let tau = select_threshold_from_curves(&curves, &records).unwrap();
        assert_eq!(metrics_from_curves(&curves, &records, tau, 5).unwrap().f1, 1.0);
        assert_eq!(metrics_from_curves(&curves, &records, tau, 5).unwrap().accuracy, 1.0);
    }

    #[test]
    fn identical_curves_pick_better_degenerate_rule() {
        let records: Vec<_> = (0..10).map(|i| record(&i.to_string(), i < 4, 12, 12)).collect();
        let curves = vec![const_curve(0.2, 12); 10];
        let tau = select_threshold_from_curves(&curves, &records).unwrap();
        let mf1 = mean_f1(&survival_columns(&curves, &records), tau.value());
        let flag_all = 2.0 * 0.4 / 1.4;
        assert!((mf1 - flag_all).abs() < 1e-15);
    }

    #[test]
    fn single_class_validation_rejected() {
        let records: Vec<_> = (0..5).map(|i| record(&i.to_string(), true, 12, 12)).collect();
        let curves = vec![const_curve(0.2, 12); 5];
        assert!(matches!(select_threshold_from_curves(&curves, &records), Err(Error::Data(_))));
    }

    #[test]
    fn early_detection_fixture() {
        // Flags at 3, 6 and never; label times 12, 12 and 15.
        let records = vec![record("a", true, 15, 12), record("b", true, 15, 12), record("c", true, 15, 15), record("n", false, 15, 15)];
        let curves = vec![const_curve(0.25, 15), const_curve(0.13, 15), const_curve(1e-3, 15), const_curve(1.0, 15)];
        let tau = Threshold::new(0.52).unwrap();
        assert_eq!(curves[0].first_below(0.52), Some(3));
        assert_eq!(curves[1].first_below(0.52), Some(6));
        let rep = early_detection_from_curves(&curves, &records, tau);
        assert_eq!(rep.groups.len(), 2);
        assert_eq!(rep.groups[0].t_label, 12);
        assert_eq!(rep.groups[0].n_early, 2);
        assert_eq!(rep.groups[0].mean_early_timestamps, Some((9.0 + 6.0) / 2.0));
        assert_eq!(rep.groups[1].fraction_early_detected, 0.0);
        assert_eq!(rep.groups[1].mean_early_timestamps, None);
        assert_eq!(rep.n_fraudsters, 3);
        assert!((rep.fraction_early_detected - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.mean_early_timestamps, Some(7.5));
    }

    #[test]
    fn no_flags_means_absent_lead() {
        let records = vec![record("a", true, 12, 12)];
        let rep = early_detection_from_curves(&[const_curve(0.01, 12)], &records, Threshold::new(1e-9).unwrap());
        assert_eq!(rep.fraction_early_detected, 0.0);
        assert_eq!(rep.mean_early_timestamps, None);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(!json.contains("mean_early_timestamps"));
    }

    #[test]
    fn short_records_use_full_length() {
        let records = vec![record("a", true, 2, 2), record("b", false, 2, 2)];
        let curves = vec![const_curve(1.0, 2), const_curve(0.01, 2)];
        let tau = Threshold::new(0.2).unwrap();
        let m = metrics_from_curves(&curves, &records, tau, 5).unwrap();
        assert_eq!((m.tp, m.tn), (1, 1));
    }

    /// Mean F1 on a dense uniform grid, independent of the candidate logic.
    fn dense_scan(curves: &[SurvivalCurve], records: &[UserRecord], points: usize) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 1..points {
            let tau = Threshold::new(i as f64 / points as f64).unwrap();
            let f1 = (1..=K_MAX)
                .map(|k| metrics_from_curves(curves, records, tau, k).unwrap().f1)
                .sum::<f64>()
                / K_MAX as f64;
            if f1 >= best.0 {
                best = (f1, tau.value());
            }
        }
        best
    }

    #[test]
    fn grid_search_matches_dense_oracle() {
        use crate::data::{generate_synthetic, GeneratorConfig, Normalizer};
        let cfg = GeneratorConfig {
            n_users: 200,
            ..Default::default()
        };
        let records = generate_synthetic(&cfg, 17).unwrap();
        let records = Normalizer::fit(&records).unwrap().apply_all(&records);
        let params = ModelParams::init(5, 6, HeadKind::Hazard, 3).unwrap();
        let cs = curves(&params, &records).unwrap();
        let tau = select_threshold_from_curves(&cs, &records).unwrap();
        let cols = survival_columns(&cs, &records);
        let ours = mean_f1(&cols, tau.value());
        let (dense, _) = dense_scan(&cs, &records, 10_000);
        // The candidate grid is exhaustive, so it can only do better.
        assert!(ours >= dense - 1e-12, "{ours} < {dense}");
        // And every achievable confusion state is hit by some grid cell
        // unless two survival values fall inside one cell.
        assert!(ours - dense < 0.05, "{ours} vs {dense}");
    }
}
