//! Multi-seed comparison of model configurations on one dataset split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::eval::{self, EarlyDetectionReport, Evaluation, MeanMetrics, MetricsAtK, Threshold};
use crate::train::{self, TrainConfig, TrainOutcome};
use crate::{Error, Result, K_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedConfig {
    pub name: String,
    pub train: TrainConfig,
}

impl NamedConfig {
    /// Named after its model kind.
    pub fn from_config(train: TrainConfig) -> Self {
        Self {
            name: train.model.as_str().to_string(),
            train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub evaluation: Evaluation,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub clamp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CellMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

/// One table row: a configuration at one `k`, or the mean over `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    /// `"1"` to `"5"`, or `"mean"`.
    pub k: String,
    pub n_seeds: usize,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
    pub accuracy: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub rows: Vec<SummaryRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction_early_detected: Option<Stat>,
    /// Over seeds where at least one fraudster was detected early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_early_timestamps: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seeds: Vec<u64>,
    pub cells: Vec<CellResult>,
    pub summaries: Vec<ConfigSummary>,
}

/// Trains one configuration, selects τ on validation and evaluates on test.
pub fn run_cell(split: &DatasetSplit, cfg: &TrainConfig) -> Result<(TrainOutcome, Evaluation)> {
    let outcome = train::train(split, cfg)?;
    let val = outcome.normalizer.apply_all(&split.validation);
    let test = outcome.normalizer.apply_all(&split.test);
    let tau: Threshold = eval::select_threshold(&outcome.params, &val)?;
    let evaluation = eval::evaluate(&outcome.params, tau, &test)?;
    Ok((outcome, evaluation))
}

fn summarize(name: &str, cells: &[&CellResult]) -> ConfigSummary {
    let ok: Vec<&CellMetrics> = cells.iter().filter_map(|c| c.metrics.as_ref()).collect();
    let row = |k: String, pick: &dyn Fn(&CellMetrics) -> MeanMetrics| {
        let ms: Vec<MeanMetrics> = ok.iter().map(|c| pick(c)).collect();
        let stat = |f: fn(&MeanMetrics) -> f64| Stat::of(&ms.iter().map(f).collect::<Vec<_>>());
        Some(SummaryRow {
            config: name.to_string(),
            k,
            n_seeds: ms.len(),
            precision: stat(|m| m.precision)?,
            recall: stat(|m| m.recall)?,
            f1: stat(|m| m.f1)?,
            accuracy: stat(|m| m.accuracy)?,
        })
    };
    let as_mean = |m: &MetricsAtK| MeanMetrics {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        accuracy: m.accuracy,
    };
    let mut rows: Vec<SummaryRow> = (0..K_MAX)
        .filter_map(|i| row((i + 1).to_string(), &|c| as_mean(&c.evaluation.at_k[i])))
        .collect();
    rows.extend(row("mean".into(), &|c| c.evaluation.mean));
    let early: Vec<&EarlyDetectionReport> = ok.iter().map(|c| &c.evaluation.early).collect();
    ConfigSummary {
        config: name.to_string(),
        n_ok: ok.len(),
        n_failed: cells.len() - ok.len(),
        rows,
        fraction_early_detected: Stat::of(&early.iter().map(|e| e.fraction_early_detected).collect::<Vec<_>>()),
        mean_early_timestamps: Stat::of(&early.iter().filter_map(|e| e.mean_early_timestamps).collect::<Vec<_>>()),
    }
}

/// Every configuration under every seed. Cells run in parallel; a failed
/// cell is recorded and the rest continue.
pub fn compare_models(split: &DatasetSplit, cfgs: &[NamedConfig], seeds: &[u64]) -> Result<ComparisonTable> {
    if cfgs.is_empty() || seeds.is_empty() {
        return Err(Error::Config("comparison needs at least one config and one seed".into()));
    }
    let jobs: Vec<(&NamedConfig, u64)> = cfgs
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = c.train.clone().with_seed(seed);
            let (metrics, error) = match run_cell(split, &cfg) {
                Ok((outcome, evaluation)) => (
                    Some(CellMetrics {
                        evaluation,
                        epochs_run: outcome.history.len(),
                        best_epoch: outcome.best_epoch,
                        clamp_count: outcome.clamp_count,
                    }),
                    None,
                ),
                Err(e) => {
                    log::warn!("{} seed {seed}: {e}", c.name);
                    (None, Some(e.to_string()))
                }
            };
            CellResult {
                config: c.name.clone(),
                seed,
                metrics,
                error,
            }
        })
        .collect();
    let summaries = cfgs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let own: Vec<&CellResult> = cells[i * seeds.len()..(i + 1) * seeds.len()].iter().collect();
            summarize(&c.name, &own)
        })
        .collect();
    Ok(ComparisonTable {
        seeds: seeds.to_vec(),
        cells,
        summaries,
    })
}

impl ComparisonTable {
    pub fn summary(&self, config: &str) -> Option<&ConfigSummary> {
        self.summaries.iter().find(|s| s.config == config)
    }

    /// One row per configuration and `k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "config,k,n_seeds,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,accuracy_mean,accuracy_std,fraction_early_detected_mean,fraction_early_detected_std\n",
        );
        for s in &self.summaries {
            let (fe, fs) = s
                .fraction_early_detected
                .map(|st| (st.mean.to_string(), st.std.to_string()))
                .unwrap_or_default();
            for r in &s.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{fe},{fs}\n",
                    r.config,
                    r.k,
                    r.n_seeds,
                    r.precision.mean,
                    r.precision.std,
                    r.recall.mean,
                    r.recall.std,
                    r.f1.mean,
                    r.f1.std,
                    r.accuracy.mean,
                    r.accuracy.std,
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_dataset, GeneratorConfig};
    use crate::model::ModelKind;

    fn split() -> DatasetSplit {
        let cfg = GeneratorConfig {
            n_users: 80,
            ..Default::default()
        };
        split_dataset(&generate_synthetic(&cfg, 2).unwrap(), 2).unwrap()
    }

    fn quick(model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            hidden_size: 4,
            epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn stat_of_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(Stat::of(&[4.0]).unwrap().std, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn single_cell_matches_direct_run() {
        let split = split();
        let cfg = quick(ModelKind::Safe);
        let table = compare_models(&split, &[NamedConfig::from_config(cfg.clone())], &[5]).unwrap();
        let (_, direct) = run_cell(&split, &cfg.with_seed(5)).unwrap();
        let cell = table.cells[0].metrics.as_ref().unwrap();
        assert_eq!(cell.evaluation, direct);
        let mean_row = table.summaries[0].rows.last().unwrap();
        assert_eq!(mean_row.k, "mean");
        assert_eq!(mean_row.f1.mean, direct.mean.f1);
        assert_eq!(mean_row.f1.std, 0.0);
    }

    #[test]
    fn duplicated_config_gives_identical_rows() {
        let split = split();
        let a = NamedConfig::from_config(quick(ModelKind::Weibull));
        let mut b = a.clone();
        b.name = "weibull-copy".into();
        let table = compare_models(&split, &[a, b], &[1, 2]).unwrap();
        let strip = |s: &ConfigSummary| s.rows.iter().map(|r| (r.k.clone(), r.f1, r.accuracy)).collect::<Vec<_>>();
        assert_eq!(strip(&table.summaries[0]), strip(&table.summaries[1]));
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * (K_MAX + 1));
    }

    #[test]
    fn failed_cell_is_recorded() {
        let split = split();
        let bad = NamedConfig {
            name: "bad".into(),
            train: TrainConfig {
                hidden_size: 0,
                ..quick(ModelKind::Safe)
            },
        };
        let table = compare_models(&split, &[bad, NamedConfig::from_config(quick(ModelKind::SafeR))], &[0]).unwrap();
        assert!(table.cells[0].error.is_some());
        assert_eq!(table.summaries[0].n_failed, 1);
        assert!(table.summaries[0].rows.is_empty());
        assert_eq!(table.summaries[1].n_ok, 1);
        assert!(compare_models(&split, &[], &[0]).is_err());
    }
}
