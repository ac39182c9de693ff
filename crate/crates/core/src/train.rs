//! Mini-batch training with Adam and early stopping on validation loss.
//!
//! Each batch step minimises the mean per-record loss of the batch; the
//! summed form is only a constant factor away and the mean keeps the
//! learning rate independent of batch size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_batches, DatasetSplit, Normalizer, UserRecord};
use crate::model::{self, ModelKind};
use crate::nn::params::{ModelParams, Parameters};
use crate::nn::{adam_update, AdamState};
use crate::survival::LossKind;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    #[serde(alias = "loss_kind")]
    pub model: ModelKind,
    /// Loss for the parametric heads; ignored by `safe` / `safe-r`.
    pub parametric_loss: LossKind,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Safe,
            parametric_loss: LossKind::Safe,
            hidden_size: 32,
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 100,
            patience: 10,
            init_seed: 0,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossKind {
        self.model.loss(self.parametric_loss)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self.shuffle_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "hidden_size, batch_size and patience must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-record loss over the epoch's batches.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub normalizer: Normalizer,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    /// Hazard entries clamped to the floor during training and validation.
    pub clamp_count: usize,
    pub adam: AdamState<ModelParams>,
}

/// Mean per-record loss; records are assumed already normalized.
pub fn mean_loss(params: &ModelParams, records: &[UserRecord], loss: LossKind) -> Result<(f64, usize)> {
    if records.is_empty() {
        return Err(Error::Argument("mean loss of an empty record set".into()));
    }
    let parts: Vec<(f64, usize)> = records
        .par_iter()
        .map(|r| model::loss_counted(&r.covariates, params, loss, r.label()))
        .collect::<Result<_>>()?;
    let total: f64 = parts.iter().map(|p| p.0).sum();
    let clamped = parts.iter().map(|p| p.1).sum();
    Ok((total / records.len() as f64, clamped))
}

fn epoch_seed(shuffle_seed: u64, epoch: usize) -> u64 {
    shuffle_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(epoch as u64)
}

pub fn train(split: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let normalizer = Normalizer::fit(&split.train)?;
    let train_set = normalizer.apply_all(&split.train);
    let val_set = normalizer.apply_all(&split.validation);
    let loss_kind = cfg.loss();

    let mut params = ModelParams::init(normalizer.dim(), cfg.hidden_size, cfg.model.head(), cfg.init_seed)?;
    let mut adam = AdamState::new(&params, cfg.learning_rate);
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let mut stale = 0;
    let mut history = Vec::new();
    let mut clamp_count = 0;

    for epoch in 1..=cfg.epochs {
        let batches = make_batches(&train_set, cfg.batch_size, epoch_seed(cfg.shuffle_seed, epoch))?;
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let fail = |detail: String| Error::Training {
                epoch,
                batch: bi,
                detail,
            };
            let parts: Vec<model::LossGrad> = (0..batch.len())
                .into_par_iter()
                .map(|b| model::backward(&batch.row(b), &params, loss_kind, batch.labels[b]))
                .collect::<Result<_>>()
                .map_err(|e| if e.is_numerical() { fail(e.to_string()) } else { e })?;
            let scale = 1.0 / batch.len() as f64;
            let mut grads = params.zeros_like();
            for part in &parts {
                if !part.loss.is_finite() {
                    return Err(fail(format!("loss {}", part.loss)));
                }
                epoch_loss += part.loss;
                clamp_count += part.clamped;
                for (acc, g) in grads.tensors_mut().into_iter().zip(part.grads.tensors()) {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v * scale;
                    }
                }
            }
            adam_update(&mut params, &grads, &mut adam).map_err(|e| fail(e.to_string()))?;
            if !params.all_finite() {
                return Err(fail("parameters became non-finite".into()));
            }
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            let (v, c) = mean_loss(&params, &val_set, loss_kind).map_err(|e| {
                if e.is_numerical() {
                    Error::Training {
                        epoch,
                        batch: batches.len(),
                        detail: e.to_string(),
                    }
                } else {
                    e
                }
            })?;
            clamp_count += c;
            v
        };
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                batch: batches.len(),
                detail: format!("validation loss {val_loss}"),
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        if val_loss < best_val {
            best_val = val_loss;
            best.clone_from(&params);
            best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best,
        normalizer,
        history,
        best_epoch,
        clamp_count,
        adam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_dataset, GeneratorConfig};

    fn small_split(n: usize) -> DatasetSplit {
        let cfg = GeneratorConfig {
            n_users: n,
            ..Default::default()
        };
        split_dataset(&generate_synthetic(&cfg, 1).unwrap(), 1).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let split = small_split(30);
        let cfg = TrainConfig {
            epochs: 0,
            hidden_size: 4,
            init_seed: 9,
            ..Default::default()
        };
        let out = train(&split, &cfg).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.params, ModelParams::init(5, 4, crate::HeadKind::Hazard, 9).unwrap());
        assert_eq!(out.best_epoch, None);
    }

    #[test]
    fn loss_decreases_on_small_set() {
        let split = small_split(50);
        let cfg = TrainConfig {
            epochs: 30,
            hidden_size: 8,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let out = train(&split, &cfg).unwrap();
        let best = out.best_epoch.unwrap();
        assert!(out.history[best - 1].train_loss < out.history[0].train_loss);
    }

    #[test]
    fn bit_identical_history() {
        let split = small_split(40);
        let cfg = TrainConfig {
            model: ModelKind::Weibull,
            epochs: 4,
            hidden_size: 6,
            init_seed: 3,
            shuffle_seed: 4,
            ..Default::default()
        };
        let a = train(&split, &cfg).unwrap();
        let b = train(&split, &cfg).unwrap();
        let bits = |h: &[EpochStats]| h.iter().map(|e| (e.train_loss.to_bits(), e.val_loss.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&a.history), bits(&b.history));
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn invalid_config() {
        let split = small_split(20);
        for cfg in [
            TrainConfig { hidden_size: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(matches!(train(&split, &cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn config_accepts_loss_kind_alias_and_rejects_unknown_keys() {
        let c: TrainConfig = serde_json::from_str(r#"{"loss_kind":"safe-r","epochs":3}"#).unwrap();
        assert_eq!(c.model, ModelKind::SafeR);
        assert_eq!(c.batch_size, 16);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochz":3}"#).is_err());
    }

    #[test]
    fn exploding_learning_rate_surfaces_training_error() {
        let split = small_split(30);
        let cfg = TrainConfig {
            learning_rate: 1e308,
            epochs: 3,
            hidden_size: 4,
            ..Default::default()
        };
        let err = train(&split, &cfg).unwrap_err();
        assert!(matches!(err, Error::Training { epoch: 1, .. }), "{err}");
    }
}
