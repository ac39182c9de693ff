//! JSON checkpoints: weights by tensor name, optional optimizer state,
//! normalization statistics and the selected threshold.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Normalizer;
use crate::eval::Threshold;
use crate::model::ModelKind;
use crate::nn::params::{ModelParams, Parameters, TENSOR_NAMES};
use crate::nn::AdamState;
use crate::survival::LossKind;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

type TensorMap = BTreeMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamCheckpoint {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub first_moment: TensorMap,
    pub second_moment: TensorMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model: ModelKind,
    pub loss: LossKind,
    pub input_size: usize,
    pub hidden_size: usize,
    pub rng_seed: u64,
    pub weights: TensorMap,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamCheckpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Threshold>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
}

fn to_map(p: &ModelParams) -> TensorMap {
    p.named_tensors()
        .into_iter()
        .map(|(name, t)| (name.to_string(), t.to_vec()))
        .collect()
}

fn fill_from_map(target: &mut ModelParams, map: &TensorMap, what: &str) -> Result<()> {
    if let Some(extra) = map.keys().find(|k| !TENSOR_NAMES.contains(&k.as_str())) {
        return Err(Error::Config(format!("{what}: unknown tensor {extra}")));
    }
    for (name, slot) in TENSOR_NAMES.iter().zip(target.tensors_mut()) {
        let values = map
            .get(*name)
            .ok_or_else(|| Error::Config(format!("{what}: missing tensor {name}")))?;
        if values.len() != slot.len() {
            return Err(Error::Shape(format!(
                "{what}: tensor {name} has {} entries, expected {}",
                values.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(values);
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(params: &ModelParams, model: ModelKind, loss: LossKind) -> Result<Self> {
        if model.head() != params.head {
            return Err(Error::Config(format!(
                "model {} does not use a {:?} head",
                model.as_str(),
                params.head
            )));
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            model,
            loss,
            input_size: params.input_size,
            hidden_size: params.hidden_size,
            rng_seed: params.rng_seed,
            weights: to_map(params),
            adam: None,
            normalizer: None,
            threshold: None,
            split_seed: None,
        })
    }

    pub fn with_adam(mut self, state: &AdamState<ModelParams>) -> Self {
        self.adam = Some(AdamCheckpoint {
            step_count: state.step_count,
            beta1: state.beta1,
            beta2: state.beta2,
            epsilon: state.epsilon,
            learning_rate: state.learning_rate,
            first_moment: to_map(&state.first_moment),
            second_moment: to_map(&state.second_moment),
        });
        self
    }

    pub fn params(&self) -> Result<ModelParams> {
        let mut p = ModelParams::zeros(self.input_size, self.hidden_size, self.model.head())?;
        p.rng_seed = self.rng_seed;
        fill_from_map(&mut p, &self.weights, "weights")?;
        Ok(p)
    }

    pub fn adam_state(&self) -> Result<Option<AdamState<ModelParams>>> {
        let Some(a) = &self.adam else { return Ok(None) };
        let like = self.params()?;
        let mut state = AdamState::new(&like, a.learning_rate);
        state.step_count = a.step_count;
        state.beta1 = a.beta1;
        state.beta2 = a.beta2;
        state.epsilon = a.epsilon;
        fill_from_map(&mut state.first_moment, &a.first_moment, "adam.first_moment")?;
        fill_from_map(&mut state.second_moment, &a.second_moment, "adam.second_moment")?;
        Ok(Some(state))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        if ck.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {}",
                ck.format_version
            )));
        }
        if let Some(n) = &ck.normalizer {
            if n.dim() != ck.input_size {
                return Err(Error::Shape(format!(
                    "normalizer dimension {} differs from input_size {}",
                    n.dim(),
                    ck.input_size
                )));
            }
        }
        ck.params()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::HeadKind;
    use proptest::prelude::*;

    fn sample(model: ModelKind, seed: u64) -> Checkpoint {
        let mut p = ModelParams::init(3, 4, model.head(), seed).unwrap();
        for (i, b) in p.update.bias.iter_mut().enumerate() {
            *b = 0.1 / (i as f64 + 3.0);
        }
        let mut adam = AdamState::new(&p, 1e-3);
        adam.step_count = 7;
        adam.first_moment.head_weights[0] = 1.0 / 3.0;
        adam.second_moment.reset.recurrent[2] = 2e-300;
        let mut ck = Checkpoint::new(&p, model, LossKind::Safe).unwrap().with_adam(&adam);
        ck.normalizer = Some(Normalizer {
            mean: vec![0.1, -0.2, 1.0 / 7.0],
            std: vec![1.0, 2.5, 0.3],
        });
        ck.threshold = Some(Threshold::new(0.123_456_789_012_345_6).unwrap());
        ck.split_seed = Some(11);
        ck
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for model in ModelKind::ALL {
            let ck = sample(model, 5);
            let path = dir.path().join("ck.json");
            ck.save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.params().unwrap(), ck.params().unwrap());
            assert_eq!(back.adam_state().unwrap().unwrap().step_count, 7);
            assert_eq!(std::fs::read_to_string(&path).unwrap(), back.to_json().unwrap() + "\n");
        }
    }

    #[test]
    fn names_every_tensor() {
        let ck = sample(ModelKind::Weibull, 1);
        let keys: Vec<_> = ck.weights.keys().map(String::as_str).collect();
        let mut expected = TENSOR_NAMES.to_vec();
        expected.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn rejects_bad_files() {
        let ck = sample(ModelKind::Safe, 1);
        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        v["format_version"] = 2.into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        v["weights"]["head.weights"] = serde_json::json!([1.0]);
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(Error::Shape(_))));

        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
        v["extra"] = 1.into();
        assert!(Checkpoint::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn head_mismatch_rejected() {
        let p = ModelParams::zeros(2, 2, HeadKind::Poisson).unwrap();
        assert!(Checkpoint::new(&p, ModelKind::Safe, LossKind::Safe).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_weights_round_trip(seed in any::<u64>(), scale in -300i32..300) {
            let mut p = ModelParams::init(2, 3, HeadKind::Hazard, seed).unwrap();
            for t in p.tensors_mut() {
                for v in t.iter_mut() {
                    *v *= 10f64.powi(scale);
                }
            }
            let ck = Checkpoint::new(&p, ModelKind::SafeR, LossKind::SafeR).unwrap();
            let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.params().unwrap(), p);
        }
    }
}
