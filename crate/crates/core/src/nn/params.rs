use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::heads::HeadKind;
use crate::{Error, Result};

/// A set of named flat tensors that the optimizer and the finite-difference
/// oracle can walk entry by entry.
pub trait Parameters: Clone {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Weights of one GRU gate: `W x + U h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    /// `hidden × input`, row-major.
    pub input: Vec<f64>,
    /// `hidden × hidden`, row-major.
    pub recurrent: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GateWeights {
    fn zeros(input_size: usize, hidden_size: usize) -> Self {
        Self {
            input: vec![0.0; hidden_size * input_size],
            recurrent: vec![0.0; hidden_size * hidden_size],
            bias: vec![0.0; hidden_size],
        }
    }
}

/// Every trainable weight of a recurrent survival model.
///
/// The hazard head is a single bias-free vector (`λ_t = softplus(w · h_t)`);
/// parametric heads carry one weight row and one bias per distribution
/// parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub rng_seed: u64,
    pub head: HeadKind,
    pub update: GateWeights,
    pub reset: GateWeights,
    pub candidate: GateWeights,
    /// `outputs × hidden`, row-major.
    pub head_weights: Vec<f64>,
    /// Empty for the hazard head.
    pub head_bias: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 11] = [
    "update.input",
    "update.recurrent",
    "update.bias",
    "reset.input",
    "reset.recurrent",
    "reset.bias",
    "candidate.input",
    "candidate.recurrent",
    "candidate.bias",
    "head.weights",
    "head.bias",
];

impl ModelParams {
    pub fn zeros(input_size: usize, hidden_size: usize, head: HeadKind) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 {
            return Err(Error::Argument(format!(
                "input_size ({input_size}) and hidden_size ({hidden_size}) must be positive"
            )));
        }
        let outputs = head.num_outputs();
        let bias_len = if head.has_bias() { outputs } else { 0 };
        Ok(Self {
            input_size,
            hidden_size,
            rng_seed: 0,
            head,
            update: GateWeights::zeros(input_size, hidden_size),
            reset: GateWeights::zeros(input_size, hidden_size),
            candidate: GateWeights::zeros(input_size, hidden_size),
            head_weights: vec![0.0; outputs * hidden_size],
            head_bias: vec![0.0; bias_len],
        })
    }

    /// Matrices uniform in `±1/√hidden`, biases zero.
    pub fn init(input_size: usize, hidden_size: usize, head: HeadKind, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(input_size, hidden_size, head)?;
        p.rng_seed = seed;
        let bound = 1.0 / (hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for gate in [&mut p.update, &mut p.reset, &mut p.candidate] {
            for w in gate.input.iter_mut().chain(gate.recurrent.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        for w in p.head_weights.iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
        Ok(p)
    }

    pub fn named_tensors(&self) -> Vec<(&'static str, &[f64])> {
        TENSOR_NAMES.iter().copied().zip(self.tensors()).collect()
    }

    /// Shape check against `(input_size, hidden_size, head)`.
    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_size, self.hidden_size);
        let outputs = self.head.num_outputs();
        let bias_len = if self.head.has_bias() { outputs } else { 0 };
        let expected = [
            h * i,
            h * h,
            h,
            h * i,
            h * h,
            h,
            h * i,
            h * h,
            h,
            outputs * h,
            bias_len,
        ];
        for ((name, t), want) in self.named_tensors().into_iter().zip(expected) {
            if t.len() != want {
                return Err(Error::Shape(format!(
                    "tensor `{name}` has {} entries, expected {want}",
                    t.len()
                )));
            }
        }
        Ok(())
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.update.input,
            &self.update.recurrent,
            &self.update.bias,
            &self.reset.input,
            &self.reset.recurrent,
            &self.reset.bias,
            &self.candidate.input,
            &self.candidate.recurrent,
            &self.candidate.bias,
            &self.head_weights,
            &self.head_bias,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.update.input,
            &mut self.update.recurrent,
            &mut self.update.bias,
            &mut self.reset.input,
            &mut self.reset.recurrent,
            &mut self.reset.bias,
            &mut self.candidate.input,
            &mut self.candidate.recurrent,
            &mut self.candidate.bias,
            &mut self.head_weights,
            &mut self.head_bias,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_respects_bounds_and_zero_biases() {
        let p = ModelParams::init(5, 16, HeadKind::Hazard, 7).unwrap();
        p.validate().unwrap();
        let bound = 0.25;
        for gate in [&p.update, &p.reset, &p.candidate] {
            assert!(gate.input.iter().all(|w| w.abs() <= bound));
            assert!(gate.recurrent.iter().all(|w| w.abs() <= bound));
            assert!(gate.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(p.head_weights.len(), 16);
        assert!(p.head_bias.is_empty());
        assert_eq!(p.rng_seed, 7);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ModelParams::init(3, 4, HeadKind::Weibull, 11).unwrap();
        let b = ModelParams::init(3, 4, HeadKind::Weibull, 11).unwrap();
        let c = ModelParams::init(3, 4, HeadKind::Weibull, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.head_weights.len(), 8);
        assert_eq!(a.head_bias.len(), 2);
    }

    #[test]
    fn zero_sizes_rejected() {
        assert!(ModelParams::zeros(0, 3, HeadKind::Hazard).is_err());
        assert!(ModelParams::zeros(3, 0, HeadKind::Hazard).is_err());
    }

    #[test]
    fn validate_catches_bad_shapes() {
        let mut p = ModelParams::zeros(2, 3, HeadKind::Hazard).unwrap();
        p.reset.recurrent.pop();
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("reset.recurrent"));
    }

    #[test]
    fn zeros_like_and_count() {
        let p = ModelParams::init(2, 3, HeadKind::Poisson, 1).unwrap();
        let z = p.zeros_like();
        assert_eq!(z.num_params(), p.num_params());
        assert_eq!(p.num_params(), 3 * (3 * 2 + 3 * 3 + 3) + 3 + 1);
        assert!(z.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }
}
