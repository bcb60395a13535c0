//! Cascaded feedforward network: tanh hidden layers, softmax output, and
//! direct input-channel connections into hidden neurons past the first
//! layer, gated by a binary mask.

mod mask;
mod model;
mod net;

pub use mask::CascadeMask;
pub use model::{predict_heads, read_model, write_model, CfnnModel, HeadKind, HeadsDecision};
pub use net::{cross_entropy, Batch, Cfnn, CfnnWeights, LossReport, LOG_CLAMP};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-a).exp()),
        }
    }

    /// Derivative expressed through the activation output `h`.
    #[inline]
    pub fn slope(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Logistic => h * (1.0 - h),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tanh" => Ok(Activation::Tanh),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfnnTopology {
    /// Input channels `C`.
    pub channels: usize,
    /// Samples per channel `N_s`.
    pub samples: usize,
    /// Hidden layer sizes `n_1 .. n_L`.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub activation: Activation,
}

impl CfnnTopology {
    /// 3-neuron first layer followed by 16 cascade-eligible 3-neuron layers.
    pub fn default_hidden() -> Vec<usize> {
        vec![3; 17]
    }

    pub fn new(channels: usize, samples: usize, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        let t = CfnnTopology { channels, samples, hidden, classes, activation: Activation::Tanh };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.samples == 0 || self.classes < 2 {
            return Err(Error::Config("topology needs channels, samples ≥ 1 and ≥ 2 classes".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("hidden layers {:?} must be non-empty and positive", self.hidden)));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.channels * self.samples
    }

    /// `H`: neurons in layers 2..L.
    pub fn cascade_neurons(&self) -> usize {
        self.hidden[1..].iter().sum()
    }

    pub fn max_connections(&self) -> usize {
        self.channels * self.cascade_neurons()
    }

    /// Cascade-eligible layers (blocks of `channels × n_l` connections).
    pub fn cascade_layers(&self) -> usize {
        self.hidden.len() - 1
    }

    pub fn total_neurons(&self) -> usize {
        self.hidden.iter().sum()
    }
}

/// Class index of generator pair `(i, j)`, `i < j < generators`, in
/// lexicographic order.
pub fn pair_class(i: usize, j: usize, generators: usize) -> Result<usize> {
    if !(i < j && j < generators) {
        return Err(Error::Config(format!("invalid generator pair ({i}, {j}) for {generators} generators")));
    }
    Ok(i * (2 * generators - i - 1) / 2 + (j - i - 1))
}

pub fn pair_from_class(class: usize, generators: usize) -> Result<(usize, usize)> {
    let mut k = class;
    for i in 0..generators.saturating_sub(1) {
        let row = generators - i - 1;
        if k < row {
            return Ok((i, i + 1 + k));
        }
        k -= row;
    }
    Err(Error::Config(format!("pair class {class} out of range for {generators} generators")))
}

pub fn pair_count(generators: usize) -> usize {
    generators * generators.saturating_sub(1) / 2
}
