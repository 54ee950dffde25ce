//! Observations and in-memory datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response of one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Real-valued response in ℝ^Q.
    Continuous(Vec<f64>),
    /// Class label in `1..=M`.
    Class(usize),
}

/// One observation `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Target,
}

impl Sample {
    pub fn continuous(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y: Target::Continuous(y) }
    }

    pub fn class(x: Vec<f64>, y: usize) -> Self {
        Self { x, y: Target::Class(y) }
    }

    pub fn is_finite(&self) -> bool {
        let y_ok = match &self.y {
            Target::Continuous(y) => y.iter().all(|v| v.is_finite()),
            Target::Class(_) => true,
        };
        y_ok && self.x.iter().all(|v| v.is_finite())
    }

    pub fn continuous_y(&self) -> Result<&[f64]> {
        match &self.y {
            Target::Continuous(y) => Ok(y),
            Target::Class(_) => Err(Error::arg("expected a continuous response")),
        }
    }

    pub fn class_y(&self) -> Result<usize> {
        match &self.y {
            Target::Class(c) => Ok(*c),
            Target::Continuous(_) => Err(Error::arg("expected a class response")),
        }
    }
}

/// A batch of samples with optional latent labels (diagnostics only).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples, labels: None }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Splits into the first `round(frac·n)` samples and the rest.
    pub fn split(&self, train_fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::arg(format!("split fraction {train_fraction} not in (0,1)")));
        }
        let cut = ((self.len() as f64) * train_fraction).round() as usize;
        let take = |range: std::ops::Range<usize>| Dataset {
            samples: self.samples[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        };
        Ok((take(0..cut), take(cut..self.len())))
    }

    pub fn covariate_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.x.len())
    }
}
