//! Probability vectors over buffer slots.

use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};

/// Absolute tolerance on `sum(p) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A point on the probability simplex over `n` buffer slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexDistribution {
    probs: Vec<f64>,
}

impl SimplexDistribution {
    /// Wraps an already-normalized vector, checking the simplex constraints.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(AesError::InvalidState("empty distribution".into()));
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(AesError::InvalidState(format!(
                "probability {} at slot {i} is not a non-negative finite number",
                probs[i]
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(AesError::InvalidState(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(AesError::InvalidState("empty weight vector".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(AesError::InvalidState(format!(
                "weight {} at slot {i} is not a non-negative finite number",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(AesError::InvalidState("weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over zero slots");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Convex combination `(1 - kappa) * self + kappa * uniform`.
    pub fn mix_uniform(&self, kappa: f64) -> Self {
        let floor = kappa / self.len() as f64;
        Self {
            probs: self.probs.iter().map(|p| (1.0 - kappa) * p + floor).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.probs[slot]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl AsRef<[f64]> for SimplexDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

/// Bias-correction weight `1 / (p(k) * n)` for a slot drawn from `p` instead of uniformly.
pub fn lambda_ratio(p: &SimplexDistribution, slot: usize) -> Result<f64> {
    let pk = *p.probs.get(slot).ok_or(AesError::Dimension {
        expected: p.len(),
        got: slot + 1,
    })?;
    if pk <= 0.0 {
        return Err(AesError::ZeroProbability(slot));
    }
    Ok(1.0 / (pk * p.len() as f64))
}
