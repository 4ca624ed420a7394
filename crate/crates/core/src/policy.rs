//! Softmax policies over discrete states and actions with closed-form score functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyFamily {
    /// One logit per (state, action): `theta[s * n_actions + a]`.
    TabularSoftmax { n_states: usize, n_actions: usize },
    /// Logit `theta . phi(s, a)` with `phi` stored row-major as
    /// `features[(s * n_actions + a) * n_features + k]`.
    LinearSoftmax {
        n_states: usize,
        n_actions: usize,
        n_features: usize,
        features: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    params: Vec<f64>,
    family: PolicyFamily,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl PolicyModel {
    /// Tabular softmax with all logits zero (uniform policy).
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        Self {
            params: vec![0.0; n_states * n_actions],
            family: PolicyFamily::TabularSoftmax {
                n_states,
                n_actions,
            },
        }
    }

    pub fn linear(
        n_states: usize,
        n_actions: usize,
        n_features: usize,
        features: Vec<f64>,
    ) -> Result<Self> {
        let expected = n_states * n_actions * n_features;
        if features.len() != expected {
            return Err(AesError::Dimension {
                expected,
                got: features.len(),
            });
        }
        Ok(Self {
            params: vec![0.0; n_features],
            family: PolicyFamily::LinearSoftmax {
                n_states,
                n_actions,
                n_features,
                features,
            },
        })
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(AesError::Dimension {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(self)
    }

    pub fn family(&self) -> &PolicyFamily {
        &self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_states(&self) -> usize {
        match self.family {
            PolicyFamily::TabularSoftmax { n_states, .. }
            | PolicyFamily::LinearSoftmax { n_states, .. } => n_states,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self.family {
            PolicyFamily::TabularSoftmax { n_actions, .. }
            | PolicyFamily::LinearSoftmax { n_actions, .. } => n_actions,
        }
    }

    pub fn logits(&self, state: usize) -> Vec<f64> {
        match &self.family {
            PolicyFamily::TabularSoftmax { n_actions, .. } => {
                self.params[state * n_actions..(state + 1) * n_actions].to_vec()
            }
            PolicyFamily::LinearSoftmax {
                n_actions,
                n_features,
                features,
                ..
            } => (0..*n_actions)
                .map(|a| {
                    let row = (state * n_actions + a) * n_features;
                    features[row..row + n_features]
                        .iter()
                        .zip(&self.params)
                        .map(|(f, t)| f * t)
                        .sum()
                })
                .collect(),
        }
    }

    pub fn action_probs(&self, state: usize) -> Vec<f64> {
        softmax(&self.logits(state))
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.action_probs(state)[action]
    }

    pub fn log_prob(&self, state: usize, action: usize) -> f64 {
        let logits = self.logits(state);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits[action] - lse
    }

    /// Adds `scale * grad log pi(action | state)` into `out`.
    pub fn accumulate_grad_log_prob(&self, state: usize, action: usize, scale: f64, out: &mut [f64]) {
        let probs = self.action_probs(state);
        match &self.family {
            PolicyFamily::TabularSoftmax { n_actions, .. } => {
                let base = state * n_actions;
                for (b, pb) in probs.iter().enumerate() {
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    out[base + b] += scale * (indicator - pb);
                }
            }
            PolicyFamily::LinearSoftmax {
                n_actions,
                n_features,
                features,
                ..
            } => {
                for (b, pb) in probs.iter().enumerate() {
                    let row = (state * n_actions + b) * n_features;
                    let indicator = if b == action { 1.0 } else { 0.0 };
                    let coef = scale * (indicator - pb);
                    for k in 0..*n_features {
                        out[k] += coef * features[row + k];
                    }
                }
            }
        }
    }

    pub fn grad_log_prob(&self, state: usize, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_params()];
        self.accumulate_grad_log_prob(state, action, 1.0, &mut out);
        out
    }

    /// Samples an action and returns it with its probability.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> (usize, f64) {
        let probs = self.action_probs(state);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return (a, *p);
            }
        }
        let last = probs.len() - 1;
        (last, probs[last])
    }

    /// Highest-probability action, ties broken toward the lowest index.
    pub fn greedy_action(&self, state: usize) -> usize {
        let logits = self.logits(state);
        let mut best = 0;
        for (a, l) in logits.iter().enumerate() {
            if *l > logits[best] {
                best = a;
            }
        }
        best
    }

    /// Smallest action probability over every state (the policy's lower bound).
    pub fn min_prob(&self) -> f64 {
        (0..self.n_states())
            .flat_map(|s| self.action_probs(s))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest score-function norm `max_{s,a} ||grad log pi(a|s)||`.
    pub fn max_score_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                let g = self.grad_log_prob(s, a);
                best = best.max(g.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
        }
        best
    }
}
