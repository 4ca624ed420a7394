//! Follow-the-regularized-leader sampling distribution over replay slots.
//!
//! Each slot `i` carries an accumulator `w(i)` of importance-weighted losses.
//! The distribution is the closed-form FTRL minimizer of
//! `sum_t sum_i d_t(i) / p(i) + nu * sum_i 1 / p(i)`, mixed with the uniform
//! distribution:
//!
//! ```text
//! p(i) = (1 - kappa) * sqrt(w(i) + nu) / sum_j sqrt(w(j) + nu) + kappa / n
//! ```
//!
//! Accumulators are periodically forgotten, either zeroed (hard reset) or
//! scaled by a forgetting factor (soft reset).

use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};
use crate::simplex::SimplexDistribution;

pub const DEFAULT_NU: f64 = 1000.0;
pub const DEFAULT_KAPPA: f64 = 0.1;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_RESET_PERIOD: u64 = 100;

/// How accumulated feedback is forgotten every `reset_period` updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResetMode {
    /// `w(i) <- 0`.
    Hard,
    /// `w(i) <- rho * w(i)`.
    Soft { rho: f64 },
    /// Soft reset whose factor moves linearly from `rho_start` to `rho_end`
    /// over `total_steps` updates, then stays at `rho_end`.
    AnnealedSoft {
        rho_start: f64,
        rho_end: f64,
        total_steps: u64,
    },
}

impl ResetMode {
    /// Forgetting factor in effect at `step`; `0` for hard resets.
    pub fn rho_at(&self, step: u64) -> f64 {
        match *self {
            ResetMode::Hard => 0.0,
            ResetMode::Soft { rho } => rho,
            ResetMode::AnnealedSoft {
                rho_start,
                rho_end,
                total_steps,
            } => {
                let frac = if total_steps == 0 {
                    1.0
                } else {
                    (step as f64 / total_steps as f64).min(1.0)
                };
                rho_start + (rho_end - rho_start) * frac
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub buffer_capacity: usize,
    /// FTRL regularizer weight.
    pub nu: f64,
    /// Uniform mixing coefficient in `[0, 1]`.
    pub kappa: f64,
    /// Reset period `M`, counted in policy updates.
    pub reset_period: u64,
    pub reset_mode: ResetMode,
    /// Upper bound `G^2` on any per-slot loss `d`. When set (and `kappa > 0`),
    /// each importance-weighted contribution is clamped to `n / kappa * G^2`.
    pub feedback_bound: Option<f64>,
}

impl SamplerConfig {
    pub fn new(buffer_capacity: usize) -> Self {
        Self {
            buffer_capacity,
            nu: DEFAULT_NU,
            kappa: DEFAULT_KAPPA,
            reset_period: DEFAULT_RESET_PERIOD,
            reset_mode: ResetMode::Soft { rho: DEFAULT_RHO },
            feedback_bound: None,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_reset(mut self, period: u64, mode: ResetMode) -> Self {
        self.reset_period = period;
        self.reset_mode = mode;
        self
    }

    pub fn with_feedback_bound(mut self, bound: f64) -> Self {
        self.feedback_bound = Some(bound);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AesError::Config(msg));
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity must be positive".into());
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return bad(format!("kappa must lie in [0, 1], got {}", self.kappa));
        }
        if self.reset_period == 0 {
            return bad("reset_period must be at least 1".into());
        }
        let rho_ok = |r: f64| (0.0..=1.0).contains(&r);
        match self.reset_mode {
            ResetMode::Hard => {}
            ResetMode::Soft { rho } if !rho_ok(rho) => {
                return bad(format!("rho must lie in [0, 1], got {rho}"));
            }
            ResetMode::AnnealedSoft {
                rho_start, rho_end, ..
            } if !(rho_ok(rho_start) && rho_ok(rho_end)) => {
                return bad(format!(
                    "annealed rho must lie in [0, 1], got {rho_start} -> {rho_end}"
                ));
            }
            _ => {}
        }
        if let Some(g2) = self.feedback_bound {
            if !(g2.is_finite() && g2 > 0.0) {
                return bad(format!("feedback_bound must be positive, got {g2}"));
            }
        }
        Ok(())
    }

    /// Cap on a single importance-weighted contribution, if one applies.
    pub fn contribution_cap(&self) -> Option<f64> {
        match self.feedback_bound {
            Some(g2) if self.kappa > 0.0 => Some(self.buffer_capacity as f64 / self.kappa * g2),
            _ => None,
        }
    }
}

/// FTRL accumulators plus the policy-update counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    w: Vec<f64>,
    step: u64,
    resets: u64,
    clamped: u64,
    config: SamplerConfig,
}

impl SamplerState {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            w: vec![0.0; config.buffer_capacity],
            step: 0,
            resets: 0,
            clamped: 0,
            config,
        })
    }

    /// Builds a state with given accumulators, e.g. to restore a snapshot.
    pub fn with_accumulators(config: SamplerConfig, w: Vec<f64>, step: u64) -> Result<Self> {
        config.validate()?;
        if w.len() != config.buffer_capacity {
            return Err(AesError::Dimension {
                expected: config.buffer_capacity,
                got: w.len(),
            });
        }
        let state = Self {
            w,
            step,
            resets: 0,
            clamped: 0,
            config,
        };
        state.check_accumulators()?;
        Ok(state)
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.w
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn capacity(&self) -> usize {
        self.w.len()
    }

    /// Number of resets applied so far.
    pub fn reset_count(&self) -> u64 {
        self.resets
    }

    /// Number of feedback contributions that hit the theoretical cap.
    pub fn clamp_count(&self) -> u64 {
        self.clamped
    }

    /// Unnormalized FTRL score `sqrt(w(i) + nu)`.
    pub fn score(&self, slot: usize) -> f64 {
        (self.w[slot] + self.config.nu).sqrt()
    }

    fn check_accumulators(&self) -> Result<()> {
        if !(self.config.nu.is_finite() && self.config.nu > 0.0) {
            return Err(AesError::InvalidState(format!("nu = {}", self.config.nu)));
        }
        if let Some(i) = self.w.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(AesError::InvalidState(format!(
                "accumulator w({i}) = {}",
                self.w[i]
            )));
        }
        Ok(())
    }

    /// The mixed FTRL distribution for the next policy update.
    pub fn distribution(&self) -> Result<SimplexDistribution> {
        self.check_accumulators()?;
        let n = self.w.len() as f64;
        let kappa = self.config.kappa;
        let scores: Vec<f64> = (0..self.w.len()).map(|i| self.score(i)).collect();
        let total: f64 = scores.iter().sum();
        let probs = scores
            .iter()
            .map(|s| (1.0 - kappa) * s / total + kappa / n)
            .collect();
        SimplexDistribution::new(probs)
    }

    /// Adds the importance-weighted loss `d(i) / p_used(i)` for every sampled
    /// slot and advances the update counter.
    ///
    /// A slot drawn several times in one batch contributes once per draw, so
    /// the expected increment is proportional to `d(i)` for every slot.
    /// Nothing is modified if any entry is rejected.
    pub fn record_feedback(
        &mut self,
        feedback: &[(usize, f64)],
        p_used: &SimplexDistribution,
    ) -> Result<()> {
        if p_used.len() != self.w.len() {
            return Err(AesError::Dimension {
                expected: self.w.len(),
                got: p_used.len(),
            });
        }
        let mut weighted = Vec::with_capacity(feedback.len());
        for &(slot, d) in feedback {
            if slot >= self.w.len() {
                return Err(AesError::InvalidData {
                    slot,
                    reason: "slot index out of range".into(),
                });
            }
            weighted.push((slot, d, p_used.get(slot)));
        }
        self.record_weighted_feedback(&weighted)
    }

    /// Same as [`record_feedback`](Self::record_feedback) with the sampling
    /// probability of each entry given explicitly as `(slot, d, p)`.
    pub fn record_weighted_feedback(&mut self, feedback: &[(usize, f64, f64)]) -> Result<()> {
        for &(slot, d, p) in feedback {
            if slot >= self.w.len() {
                return Err(AesError::InvalidData {
                    slot,
                    reason: "slot index out of range".into(),
                });
            }
            if !d.is_finite() || d < 0.0 {
                return Err(AesError::InvalidData {
                    slot,
                    reason: format!("loss {d} is not a non-negative finite number"),
                });
            }
            if p.is_nan() || p <= 0.0 {
                return Err(AesError::InvariantViolation(format!(
                    "slot {slot} was sampled with zero probability"
                )));
            }
        }
        let cap = self.config.contribution_cap();
        for &(slot, d, p) in feedback {
            let mut contribution = d / p;
            if let Some(cap) = cap {
                if contribution > cap {
                    contribution = cap;
                    self.clamped += 1;
                }
            }
            self.w[slot] += contribution;
        }
        self.step += 1;
        Ok(())
    }

    /// Full-information update: every slot's loss is observed directly.
    pub fn record_full_feedback(&mut self, d: &[f64]) -> Result<()> {
        if d.len() != self.w.len() {
            return Err(AesError::Dimension {
                expected: self.w.len(),
                got: d.len(),
            });
        }
        if let Some(slot) = d.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(AesError::InvalidData {
                slot,
                reason: format!("loss {} is not a non-negative finite number", d[slot]),
            });
        }
        self.w.iter_mut().zip(d).for_each(|(w, x)| *w += x);
        self.step += 1;
        Ok(())
    }

    /// Applies the configured reset when the update counter is a multiple of
    /// the reset period. Returns whether a reset happened.
    pub fn maybe_reset(&mut self) -> bool {
        if self.step == 0 || !self.step.is_multiple_of(self.config.reset_period) {
            return false;
        }
        self.reset_now();
        true
    }

    /// Unconditionally applies the configured reset.
    pub fn reset_now(&mut self) {
        let rho = self.config.reset_mode.rho_at(self.step);
        if rho == 0.0 {
            self.w.iter_mut().for_each(|w| *w = 0.0);
        } else {
            self.w.iter_mut().for_each(|w| *w *= rho);
        }
        self.resets += 1;
    }

    /// Zeroes every accumulator regardless of the reset mode.
    pub fn clear(&mut self) {
        self.w.iter_mut().for_each(|w| *w = 0.0);
        self.resets += 1;
    }

    /// Forgets the feedback of one slot, e.g. after its trajectory is evicted.
    pub fn clear_slot(&mut self, slot: usize) {
        self.w[slot] = 0.0;
    }
}
