//! Independent numerical oracles used to cross-check the closed forms.
//!
//! Nothing here is used by the sampler or the training loops.

use crate::error::{AesError, Result};

pub const ORACLE_MAX_ITERS: usize = 100_000;

/// A differentiable objective over the probability simplex.
pub trait SimplexObjective {
    fn value(&self, p: &[f64]) -> f64;
    fn gradient(&self, p: &[f64]) -> Vec<f64>;
}

/// `sum_i c_i / p_i` with non-negative coefficients.
#[derive(Debug, Clone)]
pub struct InverseWeighted {
    pub coeffs: Vec<f64>,
}

impl InverseWeighted {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `sum_t sum_i d_t(i) / p(i) + nu * sum_i 1 / p(i)`.
    pub fn regularized(rows: &[Vec<f64>], nu: f64, n: usize) -> Self {
        let mut coeffs = vec![nu; n];
        for row in rows {
            coeffs.iter_mut().zip(row).for_each(|(c, d)| *c += d);
        }
        Self { coeffs }
    }
}

impl SimplexObjective for InverseWeighted {
    fn value(&self, p: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(p)
            .filter(|(c, _)| **c > 0.0)
            .map(|(c, q)| c / q)
            .sum()
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        self.coeffs.iter().zip(p).map(|(c, q)| -c / (q * q)).collect()
    }
}

/// Objective that ignores its argument.
#[derive(Debug, Clone, Copy)]
pub struct ConstantObjective(pub f64);

impl SimplexObjective for ConstantObjective {
    fn value(&self, _p: &[f64]) -> f64 {
        self.0
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        vec![0.0; p.len()]
    }
}

fn normalize_log(logp: &mut [f64]) -> Vec<f64> {
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logp.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logp.iter_mut().for_each(|l| *l -= lse);
    logp.iter().map(|l| l.exp()).collect()
}

fn optimality_gap(p: &[f64], g: &[f64]) -> (f64, f64) {
    let mean: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    let gap = p.iter().zip(g).map(|(a, b)| a * (b - mean).abs()).sum();
    (gap, mean)
}

/// Minimizes a convex objective over the simplex with exponentiated-gradient
/// (mirror) descent and backtracking, starting from the uniform point.
///
/// Stops once the first-order optimality gap
/// `sum_i p_i |g_i - <p, g>|` falls below `tol * 1e-4` relative to `|<p, g>|`.
/// Once objective values stop resolving the progress (relative change below
/// `1e-14`), a step is accepted only if it shrinks the gap.
pub fn brute_force_simplex_min(
    objective: &dyn SimplexObjective,
    dim: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if dim == 0 || dim > 64 {
        return Err(AesError::TooLarge(format!("oracle dimension {dim} outside 1..=64")));
    }
    let mut logp = vec![-(dim as f64).ln(); dim];
    let mut p = normalize_log(&mut logp);
    let mut value = objective.value(&p);
    let mut g = objective.gradient(&p);
    let mut step: f64 = 1.0;
    let gap_tol = tol * 1e-4;
    for _ in 0..ORACLE_MAX_ITERS {
        let (gap, mean) = optimality_gap(&p, &g);
        if gap <= gap_tol * mean.abs().max(f64::MIN_POSITIVE) {
            return Ok(p);
        }
        step = (step * 2.0).min(1e300);
        let scale = 1.0 / mean.abs().max(f64::MIN_POSITIVE);
        loop {
            let mut cand_log: Vec<f64> = logp
                .iter()
                .zip(&g)
                .map(|(l, gi)| l - step * scale * gi)
                .collect();
            let cand = normalize_log(&mut cand_log);
            let cand_value = objective.value(&cand);
            let descent: f64 = g.iter().zip(cand.iter().zip(&p)).map(|(gi, (c, q))| gi * (c - q)).sum();
            let resolved = (cand_value - value).abs() > 1e-14 * value.abs();
            let accept = if !cand_value.is_finite() {
                false
            } else if resolved {
                cand_value <= value + 0.3 * descent
            } else {
                let cand_g = objective.gradient(&cand);
                optimality_gap(&cand, &cand_g).0 < 0.9 * gap
            };
            if accept {
                logp = cand_log;
                p = cand;
                value = cand_value;
                g = objective.gradient(&p);
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                // No representable descent step remains.
                return Ok(p);
            }
        }
    }
    Err(AesError::OracleFailure(ORACLE_MAX_ITERS))
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}
