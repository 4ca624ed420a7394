//! Importance-weighted policy-gradient estimators and the variance objective.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{AesError, Result};
use crate::policy::PolicyModel;
use crate::sampler::SamplerState;
use crate::simplex::{lambda_ratio, SimplexDistribution};
use crate::store::WeightedStore;
use crate::trajectory::Trajectory;

/// Default cap on `ln(omega)`.
pub const DEFAULT_LOG_RATIO_CAP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioOutcome {
    pub omega: f64,
    /// Whether the ratio hit the cap.
    pub capped: bool,
}

/// Trajectory importance ratio `prod_t pi(a_t|s_t) / mu(a_t|s_t)`, computed in
/// log space and capped at `exp(log_cap)`.
pub fn importance_ratio_capped(
    traj: &Trajectory,
    target: &PolicyModel,
    log_cap: f64,
) -> Result<RatioOutcome> {
    let mut log_omega = 0.0;
    for (t, step) in traj.steps().iter().enumerate() {
        let lp = target.log_prob(step.state, step.action);
        if !lp.is_finite() {
            return Err(AesError::Numeric(format!(
                "target assigns zero probability to the action at step {t}"
            )));
        }
        log_omega += lp - step.behavior_prob.ln();
    }
    let capped = log_omega > log_cap;
    Ok(RatioOutcome {
        omega: log_omega.min(log_cap).exp(),
        capped,
    })
}

pub fn importance_ratio(traj: &Trajectory, target: &PolicyModel) -> Result<f64> {
    importance_ratio_capped(traj, target, DEFAULT_LOG_RATIO_CAP).map(|r| r.omega)
}

/// `(sum_t grad log pi(a_t|s_t)) * (sum_t gamma^t r_t)`.
///
/// Transition probabilities do not depend on the policy parameters, so only
/// the action terms of `grad log p(tau)` remain.
pub fn score_return_grad(traj: &Trajectory, target: &PolicyModel, gamma: f64) -> Vec<f64> {
    let ret = traj.discounted_return(gamma);
    let mut g = vec![0.0; target.n_params()];
    if ret == 0.0 {
        return g;
    }
    for step in traj.steps() {
        target.accumulate_grad_log_prob(step.state, step.action, ret, &mut g);
    }
    g
}

/// Per-slot gradient term with its squared-norm loss `d = ||omega g||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub slot: usize,
    pub omega: f64,
    pub g: Vec<f64>,
    pub d: f64,
}

impl GradientSample {
    pub fn new(slot: usize, omega: f64, g: Vec<f64>) -> Self {
        let d = omega * omega * g.iter().map(|x| x * x).sum::<f64>();
        Self { slot, omega, g, d }
    }

    /// Builds the sample for a stored trajectory; the flag reports a capped ratio.
    pub fn from_trajectory(
        slot: usize,
        traj: &Trajectory,
        target: &PolicyModel,
        gamma: f64,
        log_cap: f64,
    ) -> Result<(Self, bool)> {
        let ratio = importance_ratio_capped(traj, target, log_cap)?;
        let g = score_return_grad(traj, target, gamma);
        Ok((Self::new(slot, ratio.omega, g), ratio.capped))
    }

    /// `omega * g`.
    pub fn weighted(&self) -> impl Iterator<Item = f64> + '_ {
        self.g.iter().map(move |x| self.omega * x)
    }
}

/// Replay estimator `(1/|batch|) sum_k lambda_k omega_k g_k` with
/// `lambda_k = 1 / (p(k) n)`.
pub fn replay_gradient(batch: &[GradientSample], p: &SimplexDistribution) -> Result<Vec<f64>> {
    let first = batch.first().ok_or(AesError::EmptyBatch)?;
    let mut out = vec![0.0; first.g.len()];
    for sample in batch {
        if sample.g.len() != out.len() {
            return Err(AesError::Dimension {
                expected: out.len(),
                got: sample.g.len(),
            });
        }
        let scale = lambda_ratio(p, sample.slot)? * sample.omega;
        out.iter_mut().zip(&sample.g).for_each(|(o, g)| *o += scale * g);
    }
    let inv = 1.0 / batch.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

/// Mean of `score_return_grad` over trajectories generated by `target`.
pub fn onpolicy_gradient(trajs: &[Trajectory], target: &PolicyModel, gamma: f64) -> Result<Vec<f64>> {
    if trajs.is_empty() {
        return Err(AesError::EmptyBatch);
    }
    let mut out = vec![0.0; target.n_params()];
    for traj in trajs {
        out.iter_mut()
            .zip(score_return_grad(traj, target, gamma))
            .for_each(|(o, g)| *o += g);
    }
    let inv = 1.0 / trajs.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

/// `f(p) = sum_i d(i) / p(i)`.
pub fn variance_objective(d: &[f64], p: &SimplexDistribution) -> Result<f64> {
    if d.len() != p.len() {
        return Err(AesError::Dimension {
            expected: p.len(),
            got: d.len(),
        });
    }
    let mut total = 0.0;
    for (i, (&di, &pi)) in d.iter().zip(p.probs()).enumerate() {
        if di == 0.0 {
            continue;
        }
        if pi <= 0.0 {
            return Err(AesError::InfiniteObjective(i));
        }
        total += di / pi;
    }
    Ok(total)
}

/// Sum over coordinates of the unbiased sample variance of `draws`.
pub fn summed_sample_variance(draws: &[Vec<f64>]) -> Result<f64> {
    if draws.len() < 2 {
        return Err(AesError::Config(format!(
            "need at least 2 repeats, got {}",
            draws.len()
        )));
    }
    let dim = draws[0].len();
    let n = draws.len() as f64;
    let mut total = 0.0;
    for k in 0..dim {
        let mean = draws.iter().map(|v| v[k]).sum::<f64>() / n;
        total += draws.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    }
    Ok(total)
}

/// Monte-Carlo variance (trace of the covariance) of the replay estimator
/// when batches are drawn i.i.d. from an explicit distribution `p`.
///
/// `per_slot[i]` must be the gradient sample of slot `i`.
pub fn estimator_variance<R: Rng + ?Sized>(
    per_slot: &[GradientSample],
    p: &SimplexDistribution,
    batch: usize,
    repeats: usize,
    rng: &mut R,
) -> Result<f64> {
    if repeats < 2 {
        return Err(AesError::Config(format!("need at least 2 repeats, got {repeats}")));
    }
    if batch == 0 {
        return Err(AesError::EmptyBatch);
    }
    if per_slot.len() != p.len() {
        return Err(AesError::Dimension {
            expected: p.len(),
            got: per_slot.len(),
        });
    }
    let index = WeightedIndex::new(p.probs()).map_err(|e| AesError::InvalidState(e.to_string()))?;
    let mut draws = Vec::with_capacity(repeats);
    let mut picked = Vec::with_capacity(batch);
    for _ in 0..repeats {
        picked.clear();
        picked.extend((0..batch).map(|_| per_slot[index.sample(rng)].clone()));
        draws.push(replay_gradient(&picked, p)?);
    }
    summed_sample_variance(&draws)
}

/// Gradient samples for every slot of a full store at fixed parameters.
pub fn slot_samples(
    store: &WeightedStore<Trajectory>,
    target: &PolicyModel,
    gamma: f64,
    log_cap: f64,
) -> Result<Vec<GradientSample>> {
    if !store.is_ready() {
        return Err(AesError::NotReady {
            occupancy: store.occupancy(),
            capacity: store.capacity(),
        });
    }
    store
        .iter()
        .map(|(i, traj)| GradientSample::from_trajectory(i, traj, target, gamma, log_cap).map(|s| s.0))
        .collect()
}

/// Draws `repeats` independent batches from the store's mixed distribution at
/// frozen parameters and returns the summed per-coordinate sample variance of
/// the replay gradient.
pub fn empirical_gradient_variance<R: Rng + ?Sized>(
    store: &WeightedStore<Trajectory>,
    sampler: &SamplerState,
    target: &PolicyModel,
    gamma: f64,
    batch: usize,
    repeats: usize,
    rng: &mut R,
) -> Result<f64> {
    if repeats < 2 {
        return Err(AesError::Config(format!("need at least 2 repeats, got {repeats}")));
    }
    let per_slot = slot_samples(store, target, gamma, DEFAULT_LOG_RATIO_CAP)?;
    let p = store.distribution(sampler)?;
    let mut draws = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let idx = store.sample_indices(sampler, batch, rng)?;
        let picked: Vec<GradientSample> = idx.iter().map(|&i| per_slot[i].clone()).collect();
        draws.push(replay_gradient(&picked, &p)?);
    }
    summed_sample_variance(&draws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Step;

    fn traj(steps: &[(usize, usize, f64, f64)]) -> Trajectory {
        Trajectory::new(
            steps
                .iter()
                .map(|&(state, action, behavior_prob, reward)| Step {
                    state,
                    action,
                    behavior_prob,
                    reward,
                    next_state: 0,
                })
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn ratio_of_identical_policies_is_one() {
        let pi = PolicyModel::tabular(2, 2).with_params(vec![0.3, -0.2, 1.0, 0.0]).unwrap();
        let t = traj(&[(0, 1, pi.prob(0, 1), 1.0), (1, 0, pi.prob(1, 0), 0.0)]);
        assert!((importance_ratio(&t, &pi).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_is_product_of_step_ratios() {
        // uniform target over 2 actions: pi = 0.5
        let pi = PolicyModel::tabular(1, 2);
        let t = traj(&[(0, 0, 0.25, 0.0), (0, 1, 1.0, 0.0)]);
        assert!((importance_ratio(&t, &pi).unwrap() - 1.0).abs() < 1e-12);
        let t = traj(&[(0, 0, 0.25, 0.0), (0, 1, 0.25, 0.0), (0, 0, 0.25, 0.0)]);
        assert!((importance_ratio(&t, &pi).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_cap_reports_activation() {
        let pi = PolicyModel::tabular(1, 2);
        let t = traj(&[(0, 0, 1e-3, 0.0); 3]);
        let r = importance_ratio_capped(&t, &pi, 5.0).unwrap();
        assert!(r.capped);
        assert!((r.omega - 5f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_reward_gives_zero_gradient() {
        let pi = PolicyModel::tabular(2, 2);
        let t = traj(&[(0, 1, 0.5, 0.0), (1, 1, 0.5, 0.0)]);
        assert!(score_return_grad(&t, &pi, 0.9).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn single_step_softmax_gradient() {
        let pi = PolicyModel::tabular(1, 2);
        // action index 0 is "action 1" in one-based terms
        let t = traj(&[(0, 0, 0.5, 1.0)]);
        assert_eq!(score_return_grad(&t, &pi, 0.9), vec![0.5, -0.5]);
    }

    #[test]
    fn gradient_sample_loss() {
        let s = GradientSample::new(0, 2.0, vec![1.0, -2.0]);
        assert!((s.d - 20.0).abs() < 1e-12);
    }

    #[test]
    fn replay_gradient_with_uniform_full_coverage() {
        let batch = vec![
            GradientSample::new(0, 1.0, vec![1.0, 0.0]),
            GradientSample::new(1, 2.0, vec![0.0, 3.0]),
            GradientSample::new(2, 0.5, vec![4.0, 4.0]),
        ];
        let g = replay_gradient(&batch, &SimplexDistribution::uniform(3)).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
        assert!((g[1] - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn replay_gradient_single_slot() {
        let batch = vec![GradientSample::new(0, 1.5, vec![2.0]); 4];
        let g = replay_gradient(&batch, &SimplexDistribution::uniform(1)).unwrap();
        assert_eq!(g, vec![3.0]);
    }

    #[test]
    fn replay_gradient_errors() {
        assert_eq!(
            replay_gradient(&[], &SimplexDistribution::uniform(2)),
            Err(AesError::EmptyBatch)
        );
        let p = SimplexDistribution::new(vec![1.0, 0.0]).unwrap();
        let batch = vec![GradientSample::new(1, 1.0, vec![1.0])];
        assert_eq!(replay_gradient(&batch, &p), Err(AesError::ZeroProbability(1)));
    }

    #[test]
    fn onpolicy_examples() {
        let pi = PolicyModel::tabular(1, 2);
        let t = traj(&[(0, 0, 0.5, 1.0)]);
        assert_eq!(
            onpolicy_gradient(std::slice::from_ref(&t), &pi, 0.9).unwrap(),
            score_return_grad(&t, &pi, 0.9)
        );
        let z = traj(&[(0, 0, 0.5, 0.0)]);
        assert!(onpolicy_gradient(&[z.clone(), z], &pi, 0.9)
            .unwrap()
            .iter()
            .all(|g| *g == 0.0));
        assert_eq!(onpolicy_gradient(&[], &pi, 0.9), Err(AesError::EmptyBatch));
    }

    #[test]
    fn variance_objective_examples() {
        let half = SimplexDistribution::uniform(2);
        assert!((variance_objective(&[1.0, 3.0], &half).unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(variance_objective(&[0.0, 0.0], &half).unwrap(), 0.0);
        let opt = SimplexDistribution::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((variance_objective(&[4.0, 1.0], &opt).unwrap() - 9.0).abs() < 1e-12);
        let degenerate = SimplexDistribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(
            variance_objective(&[1.0, 1.0], &degenerate),
            Err(AesError::InfiniteObjective(1))
        );
        assert_eq!(variance_objective(&[1.0, 0.0], &degenerate).unwrap(), 1.0);
    }

    #[test]
    fn variance_needs_two_repeats() {
        let mut rng = rand::thread_rng();
        let per_slot = vec![GradientSample::new(0, 1.0, vec![1.0])];
        let p = SimplexDistribution::uniform(1);
        assert!(estimator_variance(&per_slot, &p, 1, 1, &mut rng).is_err());
        assert_eq!(estimator_variance(&per_slot, &p, 3, 10, &mut rng).unwrap(), 0.0);
    }
}
