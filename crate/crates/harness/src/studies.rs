//! Single-cell experiment runners shared by `run` and `verify`.
//!
//! Seeds are derived per cell from the user seed and a stream name that
//! excludes the variant and selection mode.

use aes_core::estimators::{empirical_gradient_variance, slot_samples, DEFAULT_LOG_RATIO_CAP};
use aes_core::policy::PolicyModel;
use aes_core::regret::{
    bandit_kappa, log_uniform_levels, reset_period_for, run_regret_trial, BoundedNoisyLosses, DriftingLosses,
    LossGenerator, RegretExperiment, RegretLedger, ResetPattern, StationaryLosses,
};
use aes_core::sampler::{SamplerConfig, SamplerState};
use aes_core::store::WeightedStore;
use aes_core::training::{run_training, SelectionMode, TrainingConfig, TrainingTrace};
use aes_core::trajectory::{Step, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{EnvName, GeneratorKind, Mixing, Settings};
use crate::error::Result;
use crate::seeding::cell_seed;

pub fn rl_stream(env: EnvName) -> String {
    format!("rl/{}", env.as_str())
}

/// Training configuration of one RL cell, seeded from the environment stream.
pub fn rl_config(settings: &Settings, env: EnvName, mode: SelectionMode, seed: u64) -> TrainingConfig {
    settings
        .training
        .to_config(&settings.sampler, mode, cell_seed(seed, &rl_stream(env)))
}

/// Runs one RL cell; the returned trace carries the user seed.
pub fn rl_trace(settings: &Settings, env: EnvName, mode: SelectionMode, seed: u64) -> Result<TrainingTrace> {
    let cfg = rl_config(settings, env, mode, seed);
    let mut trace = run_training(&env.build(), &cfg)?;
    trace.seed = seed;
    Ok(trace)
}

/// The resolved sampler and schedule of one regret cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretPlan {
    pub experiment: RegretExperiment,
    pub levels_seed: u64,
    pub trial_seed: u64,
}

pub fn regret_plan(settings: &Settings, horizon: usize, seed: u64) -> RegretPlan {
    let r = &settings.regret;
    let mut sampler: SamplerConfig = settings.sampler.to_config(r.slots, horizon as u64);
    if r.mixing == Mixing::Horizon {
        sampler.kappa = bandit_kappa(r.slots, horizon);
    }
    if r.reset == ResetPattern::Periodic {
        if let Some(c) = r.reset_c {
            sampler.reset_period = reset_period_for(horizon, c);
        }
    }
    RegretPlan {
        experiment: RegretExperiment {
            sampler,
            horizon,
            feedback: r.feedback,
            reset: r.reset,
        },
        levels_seed: cell_seed(seed, "regret/levels"),
        trial_seed: cell_seed(seed, "regret/trial"),
    }
}

pub fn regret_ledger(settings: &Settings, horizon: usize, seed: u64) -> Result<RegretLedger> {
    let r = &settings.regret;
    let plan = regret_plan(settings, horizon, seed);
    let mut level_rng = ChaCha8Rng::seed_from_u64(plan.levels_seed);
    let levels = log_uniform_levels(r.slots, r.level_lo, r.level_hi, &mut level_rng);
    let mut generator: Box<dyn LossGenerator> = match r.generator {
        GeneratorKind::Stationary => Box::new(StationaryLosses { row: levels }),
        GeneratorKind::Noisy => Box::new(BoundedNoisyLosses {
            activity: vec![r.activity; r.slots],
            levels,
        }),
        GeneratorKind::Drifting => Box::new(DriftingLosses::new(
            levels,
            r.noise,
            r.epoch,
            r.replace_per_epoch,
            (r.level_lo, r.level_hi),
        )),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(plan.trial_seed);
    Ok(run_regret_trial(generator.as_mut(), &plan.experiment, seed, &mut rng)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceOutcome {
    pub construction: usize,
    /// Smallest and largest per-slot loss at the frozen parameters.
    pub d_min: f64,
    pub d_max: f64,
    pub learned: f64,
    pub uniform: f64,
}

fn random_policy(states: usize, rng: &mut ChaCha8Rng) -> PolicyModel {
    let params = (0..states * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    PolicyModel::tabular(states, 2).with_params(params).expect("shape matches")
}

/// Builds a frozen buffer of synthetic off-policy trajectories whose reward
/// scales span `reward_span` orders of magnitude, learns a sampling
/// distribution from loss feedback, then measures the replay-gradient
/// variance under that distribution and under uniform selection with the
/// same draws.
pub fn variance_construction(settings: &Settings, seed: u64, construction: usize) -> Result<VarianceOutcome> {
    let v = &settings.variance;
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, &format!("variance/{construction}")));
    let behavior = random_policy(v.states, &mut rng);
    let shift: Vec<f64> = behavior.params().iter().map(|p| p + rng.gen_range(-0.5..0.5)).collect();
    let target = behavior.clone().with_params(shift)?;

    let cfg = settings.sampler.to_config(v.slots, v.feedback_rounds as u64);
    let mut sampler = SamplerState::new(cfg)?;
    let mut store: WeightedStore<Trajectory> = WeightedStore::new(&sampler);
    for slot in 0..v.slots {
        let u = match slot {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen::<f64>(),
        };
        let scale = 10f64.powf(-v.reward_span * u);
        let steps = (0..v.horizon)
            .map(|_| {
                let state = rng.gen_range(0..v.states);
                let (action, behavior_prob) = behavior.sample_action(state, &mut rng);
                Step {
                    state,
                    action,
                    behavior_prob,
                    reward: scale * rng.gen_range(0.5..1.0),
                    next_state: rng.gen_range(0..v.states),
                }
            })
            .collect();
        store.insert(Trajectory::new(steps, 0)?, &mut sampler, &mut rng)?;
    }

    let gamma = aes_core::env::DEFAULT_GAMMA;
    let per_slot = slot_samples(&store, &target, gamma, DEFAULT_LOG_RATIO_CAP)?;
    for _ in 0..v.feedback_rounds {
        let idx = store.sample_indices(&sampler, v.batch, &mut rng)?;
        let feedback: Vec<(usize, f64)> = idx.iter().map(|&i| (i, per_slot[i].d)).collect();
        store.apply_sampled_feedback(&mut sampler, &feedback)?;
        store.maybe_reset(&mut sampler);
    }

    let uniform = SamplerState::new(cfg.with_kappa(1.0))?;
    let probe_seed = rng.gen::<u64>();
    let learned = empirical_gradient_variance(
        &store,
        &sampler,
        &target,
        gamma,
        v.batch,
        v.repeats,
        &mut ChaCha8Rng::seed_from_u64(probe_seed),
    )?;
    let uniform = empirical_gradient_variance(
        &store,
        &uniform,
        &target,
        gamma,
        v.batch,
        v.repeats,
        &mut ChaCha8Rng::seed_from_u64(probe_seed),
    )?;
    let d = per_slot.iter().map(|s| s.d);
    Ok(VarianceOutcome {
        construction,
        d_min: d.clone().fold(f64::INFINITY, f64::min),
        d_max: d.fold(0.0, f64::max),
        learned,
        uniform,
    })
}

