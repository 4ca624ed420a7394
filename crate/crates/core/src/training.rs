//! Policy-gradient training loops on tabular environments with replayed
//! trajectories selected uniformly, by TD priority, or by the FTRL sampler.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::Environment;
use crate::error::{AesError, Result};
use crate::estimators::{
    estimator_variance, replay_gradient, slot_samples, GradientSample, DEFAULT_LOG_RATIO_CAP,
};
use crate::policy::PolicyModel;
use crate::sampler::{SamplerConfig, SamplerState};
use crate::simplex::SimplexDistribution;
use crate::store::WeightedStore;
use crate::trajectory::Trajectory;

/// Schema tag written as the first comment line of trace CSVs.
pub const TRACE_CSV_SCHEMA: &str = "aes-trace/1";

pub const TRACE_CSV_HEADER: &str =
    "seed,mode,env,step,episodic_test_return,variance_probe,p_entropy,reset_count";
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
pub const TD_PRIORITY_EXPONENT: f64 = 0.6;
pub const TD_PRIORITY_EPS: f64 = 1e-6;
pub const DEFAULT_EVAL_EPISODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SelectionMode {
    Uniform,
    TdPriority,
    AesNaive,
    Aes,
}

impl SelectionMode {
    pub const ALL: [SelectionMode; 4] = [
        SelectionMode::Uniform,
        SelectionMode::TdPriority,
        SelectionMode::AesNaive,
        SelectionMode::Aes,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMode::Uniform => "uniform",
            SelectionMode::TdPriority => "td_priority",
            SelectionMode::AesNaive => "aes_naive",
            SelectionMode::Aes => "aes",
        }
    }

    fn uses_sampler(&self) -> bool {
        matches!(self, SelectionMode::Aes | SelectionMode::AesNaive)
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMode {
    type Err = AesError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AesError::Config(format!("unknown selection mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Budget in environment steps, warm-up included.
    pub total_steps: u64,
    pub batch: usize,
    pub buffer: usize,
    pub learning_rate: f64,
    pub sampler: SamplerConfig,
    pub mode: SelectionMode,
    pub seed: u64,
    pub warmup_episodes: usize,
    /// Policy updates between collected episodes (interleaved loop).
    pub updates_per_episode: usize,
    /// Updates per epoch `m` of the naive loop.
    pub inner_updates: usize,
    /// Evaluate every this many environment steps.
    pub eval_interval: u64,
    /// Frozen-parameter variance probe interval; 0 disables probing.
    pub probe_interval: u64,
    pub probe_repeats: usize,
    pub eval_episodes: usize,
    pub log_ratio_cap: f64,
}

impl TrainingConfig {
    pub fn new(buffer: usize, batch: usize, mode: SelectionMode, seed: u64) -> Self {
        Self {
            total_steps: 10_000,
            batch,
            buffer,
            learning_rate: DEFAULT_LEARNING_RATE,
            sampler: SamplerConfig::new(buffer),
            mode,
            seed,
            warmup_episodes: buffer,
            updates_per_episode: 1,
            inner_updates: 1,
            eval_interval: 100,
            probe_interval: 500,
            probe_repeats: 256,
            eval_episodes: DEFAULT_EVAL_EPISODES,
            log_ratio_cap: DEFAULT_LOG_RATIO_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.sampler.buffer_capacity != self.buffer {
            return Err(AesError::Config(format!(
                "sampler capacity {} differs from buffer {}",
                self.sampler.buffer_capacity, self.buffer
            )));
        }
        if self.batch == 0 || self.batch > self.buffer {
            return Err(AesError::Config(format!(
                "batch {} must be in 1..={}",
                self.batch, self.buffer
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(AesError::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.warmup_episodes < self.buffer {
            return Err(AesError::Config(format!(
                "warmup_episodes {} cannot fill a buffer of {}",
                self.warmup_episodes, self.buffer
            )));
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(AesError::Config("evaluation interval and episodes must be positive".into()));
        }
        if self.probe_interval > 0 && self.probe_repeats < 2 {
            return Err(AesError::Config("probe_repeats must be at least 2".into()));
        }
        Ok(())
    }

    /// Hex digest identifying this configuration.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Environment steps consumed so far.
    pub step: u64,
    pub test_return: f64,
    /// Replay-gradient variance under the run's own distribution.
    pub variance_probe: Option<f64>,
    /// Same probe with uniform selection over the same buffer.
    pub variance_uniform: Option<f64>,
    pub p_entropy: f64,
    pub reset_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub seed: u64,
    pub mode: SelectionMode,
    pub env: String,
    pub config_hash: String,
    pub points: Vec<TracePoint>,
    pub updates: u64,
    pub capped_ratios: u64,
    pub policy: PolicyModel,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl TrainingTrace {
    pub fn final_return(&self) -> f64 {
        self.points.last().map_or(f64::NAN, |p| p.test_return)
    }

    pub fn test_returns(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.test_return).collect()
    }

    /// Writes the schema line, `# ` comment lines, the header, then one row
    /// per evaluation.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        let io = |e: std::io::Error| AesError::Snapshot(e.to_string());
        writeln!(out, "# schema={TRACE_CSV_SCHEMA}").map_err(io)?;
        for c in comments {
            writeln!(out, "# {c}").map_err(io)?;
        }
        writeln!(out, "# config_hash={}", self.config_hash).map_err(io)?;
        writeln!(out, "{TRACE_CSV_HEADER}").map_err(io)?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.seed,
                self.mode,
                self.env,
                p.step,
                p.test_return,
                fmt_opt(p.variance_probe),
                p.p_entropy,
                p.reset_count
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

struct Runner<'a> {
    env: &'a Environment,
    cfg: &'a TrainingConfig,
    rng: ChaCha8Rng,
    policy: PolicyModel,
    sampler: SamplerState,
    store: WeightedStore<Trajectory>,
    priorities: Vec<f64>,
    max_priority: f64,
    values: Vec<f64>,
    env_steps: u64,
    episodes: u64,
    updates: u64,
    capped: u64,
    next_eval: u64,
    next_probe: u64,
    points: Vec<TracePoint>,
}

impl<'a> Runner<'a> {
    fn new(env: &'a Environment, cfg: &'a TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let sampler = SamplerState::new(cfg.sampler)?;
        let store = WeightedStore::new(&sampler);
        Ok(Self {
            env,
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            policy: PolicyModel::tabular(env.n_states(), env.n_actions()),
            sampler,
            store,
            priorities: vec![1.0; cfg.buffer],
            max_priority: 1.0,
            values: vec![0.0; env.n_states()],
            env_steps: 0,
            episodes: 0,
            updates: 0,
            capped: 0,
            next_eval: 0,
            next_probe: if cfg.probe_interval > 0 { 0 } else { u64::MAX },
            points: Vec::new(),
        })
    }

    /// The selection distribution of the configured mode.
    fn selection(&self) -> Result<SimplexDistribution> {
        match self.cfg.mode {
            SelectionMode::Uniform => Ok(SimplexDistribution::uniform(self.cfg.buffer)),
            SelectionMode::TdPriority => SimplexDistribution::from_weights(&self.priorities),
            SelectionMode::Aes | SelectionMode::AesNaive => self.store.distribution(&self.sampler),
        }
    }

    fn draw(&mut self, p: &SimplexDistribution) -> Result<Vec<usize>> {
        let b = self.cfg.batch;
        match self.cfg.mode {
            SelectionMode::Uniform => Ok((0..b).map(|_| self.rng.gen_range(0..self.cfg.buffer)).collect()),
            SelectionMode::TdPriority => {
                let index = WeightedIndex::new(p.probs()).map_err(|e| AesError::Numeric(e.to_string()))?;
                Ok((0..b).map(|_| index.sample(&mut self.rng)).collect())
            }
            SelectionMode::Aes | SelectionMode::AesNaive => {
                self.store.sample_indices(&self.sampler, b, &mut self.rng)
            }
        }
    }

    fn collect(&mut self) -> Result<()> {
        let traj = self.env.rollout(&self.policy, self.updates, &mut self.rng)?;
        self.env_steps += traj.len() as u64;
        self.episodes += 1;
        let slot = if self.store.is_ready() {
            let p = self.selection()?;
            self.store.insert_overwrite(traj, &p, &mut self.sampler, &mut self.rng)?
        } else {
            self.store.insert(traj, &mut self.sampler, &mut self.rng)?
        };
        self.priorities[slot] = self.max_priority;
        Ok(())
    }

    fn warmup(&mut self) -> Result<()> {
        for _ in 0..self.cfg.warmup_episodes {
            self.collect()?;
        }
        Ok(())
    }

    /// One policy-gradient step on a replayed batch.
    fn update(&mut self) -> Result<()> {
        let p = self.selection()?;
        let idx = self.draw(&p)?;
        let mut batch = Vec::with_capacity(idx.len());
        for &slot in &idx {
            let traj = self.store.get(slot).ok_or(AesError::NotReady {
                occupancy: self.store.occupancy(),
                capacity: self.store.capacity(),
            })?;
            let (sample, capped) = GradientSample::from_trajectory(
                slot,
                traj,
                &self.policy,
                self.env.gamma(),
                self.cfg.log_ratio_cap,
            )?;
            self.capped += capped as u64;
            batch.push(sample);
        }
        let grad = replay_gradient(&batch, &p)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(AesError::Numeric(format!("non-finite gradient at update {}", self.updates)));
        }
        let alpha = self.cfg.learning_rate;
        self.policy
            .params_mut()
            .iter_mut()
            .zip(&grad)
            .for_each(|(th, g)| *th += alpha * g);
        match self.cfg.mode {
            SelectionMode::Aes | SelectionMode::AesNaive => {
                let feedback: Vec<(usize, f64)> = batch.iter().map(|s| (s.slot, s.d)).collect();
                self.store.apply_feedback(&mut self.sampler, &feedback, &p)?;
            }
            SelectionMode::TdPriority => self.refresh_priorities(&idx),
            SelectionMode::Uniform => {}
        }
        self.updates += 1;
        Ok(())
    }

    /// TD(0) on the sampled transitions, then priorities from the summed
    /// absolute TD errors of each sampled trajectory.
    fn refresh_priorities(&mut self, idx: &[usize]) {
        let gamma = self.env.gamma();
        let alpha = self.cfg.learning_rate;
        let mut seen = idx.to_vec();
        seen.sort_unstable();
        seen.dedup();
        for slot in seen {
            let traj = self.store.get(slot).expect("sampled slot is filled");
            let mut total = 0.0;
            for s in traj.steps() {
                let delta = s.reward + gamma * self.values[s.next_state] - self.values[s.state];
                total += delta.abs();
                self.values[s.state] += alpha * delta;
            }
            let priority = (total + TD_PRIORITY_EPS).powf(TD_PRIORITY_EXPONENT);
            self.priorities[slot] = priority;
            self.max_priority = self.max_priority.max(priority);
        }
    }

    fn probe(&self, p: &SimplexDistribution) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.env_steps.wrapping_add(1));
        let mut rng_uniform = rng.clone();
        let per_slot = slot_samples(&self.store, &self.policy, self.env.gamma(), self.cfg.log_ratio_cap)?;
        let own = estimator_variance(&per_slot, p, self.cfg.batch, self.cfg.probe_repeats, &mut rng)?;
        let uniform = estimator_variance(
            &per_slot,
            &SimplexDistribution::uniform(self.cfg.buffer),
            self.cfg.batch,
            self.cfg.probe_repeats,
            &mut rng_uniform,
        )?;
        Ok((own, uniform))
    }

    fn record(&mut self, force: bool) -> Result<()> {
        if !(force || self.env_steps >= self.next_eval) {
            return Ok(());
        }
        if self.points.last().is_some_and(|p| p.step == self.env_steps) {
            return Ok(());
        }
        let mut eval_rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        eval_rng.set_stream(u64::MAX - self.env_steps);
        let test_return = self.env.greedy_return(&self.policy, self.cfg.eval_episodes, &mut eval_rng)?;
        let p = self.selection()?;
        let (variance_probe, variance_uniform) = if self.env_steps >= self.next_probe {
            let (own, uniform) = self.probe(&p)?;
            while self.next_probe <= self.env_steps {
                self.next_probe += self.cfg.probe_interval;
            }
            (Some(own), Some(uniform))
        } else {
            (None, None)
        };
        self.points.push(TracePoint {
            step: self.env_steps,
            test_return,
            variance_probe,
            variance_uniform,
            p_entropy: p.entropy(),
            reset_count: self.sampler.reset_count(),
        });
        while self.next_eval <= self.env_steps {
            self.next_eval += self.cfg.eval_interval;
        }
        Ok(())
    }

    fn finish(self) -> TrainingTrace {
        TrainingTrace {
            seed: self.cfg.seed,
            mode: self.cfg.mode,
            env: self.env.name(),
            config_hash: self.cfg.config_hash(),
            points: self.points,
            updates: self.updates,
            capped_ratios: self.capped,
            policy: self.policy,
        }
    }
}

fn interleaved(env: &Environment, cfg: &TrainingConfig) -> Result<TrainingTrace> {
    let mut run = Runner::new(env, cfg)?;
    run.warmup()?;
    run.record(true)?;
    while run.env_steps < cfg.total_steps {
        for _ in 0..cfg.updates_per_episode {
            run.update()?;
            if cfg.mode == SelectionMode::Aes {
                run.store.maybe_reset(&mut run.sampler);
            }
        }
        run.collect()?;
        run.record(false)?;
    }
    run.record(true)?;
    Ok(run.finish())
}

/// The interleaved loop: update on a sampled batch, feed the per-slot losses
/// back to the sampler, apply the periodic reset, then collect one episode
/// into the slot drawn from the complement of the sampling distribution.
pub fn run_aes(env: &Environment, cfg: &TrainingConfig) -> Result<TrainingTrace> {
    if cfg.mode != SelectionMode::Aes {
        return Err(AesError::Config(format!("run_aes called with mode {}", cfg.mode)));
    }
    interleaved(env, cfg)
}

/// Uniform or TD-priority selection in the same interleaved loop.
pub fn run_baseline(env: &Environment, cfg: &TrainingConfig) -> Result<TrainingTrace> {
    if cfg.mode.uses_sampler() {
        return Err(AesError::Config(format!("run_baseline called with mode {}", cfg.mode)));
    }
    interleaved(env, cfg)
}

/// The epoch loop: collect one episode, zero every accumulator, then run
/// `inner_updates` sampled updates. Requires `inner_updates * batch < buffer`.
pub fn run_naive_aes(env: &Environment, cfg: &TrainingConfig) -> Result<TrainingTrace> {
    if cfg.mode != SelectionMode::AesNaive {
        return Err(AesError::Config(format!("run_naive_aes called with mode {}", cfg.mode)));
    }
    if cfg.inner_updates * cfg.batch >= cfg.buffer {
        return Err(AesError::Config(format!(
            "inner_updates {} must be below buffer / batch = {}",
            cfg.inner_updates,
            cfg.buffer as f64 / cfg.batch as f64
        )));
    }
    let mut run = Runner::new(env, cfg)?;
    run.warmup()?;
    run.record(true)?;
    while run.env_steps < cfg.total_steps {
        run.collect()?;
        run.sampler.clear();
        run.store.rebuild_index(&run.sampler);
        for _ in 0..cfg.inner_updates {
            run.update()?;
        }
        run.record(false)?;
    }
    run.record(true)?;
    Ok(run.finish())
}

/// Dispatches on the configured selection mode.
pub fn run_training(env: &Environment, cfg: &TrainingConfig) -> Result<TrainingTrace> {
    match cfg.mode {
        SelectionMode::Aes => run_aes(env, cfg),
        SelectionMode::AesNaive => run_naive_aes(env, cfg),
        _ => run_baseline(env, cfg),
    }
}
