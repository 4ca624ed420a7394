//! Small tabular MDPs with fixed horizons.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};
use crate::policy::PolicyModel;
use crate::trajectory::{Step, Trajectory};

pub const DEFAULT_GAMMA: f64 = 0.99;
/// Largest `|S| * |A|` accepted by the exact evaluators.
pub const EXACT_MAX_PAIRS: usize = 100;
pub const EXACT_MAX_HORIZON: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvKind {
    Chain { n_states: usize },
    Gridworld {
        rows: usize,
        cols: usize,
        goal: usize,
        traps: Vec<usize>,
    },
    TwoStateBandit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    kind: EnvKind,
    n_states: usize,
    n_actions: usize,
    /// `(next_state, probability)` lists indexed by `s * n_actions + a`.
    transitions: Vec<Vec<(usize, f64)>>,
    rewards: Vec<f64>,
    start: usize,
    horizon: usize,
    gamma: f64,
}

impl Environment {
    /// General constructor; validates that every transition row is a
    /// distribution and rewards are finite.
    pub fn tabular(
        kind: EnvKind,
        n_actions: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
        start: usize,
        horizon: usize,
    ) -> Result<Self> {
        if n_actions == 0 || transitions.is_empty() || !transitions.len().is_multiple_of(n_actions) {
            return Err(AesError::Config("transition table shape".into()));
        }
        let n_states = transitions.len() / n_actions;
        if rewards.len() != transitions.len() {
            return Err(AesError::Dimension {
                expected: transitions.len(),
                got: rewards.len(),
            });
        }
        for (k, row) in transitions.iter().enumerate() {
            let total: f64 = row.iter().map(|(_, q)| q).sum();
            if row.iter().any(|&(s, q)| s >= n_states || q.is_nan() || q < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(AesError::Config(format!("transition row {k} is not a distribution")));
            }
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(AesError::Config("non-finite reward".into()));
        }
        if start >= n_states || horizon == 0 {
            return Err(AesError::Config("start state or horizon out of range".into()));
        }
        Ok(Self {
            kind,
            n_states,
            n_actions,
            transitions,
            rewards,
            start,
            horizon,
            gamma: DEFAULT_GAMMA,
        })
    }

    /// States `0..n`. Action 1 moves right (staying at the end earns 1),
    /// action 0 returns to state 0 and earns 0.1.
    pub fn chain(n_states: usize, horizon: usize) -> Result<Self> {
        if n_states < 2 {
            return Err(AesError::Config("chain needs at least 2 states".into()));
        }
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for s in 0..n_states {
            transitions.push(vec![(0, 1.0)]);
            rewards.push(0.1);
            let last = s + 1 >= n_states;
            transitions.push(vec![(if last { s } else { s + 1 }, 1.0)]);
            rewards.push(if last { 1.0 } else { 0.0 });
        }
        Self::tabular(EnvKind::Chain { n_states }, 2, transitions, rewards, 0, horizon)
    }

    /// Deterministic grid starting in cell 0. Actions are up, right, down,
    /// left; moves into a wall stay put. Entering the goal earns 1, entering
    /// a trap earns -1, and both are absorbing with zero reward.
    pub fn gridworld(
        rows: usize,
        cols: usize,
        goal: usize,
        traps: Vec<usize>,
        horizon: usize,
    ) -> Result<Self> {
        let n = rows * cols;
        if n < 2 || goal >= n || goal == 0 || traps.iter().any(|&t| t >= n || t == goal || t == 0) {
            return Err(AesError::Config("gridworld layout out of range".into()));
        }
        let absorbing = |s: usize| s == goal || traps.contains(&s);
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for s in 0..n {
            let (r, c) = (s / cols, s % cols);
            for a in 0..4 {
                if absorbing(s) {
                    transitions.push(vec![(s, 1.0)]);
                    rewards.push(0.0);
                    continue;
                }
                let next = match a {
                    0 if r > 0 => s - cols,
                    1 if c + 1 < cols => s + 1,
                    2 if r + 1 < rows => s + cols,
                    3 if c > 0 => s - 1,
                    _ => s,
                };
                transitions.push(vec![(next, 1.0)]);
                rewards.push(if next == goal {
                    1.0
                } else if traps.contains(&next) {
                    -1.0
                } else {
                    0.0
                });
            }
        }
        Self::tabular(
            EnvKind::Gridworld {
                rows,
                cols,
                goal,
                traps,
            },
            4,
            transitions,
            rewards,
            0,
            horizon,
        )
    }

    /// One decision in state 0 with the given rewards, then a terminal state.
    pub fn two_state_bandit(rewards: [f64; 2]) -> Result<Self> {
        Self::tabular(
            EnvKind::TwoStateBandit,
            2,
            vec![vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)], vec![(1, 1.0)]],
            vec![rewards[0], rewards[1], 0.0, 0.0],
            0,
            1,
        )
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(AesError::Config(format!("gamma {gamma} outside (0, 1]")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn name(&self) -> String {
        match &self.kind {
            EnvKind::Chain { n_states } => format!("chain{n_states}"),
            EnvKind::Gridworld { rows, cols, .. } => format!("grid{rows}x{cols}"),
            EnvKind::TwoStateBandit => "bandit2".into(),
        }
    }

    pub fn kind(&self) -> &EnvKind {
        &self.kind
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.n_actions + action]
    }

    pub fn transition(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state * self.n_actions + action]
    }

    /// Largest absolute reward.
    pub fn reward_bound(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> (usize, f64) {
        let row = self.transition(state, action);
        let next = if row.len() == 1 {
            row[0].0
        } else {
            let mut u = rng.gen::<f64>();
            let mut chosen = row[row.len() - 1].0;
            for &(s, q) in row {
                if u < q {
                    chosen = s;
                    break;
                }
                u -= q;
            }
            chosen
        };
        (next, self.reward(state, action))
    }

    fn check_policy(&self, policy: &PolicyModel) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(AesError::Dimension {
                expected: self.n_states * self.n_actions,
                got: policy.n_states() * policy.n_actions(),
            });
        }
        Ok(())
    }

    /// Samples one full-horizon episode, recording the behavior probabilities.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        policy: &PolicyModel,
        tag: u64,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.check_policy(policy)?;
        let mut state = self.start;
        let mut steps = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let (action, prob) = policy.sample_action(state, rng);
            let (next, reward) = self.step(state, action, rng);
            steps.push(Step {
                state,
                action,
                behavior_prob: prob,
                reward,
                next_state: next,
            });
            state = next;
        }
        Trajectory::new(steps, tag)
    }

    /// Mean discounted return of the greedy policy over `episodes` rollouts.
    pub fn greedy_return<R: Rng + ?Sized>(
        &self,
        policy: &PolicyModel,
        episodes: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_policy(policy)?;
        if episodes == 0 {
            return Err(AesError::Config("need at least one evaluation episode".into()));
        }
        let mut total = 0.0;
        for _ in 0..episodes {
            let mut state = self.start;
            let mut discount = 1.0;
            for _ in 0..self.horizon {
                let (next, reward) = self.step(state, policy.greedy_action(state), rng);
                total += discount * reward;
                discount *= self.gamma;
                state = next;
            }
        }
        Ok(total / episodes as f64)
    }

    fn check_exact_size(&self) -> Result<()> {
        if self.n_states * self.n_actions > EXACT_MAX_PAIRS || self.horizon > EXACT_MAX_HORIZON {
            return Err(AesError::TooLarge(format!(
                "{} state-action pairs with horizon {}",
                self.n_states * self.n_actions,
                self.horizon
            )));
        }
        Ok(())
    }

    /// Expected discounted return of `policy` by backward induction.
    pub fn exact_policy_value(&self, policy: &PolicyModel) -> Result<f64> {
        self.check_exact_size()?;
        self.check_policy(policy)?;
        let probs: Vec<Vec<f64>> = (0..self.n_states).map(|s| policy.action_probs(s)).collect();
        let v = self.backward(|s, q| probs[s].iter().zip(q).map(|(p, x)| p * x).sum());
        Ok(v[self.start])
    }

    /// Optimal expected discounted return over all (possibly time-dependent)
    /// policies.
    pub fn optimal_value(&self) -> Result<f64> {
        self.check_exact_size()?;
        let v = self.backward(|_, q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        Ok(v[self.start])
    }

    fn backward(&self, combine: impl Fn(usize, &[f64]) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        let mut q = vec![0.0; self.n_actions];
        for _ in 0..self.horizon {
            let next: Vec<f64> = (0..self.n_states)
                .map(|s| {
                    for (a, qa) in q.iter_mut().enumerate() {
                        let cont: f64 = self.transition(s, a).iter().map(|&(n, p)| p * v[n]).sum();
                        *qa = self.reward(s, a) + self.gamma * cont;
                    }
                    combine(s, &q)
                })
                .collect();
            v = next;
        }
        v
    }
}
