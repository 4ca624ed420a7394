use serde::{Deserialize, Serialize};

use crate::error::{AesError, Result};

/// One environment transition with the probability the behavior policy
/// assigned to the action it took.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub behavior_prob: f64,
    pub reward: f64,
    pub next_state: usize,
}

/// A fixed-horizon episode tagged with the policy-update step that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    steps: Vec<Step>,
    policy_tag: u64,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, policy_tag: u64) -> Result<Self> {
        if steps.is_empty() {
            return Err(AesError::InvalidState("trajectory has no steps".into()));
        }
        if let Some(t) = steps
            .iter()
            .position(|s| !(s.behavior_prob > 0.0 && s.behavior_prob <= 1.0))
        {
            return Err(AesError::InvalidState(format!(
                "behavior probability {} at step {t} is outside (0, 1]",
                steps[t].behavior_prob
            )));
        }
        Ok(Self { steps, policy_tag })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn policy_tag(&self) -> u64 {
        self.policy_tag
    }

    /// `sum_t gamma^t r_t`.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut discount = 1.0;
        let mut total = 0.0;
        for s in &self.steps {
            total += discount * s.reward;
            discount *= gamma;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(p: f64, r: f64) -> Step {
        Step {
            state: 0,
            action: 0,
            behavior_prob: p,
            reward: r,
            next_state: 0,
        }
    }

    #[test]
    fn validates_steps() {
        assert!(Trajectory::new(vec![], 0).is_err());
        assert!(Trajectory::new(vec![step(0.0, 1.0)], 0).is_err());
        assert!(Trajectory::new(vec![step(1.5, 1.0)], 0).is_err());
        assert!(Trajectory::new(vec![step(1.0, 1.0)], 0).is_ok());
    }

    #[test]
    fn discounted_return() {
        let t = Trajectory::new(vec![step(0.5, 1.0), step(0.5, 2.0), step(0.5, 4.0)], 3).unwrap();
        assert!((t.discounted_return(0.5) - 3.0).abs() < 1e-15);
        assert_eq!(t.policy_tag(), 3);
    }
}
