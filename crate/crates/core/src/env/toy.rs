//! A stateless multi-agent constrained bandit with a known optimum, used
//! to check learners end to end without a power-flow model.

use super::{EnvError, MultiAgentEnv, StepFeedback};

/// Every agent observes the constant `[1.0]` and picks one scalar action.
///
/// Shared reward `-sum_i (a_i - target_i)^2`; every agent's cost is the
/// hinge `max(0, sum_i a_i - budget)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCmg {
    pub targets: Vec<f64>,
    pub budget: f64,
    pub horizon: usize,
    t: usize,
}

impl ToyCmg {
    pub fn new(targets: Vec<f64>, budget: f64, horizon: usize) -> Self {
        ToyCmg {
            targets,
            budget,
            horizon,
            t: 0,
        }
    }

    pub fn reward(&self, actions: &[f64]) -> f64 {
        -actions
            .iter()
            .zip(&self.targets)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
    }

    pub fn cost(&self, actions: &[f64]) -> f64 {
        (actions.iter().sum::<f64>() - self.budget).max(0.0)
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        vec![vec![1.0]; self.targets.len()]
    }
}

impl MultiAgentEnv for ToyCmg {
    fn n_agents(&self) -> usize {
        self.targets.len()
    }

    fn obs_dims(&self) -> Vec<usize> {
        vec![1; self.targets.len()]
    }

    fn act_dims(&self) -> Vec<usize> {
        vec![1; self.targets.len()]
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset_episode(&mut self, _episode: u64) -> Result<Vec<Vec<f64>>, EnvError> {
        self.t = 0;
        Ok(self.observations())
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<StepFeedback, EnvError> {
        if self.t >= self.horizon {
            return Err(EnvError::Finished);
        }
        if actions.len() != self.targets.len() || actions.iter().any(|a| a.len() != 1) {
            return Err(EnvError::InvalidAction("one scalar per agent expected".into()));
        }
        let a: Vec<f64> = actions.iter().map(|v| v[0].clamp(-1.0, 1.0)).collect();
        let r = self.reward(&a);
        let c = self.cost(&a);
        self.t += 1;
        Ok(StepFeedback {
            observations: self.observations(),
            rewards: vec![r; a.len()],
            costs: vec![c; a.len()],
            global_cost: c,
            done: self.t >= self.horizon,
            loss_mw: -r,
            vvr: c,
        })
    }
}
