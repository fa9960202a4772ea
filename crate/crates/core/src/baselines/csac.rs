use crate::env::{EnvError, MultiAgentEnv, StepFeedback};
use crate::macsac::{Macsac, MacsacConfig};

/// Presents a multi-agent environment as one agent that sees every
/// observation, sets every action and pays the network-wide cost.
#[derive(Debug, Clone)]
pub struct Centralized<E> {
    pub inner: E,
}

impl<E: MultiAgentEnv> Centralized<E> {
    pub fn new(inner: E) -> Self {
        Centralized { inner }
    }

    fn split(&self, joint: &[f64]) -> Result<Vec<Vec<f64>>, EnvError> {
        let dims = self.inner.act_dims();
        if joint.len() != dims.iter().sum::<usize>() {
            return Err(EnvError::InvalidAction(format!(
                "centralized action of length {} for {} setpoints",
                joint.len(),
                dims.iter().sum::<usize>()
            )));
        }
        let mut out = Vec::new();
        let mut start = 0;
        for d in dims {
            out.push(joint[start..start + d].to_vec());
            start += d;
        }
        Ok(out)
    }
}

impl<E: MultiAgentEnv> MultiAgentEnv for Centralized<E> {
    fn n_agents(&self) -> usize {
        1
    }

    fn obs_dims(&self) -> Vec<usize> {
        vec![self.inner.obs_dims().iter().sum()]
    }

    fn act_dims(&self) -> Vec<usize> {
        vec![self.inner.act_dims().iter().sum()]
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn reset_episode(&mut self, episode: u64) -> Result<Vec<Vec<f64>>, EnvError> {
        Ok(vec![self.inner.reset_episode(episode)?.concat()])
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<StepFeedback, EnvError> {
        if actions.len() != 1 {
            return Err(EnvError::InvalidAction("one centralized action expected".into()));
        }
        let parts = self.split(&actions[0])?;
        let fb = self.inner.step(&parts)?;
        Ok(StepFeedback {
            observations: vec![fb.observations.concat()],
            rewards: vec![fb.rewards[0]],
            costs: vec![fb.global_cost],
            global_cost: fb.global_cost,
            done: fb.done,
            loss_mw: fb.loss_mw,
            vvr: fb.vvr,
        })
    }
}

/// Centralized constrained SAC: the MACSAC learner with a single agent
/// over concatenated observations and actions.
pub fn csac(obs_dims: &[usize], act_dims: &[usize], config: MacsacConfig, seed: u64) -> Macsac {
    Macsac::new(
        &[obs_dims.iter().sum()],
        &[act_dims.iter().sum()],
        config,
        seed,
    )
}
