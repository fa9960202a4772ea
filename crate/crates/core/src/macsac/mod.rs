//! Multi-agent constrained soft actor-critic: per-agent centralized
//! critics and cost-critics, entropy-regularized local actors and
//! Lagrange multipliers on the discounted voltage cost.

mod buffer;
mod learner;

use std::ops::Range;

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Checkpoint, Mlp, NeuralError, SquashedGaussianPolicy};

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use learner::{
    critic_loss, lambda_step, ActorEval, AgentNets, Macsac, MacsacConfig, Targets,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Where each agent's observation and action live in the joint vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub obs: Vec<Range<usize>>,
    pub act: Vec<Range<usize>>,
}

impl Layout {
    pub fn new(obs_dims: &[usize], act_dims: &[usize]) -> Self {
        let ranges = |dims: &[usize]| {
            let mut start = 0;
            dims.iter()
                .map(|&d| {
                    let r = start..start + d;
                    start += d;
                    r
                })
                .collect()
        };
        Layout {
            obs: ranges(obs_dims),
            act: ranges(act_dims),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }

    pub fn obs_dim(&self, i: usize) -> usize {
        self.obs[i].len()
    }

    pub fn act_dim(&self, i: usize) -> usize {
        self.act[i].len()
    }

    pub fn joint_obs(&self) -> usize {
        self.obs.last().map_or(0, |r| r.end)
    }

    pub fn joint_act(&self) -> usize {
        self.act.last().map_or(0, |r| r.end)
    }

    /// Agent `i`'s observation columns of a joint batch.
    pub fn local_obs(&self, x: &Array2<f64>, i: usize) -> Array2<f64> {
        x.slice(s![.., self.obs[i].clone()]).to_owned()
    }

    pub fn local_act(&self, a: &Array2<f64>, i: usize) -> Array2<f64> {
        a.slice(s![.., self.act[i].clone()]).to_owned()
    }

    pub fn check(&self, t: &Transition) -> Result<(), LearnError> {
        let n = self.n_agents();
        let ok = t.x.len() == self.joint_obs()
            && t.x_next.len() == self.joint_obs()
            && t.a.len() == self.joint_act()
            && t.r.len() == n
            && t.r_c.len() == n;
        if ok {
            Ok(())
        } else {
            Err(LearnError::Dimension(format!(
                "transition with x {}, a {}, r {} for layout x {}, a {}, {n} agents",
                t.x.len(),
                t.a.len(),
                t.r.len(),
                self.joint_obs(),
                self.joint_act()
            )))
        }
    }
}

/// An executable local policy, as shipped to a controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Actor {
    /// Stochastic mode samples the squashed Gaussian; deterministic mode
    /// returns `tanh(mu)`.
    Gaussian(SquashedGaussianPolicy),
    /// `tanh(net(o))`, plus clipped Gaussian noise when exploring.
    Deterministic { net: Mlp, noise: f64 },
}

impl Actor {
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        stochastic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>, NeuralError> {
        match self {
            Actor::Gaussian(pi) => pi.act(obs, stochastic, rng),
            Actor::Deterministic { net, noise } => {
                let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec())
                    .map_err(|e| NeuralError::Shape(e.to_string()))?;
                let mut a: Vec<f64> = net.forward(&x).iter().map(|v| v.tanh()).collect();
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(NeuralError::NonFinite {
                        name: "deterministic actor output".into(),
                    });
                }
                if stochastic && *noise > 0.0 {
                    let n = Normal::new(0.0, *noise).expect("positive noise scale");
                    for v in &mut a {
                        *v = (*v + n.sample(rng)).clamp(-1.0, 1.0);
                    }
                }
                Ok(a)
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        use crate::neural::Module;
        match self {
            Actor::Gaussian(pi) => Checkpoint::from_params(pi.params()),
            Actor::Deterministic { net, .. } => Checkpoint::from_params(net.params()),
        }
    }
}

/// Per-agent diagnostics of one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub critic_loss: f64,
    pub cost_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub update: u64,
    pub agents: Vec<AgentMetrics>,
}

/// What the online simulator needs from any off-policy learner.
pub trait Learner {
    fn layout(&self) -> &Layout;
    fn batch_size(&self) -> usize;
    /// Current local policy of `agent`, detached from the learner.
    fn actor(&self, agent: usize) -> Actor;
    /// One update from the buffer; `None` when it holds fewer than a batch.
    fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<Option<TrainMetrics>, LearnError>;
    /// Every learner-side tensor.
    fn checkpoint(&self) -> Checkpoint;

    fn n_agents(&self) -> usize {
        self.layout().n_agents()
    }
}
