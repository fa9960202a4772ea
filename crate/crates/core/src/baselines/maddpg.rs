use ndarray::{concatenate, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::macsac::{
    critic_loss, Actor, AgentMetrics, Batch, Layout, LearnError, Learner, ReplayBuffer,
    TrainMetrics,
};
use crate::neural::{Adam, Checkpoint, Mlp, Module, Tape, Var};
use crate::seed::{mix_seed, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaddpgConfig {
    pub gamma: f64,
    pub lr: f64,
    pub eta: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    /// Standard deviation of the exploration noise.
    pub noise: f64,
    /// Fixed weight folding each agent's cost into its reward.
    pub penalty: f64,
    pub reward_scale: f64,
}

impl Default for MaddpgConfig {
    fn default() -> Self {
        MaddpgConfig {
            gamma: crate::env::DEFAULT_GAMMA,
            lr: 1e-3,
            eta: 0.995,
            hidden: vec![256, 256],
            batch_size: 256,
            noise: 0.07,
            penalty: 10.0,
            reward_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    /// Pre-squash network; the action is `tanh(actor(o))`.
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic: Mlp,
    pub critic_target: Mlp,
    opt_actor: Adam,
    opt_critic: Adam,
}

/// Multi-agent DDPG with centralized critics and a fixed voltage penalty.
#[derive(Debug, Clone)]
pub struct Maddpg {
    pub config: MaddpgConfig,
    layout: Layout,
    pub agents: Vec<DdpgAgent>,
    rng: ChaCha8Rng,
    updates: u64,
}

fn squash(net: &Mlp, obs: &Array2<f64>) -> Array2<f64> {
    net.forward(obs).mapv(f64::tanh)
}

impl Maddpg {
    pub fn new(obs_dims: &[usize], act_dims: &[usize], config: MaddpgConfig, seed: u64) -> Self {
        let layout = Layout::new(obs_dims, act_dims);
        let mut init = crate::seed::rng(seed, streams::INIT);
        let mut q_sizes = vec![layout.joint_obs() + layout.joint_act()];
        q_sizes.extend_from_slice(&config.hidden);
        q_sizes.push(1);
        let agents = (0..layout.n_agents())
            .map(|i| {
                let mut a_sizes = vec![obs_dims[i]];
                a_sizes.extend_from_slice(&config.hidden);
                a_sizes.push(act_dims[i]);
                let actor = Mlp::new(&format!("actor{i}"), &a_sizes, &mut init);
                let critic = Mlp::new(&format!("critic{i}"), &q_sizes, &mut init);
                DdpgAgent {
                    opt_actor: Adam::new(config.lr, &actor.params()),
                    opt_critic: Adam::new(config.lr, &critic.params()),
                    actor_target: actor.clone(),
                    critic_target: critic.clone(),
                    actor,
                    critic,
                }
            })
            .collect();
        Maddpg {
            layout,
            agents,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, streams::LEARNER)),
            updates: 0,
            config,
        }
    }

    fn joint_actions(&self, x: &Array2<f64>, target: bool) -> Array2<f64> {
        let acts: Vec<Array2<f64>> = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, ag)| {
                let net = if target { &ag.actor_target } else { &ag.actor };
                squash(net, &self.layout.local_obs(x, i))
            })
            .collect();
        let views: Vec<_> = acts.iter().map(|a| a.view()).collect();
        concatenate(Axis(1), &views).expect("equal batch sizes")
    }

    /// `r_i - penalty * r_c_i + gamma * Q_target(x', mu_target(o'))`.
    pub fn targets(&self, i: usize, batch: &Batch) -> Result<Array1<f64>, LearnError> {
        let cfg = &self.config;
        let a_next = self.joint_actions(&batch.x_next, true);
        let input = concatenate(Axis(1), &[batch.x_next.view(), a_next.view()])
            .expect("equal batch sizes");
        let q = self.agents[i].critic_target.forward(&input).index_axis_move(Axis(1), 0);
        let r = (&batch.r.column(i) - &(&batch.r_c.column(i) * cfg.penalty)) * cfg.reward_scale;
        let y = &r + &(batch.done.mapv(|d| cfg.gamma * (1.0 - d)) * &q);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::NonFinite("reward target".into()));
        }
        Ok(y)
    }

    /// `-E[Q_i(x, mu_1(o_1), .., mu_N(o_N))]` and its gradient for agent
    /// `i`'s actor; other actors and the critic are held constant.
    pub fn actor_eval(&self, i: usize, batch: &Batch) -> Result<(f64, Vec<Array2<f64>>), LearnError> {
        let mut tape = Tape::new();
        let mut parts: Vec<Var> = vec![tape.constant(batch.x.clone())];
        let mut own = None;
        for (j, ag) in self.agents.iter().enumerate() {
            let obs = self.layout.local_obs(&batch.x, j);
            if j == i {
                let o = tape.constant(obs);
                let (h, bound) = ag.actor.record(&mut tape, o, true);
                parts.push(tape.tanh(h));
                own = Some(bound);
            } else {
                parts.push(tape.constant(squash(&ag.actor, &obs)));
            }
        }
        let input = tape.concat(&parts);
        let (q, _) = self.agents[i].critic.record(&mut tape, input, false);
        let m = tape.mean(q);
        let loss = tape.scale(m, -1.0);
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(LearnError::NonFinite(format!("actor {i} objective")));
        }
        let grads = own.expect("agent in range").grads(&tape.backward(loss))?;
        Ok((value, grads))
    }

    pub fn update_agent(&mut self, i: usize, batch: &Batch) -> Result<AgentMetrics, LearnError> {
        let y = self.targets(i, batch)?;
        let input = concatenate(Axis(1), &[batch.x.view(), batch.a.view()]).expect("equal batch sizes");
        let (critic_loss_v, gq) = critic_loss(&self.agents[i].critic, &input, &y)?;
        {
            let ag = &mut self.agents[i];
            ag.opt_critic.step(&mut ag.critic.params_mut(), &gq)?;
        }
        let (actor_loss, ga) = self.actor_eval(i, batch)?;
        let eta = self.config.eta;
        let ag = &mut self.agents[i];
        ag.opt_actor.step(&mut ag.actor.params_mut(), &ga)?;
        ag.critic_target.polyak_from(&ag.critic, eta)?;
        ag.actor_target.polyak_from(&ag.actor, eta)?;
        Ok(AgentMetrics {
            critic_loss: critic_loss_v,
            cost_loss: 0.0,
            actor_loss,
            entropy: 0.0,
            lambda: self.config.penalty,
        })
    }
}

impl Learner for Maddpg {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    fn actor(&self, agent: usize) -> Actor {
        Actor::Deterministic {
            net: self.agents[agent].actor.clone(),
            noise: self.config.noise,
        }
    }

    fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<Option<TrainMetrics>, LearnError> {
        if buffer.is_empty() || buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        let mut agents = Vec::new();
        for i in 0..self.layout.n_agents() {
            let batch = buffer.sample(self.config.batch_size, &mut self.rng);
            agents.push(self.update_agent(i, &batch)?);
        }
        self.updates += 1;
        Ok(Some(TrainMetrics {
            update: self.updates,
            agents,
        }))
    }

    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        for ag in &self.agents {
            ck.extend(ag.actor.params());
            ck.extend(ag.critic.params());
        }
        ck
    }
}
