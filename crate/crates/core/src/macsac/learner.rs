use ndarray::{concatenate, Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Actor, AgentMetrics, Batch, Layout, LearnError, Learner, ReplayBuffer, TrainMetrics};
use crate::neural::{standard_normal, Adam, Checkpoint, Mlp, Module, SquashedGaussianPolicy, Tape, Var};
use crate::seed::{mix_seed, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacsacConfig {
    pub gamma: f64,
    /// Entropy coefficient, shared by all agents.
    pub alpha: f64,
    /// Bound on each agent's discounted cost.
    pub cost_bound: f64,
    /// Adam step size for actors and critics.
    pub lr: f64,
    /// Multiplier step size.
    pub lambda_lr: f64,
    pub lambda_init: f64,
    /// Keep every multiplier at `lambda_init`.
    pub freeze_lambda: bool,
    pub eta: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    /// Second reward critic; targets and actors use the minimum.
    pub twin_critics: bool,
    /// Multiplies rewards before they reach the critics.
    pub reward_scale: f64,
    /// Multiplies costs before they reach the cost-critics.
    pub cost_scale: f64,
}

impl Default for MacsacConfig {
    fn default() -> Self {
        MacsacConfig {
            gamma: crate::env::DEFAULT_GAMMA,
            alpha: 0.1,
            cost_bound: 0.0,
            lr: 1e-3,
            lambda_lr: 1e-3,
            lambda_init: 0.0,
            freeze_lambda: false,
            eta: 0.995,
            hidden: vec![256, 256],
            batch_size: 256,
            twin_critics: false,
            reward_scale: 1.0,
            cost_scale: 1.0,
        }
    }
}

/// Networks, optimizers and multiplier of one agent.
#[derive(Debug, Clone)]
pub struct AgentNets {
    pub actor: SquashedGaussianPolicy,
    pub critic: Mlp,
    pub critic2: Option<Mlp>,
    pub cost_critic: Mlp,
    pub critic_target: Mlp,
    pub critic2_target: Option<Mlp>,
    pub cost_target: Mlp,
    pub lambda: f64,
    opt_actor: Adam,
    opt_critic: Adam,
    opt_critic2: Option<Adam>,
    opt_cost: Adam,
}

/// Bellman targets of one agent over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub y: Array1<f64>,
    pub y_c: Array1<f64>,
}

/// Actor objective and its gradient for one agent.
#[derive(Debug, Clone)]
pub struct ActorEval {
    /// Negated Lagrangian (the quantity minimized).
    pub loss: f64,
    pub grads: Vec<Array2<f64>>,
    /// `-E[log pi]` of the agent's sampled actions.
    pub entropy: f64,
    /// `E[Q^c]` at the sampled joint actions.
    pub mean_qc: f64,
}

/// Projected multiplier ascent `max(0, lambda + lr * (E[Q^c] - bound))`.
pub fn lambda_step(lambda: f64, lr: f64, mean_qc: f64, bound: f64) -> f64 {
    (lambda + lr * (mean_qc - bound)).max(0.0)
}

/// Mean squared error of `net(input)` against `y` and its parameter
/// gradients.
pub fn critic_loss(
    net: &Mlp,
    input: &Array2<f64>,
    y: &Array1<f64>,
) -> Result<(f64, Vec<Array2<f64>>), LearnError> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let (q, bound) = net.record(&mut tape, x, true);
    let yv = tape.constant(y.clone().insert_axis(Axis(1)));
    let d = tape.sub(q, yv);
    let sq = tape.square(d);
    let loss = tape.mean(sq);
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(LearnError::NonFinite(format!("{} loss", net.params()[0].name)));
    }
    let grads = bound.grads(&tape.backward(loss))?;
    Ok((value, grads))
}

fn joint(x: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[x.view(), a.view()]).expect("equal batch sizes")
}

fn column(m: Array2<f64>) -> Array1<f64> {
    m.index_axis_move(Axis(1), 0)
}

fn finite(name: &str, v: &Array1<f64>) -> Result<(), LearnError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LearnError::NonFinite(name.into()))
    }
}

/// The MACSAC learner.
#[derive(Debug, Clone)]
pub struct Macsac {
    pub config: MacsacConfig,
    layout: Layout,
    pub agents: Vec<AgentNets>,
    rng: ChaCha8Rng,
    updates: u64,
}

impl Macsac {
    /// Initializes every network from `seed`; updates draw from a
    /// separate stream of the same seed.
    pub fn new(obs_dims: &[usize], act_dims: &[usize], config: MacsacConfig, seed: u64) -> Self {
        assert_eq!(obs_dims.len(), act_dims.len(), "one action size per agent");
        let layout = Layout::new(obs_dims, act_dims);
        let mut init = crate::seed::rng(seed, streams::INIT);
        let q_in = layout.joint_obs() + layout.joint_act();
        let mut q_sizes = vec![q_in];
        q_sizes.extend_from_slice(&config.hidden);
        q_sizes.push(1);
        let agents = (0..layout.n_agents())
            .map(|i| {
                let actor = SquashedGaussianPolicy::new(
                    &format!("actor{i}"),
                    obs_dims[i],
                    &config.hidden,
                    act_dims[i],
                    &mut init,
                );
                let critic = Mlp::new(&format!("critic{i}"), &q_sizes, &mut init);
                let critic2 = config
                    .twin_critics
                    .then(|| Mlp::new(&format!("critic{i}b"), &q_sizes, &mut init));
                let cost_critic = Mlp::new(&format!("cost{i}"), &q_sizes, &mut init);
                AgentNets {
                    opt_actor: Adam::new(config.lr, &actor.params()),
                    opt_critic: Adam::new(config.lr, &critic.params()),
                    opt_critic2: critic2.as_ref().map(|c| Adam::new(config.lr, &c.params())),
                    opt_cost: Adam::new(config.lr, &cost_critic.params()),
                    critic_target: critic.clone(),
                    critic2_target: critic2.clone(),
                    cost_target: cost_critic.clone(),
                    actor,
                    critic,
                    critic2,
                    cost_critic,
                    lambda: config.lambda_init,
                }
            })
            .collect();
        Macsac {
            layout,
            agents,
            rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, streams::LEARNER)),
            updates: 0,
            config,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.lambda).collect()
    }

    /// Standard normal noise for every agent's action over `n` rows.
    pub fn draw_noise(&mut self, n: usize) -> Vec<Array2<f64>> {
        (0..self.layout.n_agents())
            .map(|i| standard_normal((n, self.layout.act_dim(i)), &mut self.rng))
            .collect()
    }

    /// Joint squashed actions and per-agent log-densities at joint
    /// observations `x` for given noise.
    pub fn joint_sample(
        &self,
        x: &Array2<f64>,
        xi: &[Array2<f64>],
    ) -> Result<(Array2<f64>, Vec<Array1<f64>>), LearnError> {
        let mut acts = Vec::new();
        let mut logps = Vec::new();
        for (i, ag) in self.agents.iter().enumerate() {
            let (a, lp) = ag.actor.sample_with(&self.layout.local_obs(x, i), &xi[i])?;
            acts.push(a);
            logps.push(lp);
        }
        let views: Vec<_> = acts.iter().map(|a| a.view()).collect();
        let a = concatenate(Axis(1), &views).expect("equal batch sizes");
        Ok((a, logps))
    }

    /// Bellman targets of agent `i`, with next actions drawn from the
    /// current actors using noise `xi_next`.
    pub fn targets(&self, i: usize, batch: &Batch, xi_next: &[Array2<f64>]) -> Result<Targets, LearnError> {
        let cfg = &self.config;
        let ag = &self.agents[i];
        let (a_next, logps) = self.joint_sample(&batch.x_next, xi_next)?;
        let input = joint(&batch.x_next, &a_next);
        let mut q = column(ag.critic_target.forward(&input));
        if let Some(t2) = &ag.critic2_target {
            let q2 = column(t2.forward(&input));
            q.zip_mut_with(&q2, |a, &b| *a = a.min(b));
        }
        let qc = column(ag.cost_target.forward(&input));
        let keep = batch.done.mapv(|d| cfg.gamma * (1.0 - d));
        let r = batch.r.column(i).mapv(|v| v * cfg.reward_scale);
        let rc = batch.r_c.column(i).mapv(|v| v * cfg.cost_scale);
        let y = &r + &(&keep * &(&q - &(&logps[i] * cfg.alpha)));
        let y_c = &rc + &(&keep * &qc);
        finite("reward target", &y)?;
        finite("cost target", &y_c)?;
        Ok(Targets { y, y_c })
    }

    /// Targets for every agent on one batch, drawing noise from the
    /// learner's generator.
    pub fn critic_targets(&mut self, batch: &Batch) -> Result<Vec<Targets>, LearnError> {
        let xi = self.draw_noise(batch.len());
        (0..self.layout.n_agents())
            .map(|i| self.targets(i, batch, &xi))
            .collect()
    }

    /// One Adam step on each critic of agent `i`; returns the reward- and
    /// cost-critic losses.
    pub fn critic_update(&mut self, i: usize, batch: &Batch, targets: &Targets) -> Result<(f64, f64), LearnError> {
        let input = joint(&batch.x, &batch.a);
        let ag = &mut self.agents[i];
        let (lq, gq) = critic_loss(&ag.critic, &input, &targets.y)?;
        ag.opt_critic.step(&mut ag.critic.params_mut(), &gq)?;
        if let (Some(c2), Some(opt)) = (ag.critic2.as_mut(), ag.opt_critic2.as_mut()) {
            let (_, g2) = critic_loss(c2, &input, &targets.y)?;
            opt.step(&mut c2.params_mut(), &g2)?;
        }
        let (lc, gc) = critic_loss(&ag.cost_critic, &input, &targets.y_c)?;
        ag.opt_cost.step(&mut ag.cost_critic.params_mut(), &gc)?;
        Ok((lq, lc))
    }

    /// Negated Lagrangian of agent `i` and its actor gradient. Other
    /// agents' actions are sampled from their actors with noise `xi` and
    /// held constant; critics are held constant.
    pub fn actor_eval(&self, i: usize, batch: &Batch, xi: &[Array2<f64>]) -> Result<ActorEval, LearnError> {
        let n = self.layout.n_agents();
        let ag = &self.agents[i];
        let mut tape = Tape::new();
        let x = tape.constant(batch.x.clone());
        let mut parts: Vec<Var> = vec![x];
        let mut own = None;
        for j in 0..n {
            let obs = self.layout.local_obs(&batch.x, j);
            if j == i {
                let o = tape.constant(obs);
                let pv = ag.actor.record(&mut tape, o, &xi[j], true);
                parts.push(pv.action);
                own = Some(pv);
            } else {
                let (a, _) = self.agents[j].actor.sample_with(&obs, &xi[j])?;
                parts.push(tape.constant(a));
            }
        }
        let own = own.expect("agent index in range");
        let input = tape.concat(&parts);
        let (mut q, _) = ag.critic.record(&mut tape, input, false);
        if let Some(c2) = &ag.critic2 {
            let (q2, _) = c2.record(&mut tape, input, false);
            q = tape.min(q, q2);
        }
        let (qc, _) = ag.cost_critic.record(&mut tape, input, false);
        let q_mean = tape.mean(q);
        let lp_mean = tape.mean(own.log_prob);
        let qc_mean = tape.mean(qc);
        // loss = -(E[Q] - alpha E[log pi]) + lambda E[Q^c]  (constant term dropped)
        let ent = tape.scale(lp_mean, self.config.alpha);
        let neg_q = tape.scale(q_mean, -1.0);
        let pen = tape.scale(qc_mean, ag.lambda);
        let l = tape.add(neg_q, ent);
        let loss = tape.add(l, pen);
        let mean_qc = tape.scalar(qc_mean);
        let value = tape.scalar(loss) + ag.lambda * (-self.config.cost_bound);
        if !value.is_finite() {
            return Err(LearnError::NonFinite(format!("actor {i} objective")));
        }
        let grads = own.bound.grads(&tape.backward(loss))?;
        Ok(ActorEval {
            loss: value,
            grads,
            entropy: -tape.scalar(lp_mean),
            mean_qc,
        })
    }

    pub fn actor_update(&mut self, i: usize, batch: &Batch, xi: &[Array2<f64>]) -> Result<ActorEval, LearnError> {
        let eval = self.actor_eval(i, batch, xi)?;
        let ag = &mut self.agents[i];
        ag.opt_actor.step(&mut ag.actor.params_mut(), &eval.grads)?;
        Ok(eval)
    }

    /// Multiplier update from the cost-critic value at freshly sampled
    /// actions.
    pub fn lambda_update(&mut self, i: usize, mean_qc: f64) -> f64 {
        let cfg = &self.config;
        let ag = &mut self.agents[i];
        if !cfg.freeze_lambda {
            ag.lambda = lambda_step(ag.lambda, cfg.lambda_lr, mean_qc, cfg.cost_bound);
        }
        ag.lambda
    }

    pub fn update_targets(&mut self, i: usize) -> Result<(), LearnError> {
        let eta = self.config.eta;
        let ag = &mut self.agents[i];
        ag.critic_target.polyak_from(&ag.critic, eta)?;
        if let (Some(t), Some(c)) = (ag.critic2_target.as_mut(), ag.critic2.as_ref()) {
            t.polyak_from(c, eta)?;
        }
        ag.cost_target.polyak_from(&ag.cost_critic, eta)?;
        Ok(())
    }

    /// One update of agent `i` on its own batch: critics, actor,
    /// multiplier, targets.
    pub fn update_agent(&mut self, i: usize, batch: &Batch) -> Result<AgentMetrics, LearnError> {
        let xi_next = self.draw_noise(batch.len());
        let targets = self.targets(i, batch, &xi_next)?;
        let (critic_loss, cost_loss) = self.critic_update(i, batch, &targets)?;
        let xi = self.draw_noise(batch.len());
        let eval = self.actor_update(i, batch, &xi)?;
        let lambda = self.lambda_update(i, eval.mean_qc);
        self.update_targets(i)?;
        Ok(AgentMetrics {
            critic_loss,
            cost_loss,
            actor_loss: eval.loss,
            entropy: eval.entropy,
            lambda,
        })
    }

    pub fn sample_batch(&mut self, buffer: &ReplayBuffer) -> Batch {
        buffer.sample(self.config.batch_size, &mut self.rng)
    }
}

impl Learner for Macsac {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    fn actor(&self, agent: usize) -> Actor {
        Actor::Gaussian(self.agents[agent].actor.clone())
    }

    fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<Option<TrainMetrics>, LearnError> {
        if buffer.is_empty() || buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        let mut agents = Vec::with_capacity(self.layout.n_agents());
        for i in 0..self.layout.n_agents() {
            let batch = self.sample_batch(buffer);
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
            if let Some(c2) = &ag.critic2 {
                ck.extend(c2.params());
            }
            ck.extend(ag.cost_critic.params());
        }
        ck
    }
}
