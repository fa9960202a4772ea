//! Discrete-event simulation of online learning with decentralized
//! control: executors act every `dt` on possibly stale local policies,
//! samples are uploaded every `t_s`, and the central learner trains and
//! ships policies every `t_u`.

mod queue;
mod schedule;

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env::{EnvError, MultiAgentEnv, StepFeedback};
use crate::macsac::{AgentMetrics, LearnError, Learner, ReplayBuffer, Transition};
use crate::neural::NeuralError;
use crate::seed::{rng, streams};

pub use queue::{Event, EventKind, EventQueue, PolicySnapshot};
pub use schedule::{select_exploration, Exploration, OldcSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OldcError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("learner and environment disagree: {0}")]
    Dimension(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Explore on a copy of the system and apply the policy mode to the
    /// real one; the copy's transitions are the ones uploaded.
    pub shadow_exploration: bool,
    pub buffer_capacity: usize,
    /// Episode index of the first profile.
    pub first_episode: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            episodes: 1,
            seed: 0,
            shadow_exploration: false,
            buffer_capacity: 400_000,
            first_episode: 0,
        }
    }
}

/// A local controller: its agent index and current policy copy. It only
/// ever sees its own area's observation.
#[derive(Debug, Clone)]
pub struct Executor {
    pub snapshot: PolicySnapshot,
}

impl Executor {
    pub fn version(&self) -> u64 {
        self.snapshot.version
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        local_obs: &[f64],
        mode: Exploration,
        rng: &mut R,
    ) -> Result<Vec<f64>, NeuralError> {
        self.snapshot
            .actor
            .act(local_obs, mode == Exploration::Stochastic, rng)
    }

    /// Swaps in `s` if it is newer; returns whether it did.
    pub fn receive(&mut self, s: PolicySnapshot) -> bool {
        if s.version > self.snapshot.version {
            self.snapshot = s;
            true
        } else {
            false
        }
    }
}

/// Fresh snapshot of `agent`'s policy from the learner.
pub fn ship_policy<L: Learner + ?Sized>(learner: &L, agent: usize, version: u64) -> PolicySnapshot {
    PolicySnapshot {
        agent,
        version,
        actor: learner.actor(agent),
    }
}

/// One processed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: u64,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<usize>,
    /// Policy version used (control), carried (arrival) or produced
    /// (train).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stochastic: Option<bool>,
    /// Samples uploaded or stored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub digest: String,
}

/// Metrics of one control step on the real system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub episode: usize,
    pub t: usize,
    pub time: u64,
    pub loss_mw: f64,
    pub vvr: f64,
    pub reward: f64,
    pub stochastic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub time: u64,
    pub version: u64,
    pub agents: Vec<AgentMetrics>,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub events: Vec<EventRecord>,
    pub steps: Vec<StepRecord>,
    pub train: Vec<TrainRecord>,
    pub uploaded: usize,
    pub dropped: usize,
    pub buffer: ReplayBuffer,
    /// Final policy version held by each executor.
    pub executor_versions: Vec<u64>,
    pub learner_version: u64,
}

impl RunLog {
    /// One JSON object per line.
    pub fn write_events<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn events_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_events(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

fn hash_f64s<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn hash_transition(t: &Transition) -> String {
    hash_f64s(
        t.x.iter()
            .chain(&t.a)
            .chain(&t.r)
            .chain(&t.r_c)
            .chain(&t.x_next)
            .chain(std::iter::once(&if t.done { 1.0 } else { 0.0 })),
    )
}

fn hash_snapshot(s: &PolicySnapshot) -> String {
    let ck = s.actor.checkpoint();
    hash_f64s(ck.tensors.iter().flat_map(|t| t.data.iter()))
}

struct Sim<'a, E, L: ?Sized> {
    schedule: &'a OldcSchedule,
    opts: &'a RunOptions,
    env: &'a mut E,
    learner: &'a mut L,
    queue: EventQueue,
    executors: Vec<Executor>,
    buffer: ReplayBuffer,
    explore: ChaCha8Rng,
    drops: ChaCha8Rng,
    obs: Vec<Vec<f64>>,
    pending: Vec<Option<Vec<f64>>>,
    window: Vec<Transition>,
    step: usize,
    episode: usize,
    t_in_episode: usize,
    total_steps: usize,
    learner_version: u64,
    log: RunLog,
}

impl<E: MultiAgentEnv, L: Learner + ?Sized> Sim<'_, E, L> {
    fn last_control_time(&self) -> u64 {
        (self.total_steps as u64 - 1) * self.schedule.dt
    }

    fn record(&mut self, time: u64, seq: u64, kind: EventKind, digest: String) -> &mut EventRecord {
        self.log.events.push(EventRecord {
            time,
            seq,
            kind,
            agent: None,
            version: None,
            stochastic: None,
            count: None,
            digest,
        });
        self.log.events.last_mut().unwrap()
    }

    fn control(&mut self, time: u64, seq: u64, agent: usize) -> Result<(), OldcError> {
        let mode = select_exploration(self.step, self.schedule);
        let action = self.executors[agent].act(&self.obs[agent], mode, &mut self.explore)?;
        let version = self.executors[agent].version();
        let rec = self.record(time, seq, EventKind::Control, hash_f64s(&action));
        rec.agent = Some(agent);
        rec.version = Some(version);
        rec.stochastic = Some(mode == Exploration::Stochastic);
        self.pending[agent] = Some(action);
        if self.pending.iter().all(Option::is_some) {
            self.advance(time, mode)?;
        }
        Ok(())
    }

    fn transition(&self, actions: &[Vec<f64>], fb: &StepFeedback) -> Transition {
        Transition {
            x: self.obs.concat(),
            a: actions.concat(),
            r: fb.rewards.clone(),
            r_c: fb.costs.clone(),
            x_next: fb.observations.concat(),
            done: false,
        }
    }

    /// Applies the joint action once every executor has acted.
    fn advance(&mut self, time: u64, mode: Exploration) -> Result<(), OldcError> {
        let actions: Vec<Vec<f64>> = self.pending.iter_mut().map(|a| a.take().unwrap()).collect();
        let stochastic = mode == Exploration::Stochastic;
        let fb = if stochastic && self.opts.shadow_exploration {
            let mut copy = self.env.clone();
            let explored = copy.step(&actions)?;
            let tr = self.transition(&actions, &explored);
            self.window.push(tr);
            let modes = (0..self.executors.len())
                .map(|i| {
                    self.executors[i].act(&self.obs[i], Exploration::Deterministic, &mut self.explore)
                })
                .collect::<Result<Vec<_>, _>>()?;
            self.env.step(&modes)?
        } else {
            let fb = self.env.step(&actions)?;
            if stochastic {
                let tr = self.transition(&actions, &fb);
                self.window.push(tr);
            }
            fb
        };
        self.log.steps.push(StepRecord {
            step: self.step,
            episode: self.episode,
            t: self.t_in_episode,
            time,
            loss_mw: fb.loss_mw,
            vvr: fb.vvr,
            reward: fb.rewards.iter().sum::<f64>() / fb.rewards.len() as f64,
            stochastic,
        });
        self.step += 1;
        self.t_in_episode += 1;
        self.obs = fb.observations;
        if self.step < self.total_steps {
            if fb.done {
                self.episode += 1;
                self.t_in_episode = 0;
                self.obs = self
                    .env
                    .reset_episode(self.opts.first_episode + self.episode as u64)?;
            }
            let next = self.step as u64 * self.schedule.dt;
            for agent in 0..self.executors.len() {
                self.queue.push(next, Event::ControlTick { agent });
            }
        }
        Ok(())
    }

    fn upload(&mut self, time: u64, seq: u64) {
        let batch = std::mem::take(&mut self.window);
        let mut digests = Vec::new();
        let count = batch.len();
        for tr in batch {
            self.log.uploaded += 1;
            if self.drops.gen::<f64>() < self.schedule.drop_prob {
                self.log.dropped += 1;
                continue;
            }
            digests.push(hash_transition(&tr));
            self.queue
                .push(time + self.schedule.comm_delay, Event::SampleArrival(Box::new(tr)));
        }
        let mut h = Sha256::new();
        for d in &digests {
            h.update(d.as_bytes());
        }
        self.record(time, seq, EventKind::Upload, format!("{:x}", h.finalize()))
            .count = Some(count);
        let next = time + self.schedule.t_s;
        if next <= self.last_control_time() {
            self.queue.push(next, Event::UploadTick);
        }
    }

    fn train(&mut self, time: u64, seq: u64) -> Result<(), OldcError> {
        let metrics = self.learner.train_step(&self.buffer)?;
        let digest = match &metrics {
            Some(m) => {
                self.learner_version += 1;
                for agent in 0..self.executors.len() {
                    let snap = ship_policy(&*self.learner, agent, self.learner_version);
                    self.queue.push(
                        time + self.schedule.comm_delay,
                        Event::PolicyArrival(Box::new(snap)),
                    );
                }
                self.log.train.push(TrainRecord {
                    time,
                    version: self.learner_version,
                    agents: m.agents.clone(),
                });
                let values: Vec<f64> = m
                    .agents
                    .iter()
                    .flat_map(|a| [a.critic_loss, a.cost_loss, a.actor_loss, a.entropy, a.lambda])
                    .collect();
                hash_f64s(&values)
            }
            None => hash_f64s(&[]),
        };
        let (version, len) = (self.learner_version, self.buffer.len());
        let rec = self.record(time, seq, EventKind::Train, digest);
        rec.version = Some(version);
        rec.count = Some(len);
        let next = time + self.schedule.t_u;
        if next <= self.last_control_time() {
            self.queue.push(next, Event::TrainTick);
        }
        Ok(())
    }

    fn run(mut self) -> Result<RunLog, OldcError> {
        let dt = self.schedule.dt;
        for agent in 0..self.executors.len() {
            self.queue.push(0, Event::ControlTick { agent });
        }
        let first_upload = self.schedule.t_s - dt;
        let first_train = self.schedule.t_u - dt;
        if first_upload <= self.last_control_time() {
            self.queue.push(first_upload, Event::UploadTick);
        }
        if first_train <= self.last_control_time() {
            self.queue.push(first_train, Event::TrainTick);
        }
        while let Some((time, seq, event)) = self.queue.pop() {
            match event {
                Event::ControlTick { agent } => self.control(time, seq, agent)?,
                Event::UploadTick => self.upload(time, seq),
                Event::TrainTick => self.train(time, seq)?,
                Event::SampleArrival(tr) => {
                    let digest = hash_transition(&tr);
                    self.buffer.push(*tr);
                    let len = self.buffer.len();
                    self.record(time, seq, EventKind::SampleArrival, digest).count = Some(len);
                }
                Event::PolicyArrival(snap) => {
                    let digest = hash_snapshot(&snap);
                    let (agent, version) = (snap.agent, snap.version);
                    self.executors[agent].receive(*snap);
                    let rec = self.record(time, seq, EventKind::PolicyArrival, digest);
                    rec.agent = Some(agent);
                    rec.version = Some(version);
                }
            }
        }
        self.log.executor_versions = self.executors.iter().map(Executor::version).collect();
        self.log.learner_version = self.learner_version;
        self.log.buffer = self.buffer;
        Ok(self.log)
    }
}

/// Simulates `opts.episodes` episodes of online learning under
/// `schedule`. Deterministic in `(schedule, env, learner, opts)`.
pub fn run<E: MultiAgentEnv, L: Learner + ?Sized>(
    schedule: &OldcSchedule,
    env: &mut E,
    learner: &mut L,
    opts: &RunOptions,
) -> Result<RunLog, OldcError> {
    schedule.validate()?;
    let layout = learner.layout();
    let obs_dims: Vec<usize> = (0..layout.n_agents()).map(|i| layout.obs_dim(i)).collect();
    let act_dims: Vec<usize> = (0..layout.n_agents()).map(|i| layout.act_dim(i)).collect();
    if obs_dims != env.obs_dims() || act_dims != env.act_dims() {
        return Err(OldcError::Dimension(format!(
            "learner expects observations {obs_dims:?} and actions {act_dims:?}, environment has {:?} and {:?}",
            env.obs_dims(),
            env.act_dims()
        )));
    }
    let total_steps = opts.episodes * env.horizon();
    if total_steps == 0 {
        return Err(OldcError::Schedule("run has no control steps".into()));
    }
    let n = obs_dims.len();
    let executors = (0..n)
        .map(|i| Executor {
            snapshot: ship_policy(&*learner, i, 0),
        })
        .collect();
    let obs = env.reset_episode(opts.first_episode)?;
    let sim = Sim {
        schedule,
        opts,
        env,
        learner,
        queue: EventQueue::new(),
        executors,
        buffer: ReplayBuffer::new(opts.buffer_capacity),
        explore: rng(opts.seed, streams::EXPLORATION),
        drops: rng(opts.seed, streams::DROPS),
        obs,
        pending: vec![None; n],
        window: Vec::new(),
        step: 0,
        episode: 0,
        t_in_episode: 0,
        total_steps,
        learner_version: 0,
        log: RunLog {
            events: Vec::new(),
            steps: Vec::new(),
            train: Vec::new(),
            uploaded: 0,
            dropped: 0,
            buffer: ReplayBuffer::new(1),
            executor_versions: Vec::new(),
            learner_version: 0,
        },
    };
    sim.run()
}

#[cfg(test)]
mod tests;
