use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    cost, outlet_powers, reward_power, vvr, DeviceKind, EnvError, FeederCase, MultiAgentEnv,
    Profile, ProfileConfig, StepFeedback,
};
use crate::grid::{Injections, PowerFlowSolution, PowerFlowSolver};
use crate::seed::mix_seed;

/// Scale applied to voltage magnitudes in observation features:
/// `(V - 1) * VOLTAGE_FEATURE_SCALE`, so the `[0.95, 1.05]` band maps to
/// `[-1, 1]`.
pub const VOLTAGE_FEATURE_SCALE: f64 = 20.0;

/// Global network state after a power-flow solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub v_mag: Vec<f64>,
    pub t: usize,
}

/// Local measurements of one control area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub p_area: Vec<f64>,
    pub q_area: Vec<f64>,
    pub v_area: Vec<f64>,
    pub p_outlet: Vec<f64>,
    pub q_outlet: Vec<f64>,
}

impl Observation {
    pub fn dim(&self) -> usize {
        self.p_area.len() * 3 + self.p_outlet.len() * 2
    }

    /// Flat network input: injections and outlet flows in p.u., voltages
    /// as scaled deviations from 1.0.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.dim());
        f.extend_from_slice(&self.p_area);
        f.extend_from_slice(&self.q_area);
        f.extend(self.v_area.iter().map(|v| (v - 1.0) * VOLTAGE_FEATURE_SCALE));
        f.extend_from_slice(&self.p_outlet);
        f.extend_from_slice(&self.q_outlet);
        f
    }
}

/// Normalized setpoints for one agent's devices, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct Reset {
    pub observations: Vec<Observation>,
    pub state: EnvState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub state: EnvState,
    pub done: bool,
    /// Total active loss of the controlled step, MW.
    pub loss_mw: f64,
    /// Network-wide voltage violation rate of the controlled step.
    pub vvr: f64,
    /// Applied device reactive outputs, p.u.
    pub device_q: Vec<f64>,
}

/// Where episode profiles come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    /// Fresh synthetic day per episode, seeded by `(seed, episode)`.
    Synthetic { config: ProfileConfig, seed: u64 },
    /// A fixed list cycled through by episode index.
    Fixed(Vec<Profile>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Cooperative index per agent.
    pub betas: Vec<f64>,
    pub profiles: ProfileSource,
}

impl EnvConfig {
    pub fn synthetic(n_agents: usize, config: ProfileConfig, seed: u64) -> Self {
        EnvConfig {
            betas: vec![1.0; n_agents],
            profiles: ProfileSource::Synthetic { config, seed },
        }
    }
}

/// The Volt-VAR constrained Markov game on a feeder.
///
/// Each step applies the agents' setpoints to the current loads, solves
/// the power flow to score reward and cost, then advances the profile and
/// solves again (devices holding their setpoints) to produce the next
/// observations.
#[derive(Debug, Clone)]
pub struct VvcEnv {
    case: Arc<FeederCase>,
    solver: Arc<PowerFlowSolver>,
    config: EnvConfig,
    agent_devices: Vec<Vec<usize>>,
    profile: Profile,
    t: usize,
    device_q: Vec<f64>,
    current: Option<PowerFlowSolution>,
}

impl VvcEnv {
    pub fn new(case: FeederCase, config: EnvConfig) -> Result<Self, EnvError> {
        if config.betas.len() != case.n_agents() {
            return Err(EnvError::InvalidCase(format!(
                "{} cooperative indices for {} agents",
                config.betas.len(),
                case.n_agents()
            )));
        }
        if let ProfileSource::Fixed(list) = &config.profiles {
            if list.is_empty() {
                return Err(EnvError::Profile("empty profile list".into()));
            }
            for p in list {
                p.validate(&case)?;
            }
        }
        let agent_devices = (0..case.n_agents()).map(|a| case.agent_devices(a)).collect();
        let solver = Arc::new(PowerFlowSolver::new(case.network.clone()));
        let n_dev = case.devices.len();
        Ok(VvcEnv {
            case: Arc::new(case),
            solver,
            config,
            agent_devices,
            profile: Profile {
                load_mult: Vec::new(),
                pv_avail: Vec::new(),
            },
            t: 0,
            device_q: vec![0.0; n_dev],
            current: None,
        })
    }

    pub fn case(&self) -> &FeederCase {
        &self.case
    }

    pub fn solver(&self) -> &PowerFlowSolver {
        &self.solver
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn betas(&self) -> &[f64] {
        &self.config.betas
    }

    pub fn device_q(&self) -> &[f64] {
        &self.device_q
    }

    pub fn agent_devices(&self, agent: usize) -> &[usize] {
        &self.agent_devices[agent]
    }

    /// Profile for an episode index under the configured source.
    pub fn episode_profile(&self, episode: u64) -> Profile {
        match &self.config.profiles {
            ProfileSource::Synthetic { config, seed } => {
                Profile::synthetic(&self.case, config, mix_seed(*seed, episode))
            }
            ProfileSource::Fixed(list) => list[(episode % list.len() as u64) as usize].clone(),
        }
    }

    /// Net bus injections at profile step `t` with the given device
    /// reactive outputs.
    pub fn injections(&self, profile: &Profile, t: usize, device_q: &[f64]) -> Injections {
        let net = &self.case.network;
        let mut inj = Injections::zeros(net.n_buses());
        for (bus, &m) in net.buses().iter().zip(&profile.load_mult[t]) {
            inj.p[bus.id] = -bus.p_load * m;
            inj.q[bus.id] = -bus.q_load * m;
        }
        for (d, dev) in self.case.devices.iter().enumerate() {
            if dev.kind == DeviceKind::Inverter {
                inj.p[dev.node] += profile.pv_avail[t][d];
            }
            inj.q[dev.node] += device_q[d];
        }
        inj
    }

    /// Maps normalized per-device actions at step `t` to reactive outputs.
    pub fn map_actions(&self, profile: &Profile, t: usize, normalized: &[f64]) -> Vec<f64> {
        self.case
            .devices
            .iter()
            .enumerate()
            .map(|(d, dev)| dev.map_action(normalized[d], profile.pv_avail[t][d]))
            .collect()
    }

    /// Solves the network at step `t` of `profile` for given device outputs.
    pub fn solve_at(
        &self,
        profile: &Profile,
        t: usize,
        device_q: &[f64],
        warm: Option<&PowerFlowSolution>,
    ) -> Result<PowerFlowSolution, EnvError> {
        let inj = self.injections(profile, t, device_q);
        let sol = self.solver.solve(&inj, warm)?;
        if !sol.converged {
            return Err(EnvError::Diverged {
                t,
                detail: sol.diagnostic.clone().unwrap_or_default(),
            });
        }
        Ok(sol)
    }

    pub fn reset(&mut self, profile: Profile) -> Result<Reset, EnvError> {
        profile.validate(&self.case)?;
        if profile.is_empty() {
            return Err(EnvError::Profile("profile has no steps".into()));
        }
        self.profile = profile;
        self.t = 0;
        self.device_q = vec![0.0; self.case.devices.len()];
        let sol = self.solve_at(&self.profile, 0, &self.device_q, None)?;
        self.current = Some(sol);
        Ok(Reset {
            observations: self.observations(),
            state: self.state(),
        })
    }

    fn current(&self) -> &PowerFlowSolution {
        self.current.as_ref().expect("environment was reset")
    }

    pub fn solution(&self) -> Option<&PowerFlowSolution> {
        self.current.as_ref()
    }

    pub fn observation(&self, agent: usize) -> Observation {
        let sol = self.current();
        let nodes = self.case.areas.nodes(agent);
        let (p_outlet, q_outlet) = outlet_powers(&self.case.areas, agent, sol);
        Observation {
            p_area: nodes.iter().map(|&j| sol.p_inj[j]).collect(),
            q_area: nodes.iter().map(|&j| sol.q_inj[j]).collect(),
            v_area: nodes.iter().map(|&j| sol.v_mag[j]).collect(),
            p_outlet,
            q_outlet,
        }
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.case.n_agents()).map(|a| self.observation(a)).collect()
    }

    pub fn state(&self) -> EnvState {
        let sol = self.current();
        EnvState {
            p_inj: sol.p_inj.clone(),
            q_inj: sol.q_inj.clone(),
            v_mag: sol.v_mag.clone(),
            t: self.t,
        }
    }

    /// Per-device normalized action vector assembled from per-agent actions.
    fn device_actions(&self, actions: &[ActionVector]) -> Result<Vec<f64>, EnvError> {
        if actions.len() != self.case.n_agents() {
            return Err(EnvError::InvalidAction(format!(
                "{} action vectors for {} agents",
                actions.len(),
                self.case.n_agents()
            )));
        }
        let mut normalized = vec![0.0; self.case.devices.len()];
        for (agent, act) in actions.iter().enumerate() {
            let devs = &self.agent_devices[agent];
            if act.0.len() != devs.len() {
                return Err(EnvError::InvalidAction(format!(
                    "agent {agent} sent {} setpoints for {} devices",
                    act.0.len(),
                    devs.len()
                )));
            }
            for (&d, &a) in devs.iter().zip(&act.0) {
                if !a.is_finite() {
                    return Err(EnvError::InvalidAction(format!(
                        "agent {agent} sent a non-finite setpoint"
                    )));
                }
                normalized[d] = a;
            }
        }
        Ok(normalized)
    }

    pub fn step(&mut self, actions: &[ActionVector]) -> Result<StepOutcome, EnvError> {
        if self.current.is_none() || self.t >= self.profile.len() {
            return Err(EnvError::Finished);
        }
        let normalized = self.device_actions(actions)?;
        let t = self.t;
        let device_q = self.map_actions(&self.profile, t, &normalized);
        let sol = self.solve_at(&self.profile, t, &device_q, self.current.as_ref())?;
        let limits = self.case.network.v_limits();
        let reward = reward_power(&sol)?;
        let n_agents = self.case.n_agents();
        let costs = (0..n_agents)
            .map(|a| cost(&self.case.areas, a, self.config.betas[a], &sol.v_mag, limits))
            .collect();
        let all: Vec<usize> = (0..self.case.network.n_buses()).collect();
        let total_vvr = vvr(&all, &sol.v_mag, limits);
        let loss_mw = sol.p_loss_total;

        self.device_q = device_q;
        self.t += 1;
        let done = self.t >= self.profile.len();
        if done {
            self.current = Some(sol);
        } else {
            // Devices hold their setpoints; inverter ranges move with PV.
            let held: Vec<f64> = self
                .case
                .devices
                .iter()
                .enumerate()
                .map(|(d, dev)| {
                    let (lo, hi) = dev.reactive_range(self.profile.pv_avail[self.t][d]);
                    self.device_q[d].clamp(lo, hi)
                })
                .collect();
            self.device_q = held;
            let next = self.solve_at(&self.profile, self.t, &self.device_q, Some(&sol))?;
            self.current = Some(next);
        }
        Ok(StepOutcome {
            observations: self.observations(),
            rewards: vec![reward; n_agents],
            costs,
            state: self.state(),
            done,
            loss_mw,
            vvr: total_vvr,
            device_q: self.device_q.clone(),
        })
    }

    fn global_cost(&self, total_vvr: f64) -> f64 {
        let betas = &self.config.betas;
        let mean_beta = betas.iter().sum::<f64>() / betas.len() as f64;
        (1.0 + mean_beta) * total_vvr
    }
}

impl MultiAgentEnv for VvcEnv {
    fn n_agents(&self) -> usize {
        self.case.n_agents()
    }

    fn obs_dims(&self) -> Vec<usize> {
        (0..self.case.n_agents())
            .map(|a| {
                let nodes = self.case.areas.nodes(a).len();
                nodes * 3 + self.case.areas.boundary(a).len() * 2
            })
            .collect()
    }

    fn act_dims(&self) -> Vec<usize> {
        self.agent_devices.iter().map(Vec::len).collect()
    }

    fn horizon(&self) -> usize {
        match &self.config.profiles {
            ProfileSource::Synthetic { config, .. } => config.steps,
            ProfileSource::Fixed(list) => list[0].len(),
        }
    }

    fn reset_episode(&mut self, episode: u64) -> Result<Vec<Vec<f64>>, EnvError> {
        let profile = self.episode_profile(episode);
        let reset = self.reset(profile)?;
        Ok(reset.observations.iter().map(Observation::features).collect())
    }

    fn step(&mut self, actions: &[Vec<f64>]) -> Result<StepFeedback, EnvError> {
        let acts: Vec<ActionVector> = actions.iter().cloned().map(ActionVector).collect();
        let out = VvcEnv::step(self, &acts)?;
        Ok(StepFeedback {
            observations: out.observations.iter().map(Observation::features).collect(),
            global_cost: self.global_cost(out.vvr),
            rewards: out.rewards,
            costs: out.costs,
            done: out.done,
            loss_mw: out.loss_mw,
            vvr: out.vvr,
        })
    }
}
