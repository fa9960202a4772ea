//! The Volt-VAR constrained Markov game: control areas, local
//! observations, normalized device actions, loss reward and voltage cost.

mod case;
mod profile;
pub mod toy;
mod vvc;

use thiserror::Error;

use crate::grid::{GridError, PowerFlowSolution};

pub use case::{ieee33_case, AreaPartition, DeviceKind, DeviceSpec, FeederCase};
pub use profile::{Profile, ProfileConfig, DEFAULT_EPISODE_STEPS};
pub use vvc::{
    ActionVector, EnvConfig, EnvState, Observation, ProfileSource, Reset, StepOutcome, VvcEnv,
    VOLTAGE_FEATURE_SCALE,
};

/// Default voltage band, p.u.
pub const DEFAULT_V_LIMITS: (f64, f64) = (0.95, 1.05);
/// Default cooperative index of every agent.
pub const DEFAULT_BETA: f64 = 1.0;
/// Default discount factor.
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("power flow diverged at step {t}: {detail}")]
    Diverged { t: usize, detail: String },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("invalid profile: {0}")]
    Profile(String),
    #[error("episode is finished or was never reset")]
    Finished,
}

/// What every learner and the online scheduler see of an environment:
/// flat per-agent feature vectors, per-agent rewards and costs.
pub trait MultiAgentEnv: Clone {
    fn n_agents(&self) -> usize;
    fn obs_dims(&self) -> Vec<usize>;
    fn act_dims(&self) -> Vec<usize>;
    /// Steps per episode.
    fn horizon(&self) -> usize;
    fn reset_episode(&mut self, episode: u64) -> Result<Vec<Vec<f64>>, EnvError>;
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<StepFeedback, EnvError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFeedback {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    /// Cost seen by a single centralized agent controlling everything.
    pub global_cost: f64,
    pub done: bool,
    pub loss_mw: f64,
    pub vvr: f64,
}

/// Shared reward: negative total active loss in MW.
pub fn reward_power(sol: &PowerFlowSolution) -> Result<f64, EnvError> {
    if !sol.converged {
        return Err(GridError::Unconverged.into());
    }
    Ok(-sol.p_loss_total)
}

/// Voltage violation rate: summed squared excursions outside the band.
pub fn vvr(nodes: &[usize], v_mag: &[f64], limits: (f64, f64)) -> f64 {
    let (lo, hi) = limits;
    nodes
        .iter()
        .map(|&j| {
            let over = (v_mag[j] - hi).max(0.0);
            let under = (lo - v_mag[j]).max(0.0);
            over * over + under * under
        })
        .sum()
}

/// Agent cost: local violation rate plus `beta` times the network-wide one.
pub fn cost(
    areas: &AreaPartition,
    agent: usize,
    beta: f64,
    v_mag: &[f64],
    limits: (f64, f64),
) -> f64 {
    let all: Vec<usize> = (0..v_mag.len()).collect();
    vvr(areas.nodes(agent), v_mag, limits) + beta * vvr(&all, v_mag, limits)
}

/// Active and reactive flows leaving `area` over each boundary branch.
pub fn outlet_powers(
    areas: &AreaPartition,
    area: usize,
    sol: &PowerFlowSolution,
) -> (Vec<f64>, Vec<f64>) {
    areas
        .boundary(area)
        .iter()
        .map(|&(k, from_end)| {
            if from_end {
                (sol.branch_p[k], sol.branch_q[k])
            } else {
                (sol.branch_p_rev[k], sol.branch_q_rev[k])
            }
        })
        .unzip()
}

#[cfg(test)]
mod tests;
