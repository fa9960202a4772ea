//! Comparison methods: MADDPG with a fixed voltage penalty, centralized
//! constrained SAC, and model-based Volt-VAR optimization with exact
//! (VVO) or perturbed (AVVO) network models.

mod csac;
mod maddpg;
mod vvo;

use rand::Rng;

use crate::grid::{GridError, NetworkModel, PowerFlowSolver};
use crate::seed::{rng, streams};

pub use csac::{csac, Centralized};
pub use maddpg::{DdpgAgent, Maddpg, MaddpgConfig};
pub use vvo::{evaluate_setpoints, vvo_solve, OracleResult, VvoOptions, VvoProblem};

/// Copy of `net` with each branch admittance scaled by an independent
/// factor drawn uniformly from `[1 - sigma, 1 + sigma]`.
pub fn perturb_network(net: &NetworkModel, sigma: f64, seed: u64) -> Result<NetworkModel, GridError> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(GridError::InvalidInput(format!(
            "perturbation {sigma} outside [0, 1)"
        )));
    }
    let mut r = rng(seed, streams::PERTURBATION);
    let factors: Vec<f64> = net
        .branches()
        .iter()
        .map(|_| {
            if sigma == 0.0 {
                1.0
            } else {
                1.0 + r.gen_range(-sigma..sigma)
            }
        })
        .collect();
    net.with_scaled_admittances(&factors)
}

/// Optimizes on an approximate model, then scores the chosen setpoints
/// on the true one.
pub fn avvo_solve(
    true_solver: &PowerFlowSolver,
    model_solver: &PowerFlowSolver,
    problem: &VvoProblem,
    opt: &VvoOptions,
) -> OracleResult {
    let planned = vvo_solve(model_solver, problem, opt);
    let mut out = evaluate_setpoints(true_solver, problem, planned.setpoints);
    out.iterations = planned.iterations;
    out.converged &= planned.converged;
    out
}

/// The current step of `env` as an optimization problem.
pub fn step_problem(env: &crate::env::VvcEnv) -> VvoProblem<'_> {
    let case = env.case();
    let t = env.t();
    VvoProblem {
        base: env.injections(env.profile(), t, &vec![0.0; case.devices.len()]),
        devices: &case.devices,
        p_gen: env.profile().pv_avail[t].clone(),
    }
}

/// Regroups per-device setpoints into per-agent action vectors.
pub fn agent_actions(env: &crate::env::VvcEnv, setpoints: &[f64]) -> Vec<Vec<f64>> {
    (0..env.case().n_agents())
        .map(|a| env.agent_devices(a).iter().map(|&d| setpoints[d]).collect())
        .collect()
}

/// Runs one episode of `env` with per-step oracle setpoints. With a
/// `model` solver the setpoints are planned on that (approximate) model
/// and applied to the true system.
pub fn oracle_episode(
    env: &mut crate::env::VvcEnv,
    episode: u64,
    model: Option<&PowerFlowSolver>,
    opt: &VvoOptions,
) -> Result<Vec<OracleResult>, crate::env::EnvError> {
    use crate::env::MultiAgentEnv;
    env.reset_episode(episode)?;
    let mut out = Vec::with_capacity(env.horizon());
    loop {
        let problem = step_problem(env);
        let res = match model {
            Some(m) => avvo_solve(env.solver(), m, &problem, opt),
            None => vvo_solve(env.solver(), &problem, opt),
        };
        let actions = agent_actions(env, &res.setpoints);
        let fb = MultiAgentEnv::step(env, &actions)?;
        out.push(res);
        if fb.done {
            return Ok(out);
        }
    }
}

#[cfg(test)]
mod tests;
