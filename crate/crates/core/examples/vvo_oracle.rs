//! Optimal setpoints at one step of the feeder, then the same plan made
//! on a network model with 20% admittance errors.

use vvc::baselines::{avvo_solve, perturb_network, step_problem, vvo_solve, VvoOptions};
use vvc::env::MultiAgentEnv;
use vvc::experiment::{build_env, ExperimentConfig};
use vvc::grid::PowerFlowSolver;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let step = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(48);
    let mut env = build_env(&ExperimentConfig::default())?;
    env.reset_episode(0)?;
    let idle: Vec<Vec<f64>> = env.act_dims().iter().map(|&d| vec![0.0; d]).collect();
    for _ in 0..step {
        MultiAgentEnv::step(&mut env, &idle)?;
    }
    let problem = step_problem(&env);
    let opt = VvoOptions::default();
    let exact = vvo_solve(env.solver(), &problem, &opt);
    println!("vvo   loss {:.5} MW  vvr {:.2e}  setpoints {:.3?}", exact.loss_mw, exact.vvr, exact.setpoints);
    for seed in 0..3 {
        let model = PowerFlowSolver::new(perturb_network(env.solver().network(), 0.2, seed)?);
        let approx = avvo_solve(env.solver(), &model, &problem, &opt);
        println!("avvo  loss {:.5} MW  vvr {:.2e}  (model seed {seed})", approx.loss_mw, approx.vvr);
    }
    Ok(())
}
