//! Rolls one episode of the Volt-VAR environment with every device idle
//! and prints what each control step costs.

use vvc::env::MultiAgentEnv;
use vvc::experiment::{build_env, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.profile.synthetic.steps = 24;
    let mut env = build_env(&cfg)?;
    println!("observation dims {:?}, action dims {:?}", env.obs_dims(), env.act_dims());
    env.reset_episode(0)?;
    let idle: Vec<Vec<f64>> = env.act_dims().iter().map(|&d| vec![0.0; d]).collect();
    loop {
        let fb = MultiAgentEnv::step(&mut env, &idle)?;
        println!("loss {:.4} MW  vvr {:.2e}  costs {:?}", fb.loss_mw, fb.vvr, fb.costs);
        if fb.done {
            break;
        }
    }
    Ok(())
}
