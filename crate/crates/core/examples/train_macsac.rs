//! Trains MACSAC in the ideal scenario on a short profile.
//!
//! `cargo run --release --example train_macsac -- 10` trains 10 episodes.

use vvc::experiment::{episode_means, run_seed, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let episodes = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let mut cfg = ExperimentConfig { episodes, ..ExperimentConfig::default() };
    cfg.profile.synthetic.steps = 24;
    cfg.macsac.hidden = vec![64, 64];
    cfg.macsac.batch_size = 32;
    cfg.macsac.cost_scale = 100.0;
    let run = run_seed(&cfg, 0)?;
    for (episode, loss, vvr) in episode_means(&run.steps) {
        println!("episode {episode:>3}  loss {loss:.4} MW  vvr {vvr:.2e}");
    }
    if let Some(last) = run.log.as_ref().and_then(|l| l.train.last()) {
        let lambdas: Vec<String> = last.agents.iter().map(|a| format!("{:.3}", a.lambda)).collect();
        println!("final multipliers [{}]", lambdas.join(", "));
    }
    Ok(())
}
