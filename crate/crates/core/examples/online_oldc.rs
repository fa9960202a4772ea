//! Online distributed learning with delayed, lossy uploads. Prints how
//! stale the executors' policies were when they acted.

use vvc::env::MultiAgentEnv;
use vvc::experiment::{build_env, ExperimentConfig};
use vvc::macsac::{Macsac, MacsacConfig};
use vvc::oldc::{self, EventKind, OldcSchedule, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::default();
    cfg.profile.synthetic.steps = 48;
    let mut env = build_env(&cfg)?;
    let mut learner = Macsac::new(
        &env.obs_dims(),
        &env.act_dims(),
        MacsacConfig { hidden: vec![32, 32], batch_size: 8, cost_scale: 100.0, ..Default::default() },
        0,
    );
    let schedule = OldcSchedule { comm_delay: 3, drop_prob: 0.2, ..OldcSchedule::periodic(8, 4) };
    let log = oldc::run(&schedule, &mut env, &mut learner, &RunOptions { episodes: 4, ..Default::default() })?;

    let stochastic = log.steps.iter().filter(|s| s.stochastic).count();
    println!("{} control steps, {stochastic} of them exploratory", log.steps.len());
    println!("{} samples uploaded, {} dropped, buffer holds {}", log.uploaded, log.dropped, log.buffer.len());
    println!("learner at version {}, executors at {:?}", log.learner_version, log.executor_versions);
    let lag: Vec<u64> = log
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Control)
        .filter_map(|e| e.version)
        .collect();
    let trains = log.events.iter().filter(|e| e.kind == EventKind::Train).count();
    println!("{trains} training ticks; last control versions {:?}", &lag[lag.len().saturating_sub(24)..]);
    Ok(())
}
