//! Two agents share a budget on the sum of their squared actions. The
//! multiplier pushes the learned policy back inside the budget; with the
//! multiplier frozen at zero it settles on the unconstrained targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vvc::env::toy::ToyCmg;
use vvc::env::MultiAgentEnv;
use vvc::macsac::{Learner, Macsac, MacsacConfig};
use vvc::oldc::{self, OldcSchedule, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for freeze in [false, true] {
        let mut env = ToyCmg::new(vec![0.6, 0.6], 0.8, 10);
        let cfg = MacsacConfig {
            gamma: 0.0,
            alpha: 0.01,
            hidden: vec![32, 32],
            batch_size: 64,
            lr: 3e-3,
            lambda_lr: 0.05,
            cost_bound: 0.05,
            freeze_lambda: freeze,
            ..Default::default()
        };
        let mut m = Macsac::new(&env.obs_dims(), &env.act_dims(), cfg, 0);
        let log = oldc::run(&OldcSchedule::synchronous(), &mut env, &mut m, &RunOptions { episodes: 100, ..Default::default() })?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..2).map(|i| m.actor(i).act(&[1.0], false, &mut rng).unwrap()[0]).collect();
        let lambda = log.train.last().map_or(0.0, |t| t.agents[0].lambda);
        println!(
            "frozen multiplier {freeze}: actions {a:.3?}, cost {:.3}, lambda {lambda:.3}",
            env.cost(&a)
        );
    }
    Ok(())
}
