//! Runs every method briefly on a short profile and prints the
//! comparison table. Artifacts go under the system temp directory.

use vvc::experiment::{compare, run_experiment, Algorithm, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("vvc-compare-example");
    let mut summaries = Vec::new();
    for algorithm in [Algorithm::Macsac, Algorithm::Maddpg, Algorithm::Csac, Algorithm::Vvo, Algorithm::Avvo] {
        let mut cfg = ExperimentConfig {
            name: algorithm.name().to_string(),
            algorithm,
            episodes: 3,
            seeds: vec![0, 1],
            output_root: root.clone(),
            ..ExperimentConfig::default()
        };
        cfg.profile.synthetic.steps = 24;
        cfg.macsac.hidden = vec![32, 32];
        cfg.macsac.batch_size = 16;
        cfg.macsac.cost_scale = 100.0;
        cfg.maddpg.hidden = vec![32, 32];
        cfg.maddpg.batch_size = 16;
        summaries.push(run_experiment(&cfg)?);
    }
    print!("{}", compare(&summaries)?.to_text());
    println!("artifacts in {}", root.display());
    Ok(())
}
