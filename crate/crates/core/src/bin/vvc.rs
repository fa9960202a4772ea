use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vvc::baselines::VvoOptions;
use vvc::experiment::{
    compare, emit_plot_data, oracle_at, plot_data_csv, read_steps_csv, run_experiment,
    ExperimentConfig, ExperimentError, RunSummary, OUTPUT_ROOT_VAR,
};

#[derive(Parser)]
#[command(name = "vvc", version, about = "Volt-VAR control experiments")]
#[command(after_help = "Set VVC_OUTPUT_ROOT to override the output root of every run.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config.
    Run { config: PathBuf },
    /// Tabulate final-episode results of several runs.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Print CSV instead of a text table.
        #[arg(long)]
        csv: bool,
    },
    /// Per-step mean/min/max across steps.csv logs, as CSV.
    Plotdata {
        #[arg(required = true)]
        runlogs: Vec<PathBuf>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Solve the per-step oracle on a network.
    Oracle { network: String, step: usize },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vvc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), ExperimentError> {
    match cmd {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&cfg)?;
            for f in &summary.failures {
                eprintln!("seed {} failed: {}", f.seed, f.error);
            }
            println!("{}", cfg.output_dir().join("summary.json").display());
        }
        Command::Compare { summaries, csv } => {
            let loaded = summaries
                .iter()
                .map(|p| RunSummary::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let table = compare(&loaded)?;
            if csv {
                print!("{}", table.to_csv()?);
            } else {
                print!("{}", table.to_text());
            }
        }
        Command::Plotdata { runlogs } => {
            let logs = runlogs
                .iter()
                .map(|p| read_steps_csv(p))
                .collect::<Result<Vec<_>, _>>()?;
            print!("{}", plot_data_csv(&emit_plot_data(&logs)?)?);
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = std::env::var(OUTPUT_ROOT_VAR).ok();
            println!(
                "ok: {} ({}, {} episodes, {} seeds){}",
                cfg.name,
                cfg.algorithm.name(),
                cfg.episodes,
                cfg.seeds.len(),
                root.map(|r| format!(", output root {r}")).unwrap_or_default()
            );
        }
        Command::Oracle { network, step } => {
            let res = oracle_at(&network, step, &VvoOptions::default())?;
            println!("{}", serde_json::to_string_pretty(&res).expect("result serializes"));
        }
    }
    Ok(())
}
