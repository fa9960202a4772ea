use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Algorithm, ExperimentConfig, ExperimentError, Scenario};
use crate::baselines::{csac, oracle_episode, perturb_network, Centralized, Maddpg};
use crate::env::{EnvConfig, MultiAgentEnv, Profile, ProfileSource, VvcEnv};
use crate::grid::PowerFlowSolver;
use crate::macsac::{Learner, Macsac};
use crate::oldc::{self, RunLog, RunOptions, StepRecord};

/// Per-episode mean and across-seed spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStat {
    pub episode: usize,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub vvr_mean: f64,
    pub vvr_std: f64,
}

/// Final-episode statistics across seeds; spreads are absent for
/// deterministic methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalStat {
    pub loss_mean: f64,
    pub loss_std: Option<f64>,
    pub vvr_mean: f64,
    pub vvr_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    /// Experimental conditions shared by comparable runs.
    pub conditions: String,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub per_episode: Vec<EpisodeStat>,
    pub final_episode: Option<FinalStat>,
    pub failures: Vec<SeedFailure>,
    pub wall_clock_s: f64,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
    }
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub log: Option<RunLog>,
    pub checkpoint: Option<String>,
}

pub fn build_env(cfg: &ExperimentConfig) -> Result<VvcEnv, ExperimentError> {
    let case = cfg.case()?;
    let n = case.n_agents();
    let betas = if cfg.beta.len() == 1 {
        vec![cfg.beta[0]; n]
    } else {
        cfg.beta.clone()
    };
    let profiles = match &cfg.profile.file {
        Some(path) => {
            let f = File::open(path)
                .map_err(|e| ExperimentError::Config(format!("profile.file: {e}")))?;
            let p = Profile::read_csv(f, &case)
                .map_err(|e| ExperimentError::Config(format!("profile.file: {e}")))?;
            ProfileSource::Fixed(vec![p])
        }
        None => ProfileSource::Synthetic {
            config: cfg.profile.synthetic,
            seed: cfg.profile.seed,
        },
    };
    VvcEnv::new(case, EnvConfig { betas, profiles })
        .map_err(|e| ExperimentError::Config(format!("network: {e}")))
}

fn learn<E: MultiAgentEnv, L: Learner>(
    cfg: &ExperimentConfig,
    seed: u64,
    env: &mut E,
    learner: &mut L,
) -> Result<SeedRun, ExperimentError> {
    let opts = RunOptions {
        episodes: cfg.episodes,
        seed,
        shadow_exploration: cfg.scenario == Scenario::Ideal,
        buffer_capacity: cfg.buffer_capacity,
        first_episode: 0,
    };
    let log = oldc::run(&cfg.schedule, env, learner, &opts)?;
    Ok(SeedRun {
        seed,
        steps: log.steps.clone(),
        checkpoint: Some(learner.checkpoint().to_json()),
        log: Some(log),
    })
}

fn oracle(cfg: &ExperimentConfig, seed: u64, env: &mut VvcEnv) -> Result<SeedRun, ExperimentError> {
    let model = match cfg.algorithm {
        Algorithm::Avvo => {
            let net = perturb_network(&env.case().network, cfg.avvo.sigma, seed)
                .map_err(|e| ExperimentError::Runtime(e.to_string()))?;
            Some(PowerFlowSolver::new(net))
        }
        _ => None,
    };
    let mut steps = Vec::new();
    let horizon = env.horizon();
    for ep in 0..cfg.episodes {
        let results = oracle_episode(env, ep as u64, model.as_ref(), &cfg.vvo)?;
        for (t, r) in results.iter().enumerate() {
            let step = ep * horizon + t;
            steps.push(StepRecord {
                step,
                episode: ep,
                t,
                time: step as u64 * cfg.schedule.dt,
                loss_mw: r.loss_mw,
                vvr: r.vvr,
                reward: -r.loss_mw,
                stochastic: false,
            });
        }
    }
    Ok(SeedRun {
        seed,
        steps,
        log: None,
        checkpoint: None,
    })
}

/// Runs one seed of the configured method without writing anything.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, ExperimentError> {
    let mut env = build_env(cfg)?;
    let (obs, act) = (env.obs_dims(), env.act_dims());
    match cfg.algorithm {
        Algorithm::Macsac => {
            let mut l = Macsac::new(&obs, &act, cfg.macsac.clone(), seed);
            learn(cfg, seed, &mut env, &mut l)
        }
        Algorithm::Maddpg => {
            let mut l = Maddpg::new(&obs, &act, cfg.maddpg.clone(), seed);
            learn(cfg, seed, &mut env, &mut l)
        }
        Algorithm::Csac => {
            let mut l = csac(&obs, &act, cfg.macsac.clone(), seed);
            let mut central = Centralized::new(env);
            learn(cfg, seed, &mut central, &mut l)
        }
        Algorithm::Vvo | Algorithm::Avvo => oracle(cfg, seed, &mut env),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

pub fn write_steps_csv(path: &Path, steps: &[StepRecord]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for s in steps {
        w.serialize(s).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_steps_csv(path: &Path) -> Result<Vec<StepRecord>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<StepRecord>, _>>()
        .map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EpisodeRow {
    episode: usize,
    loss_mean: f64,
    vvr_mean: f64,
    steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainRow {
    time: u64,
    version: u64,
    agent: usize,
    critic_loss: f64,
    cost_loss: f64,
    actor_loss: f64,
    entropy: f64,
    lambda: f64,
}

/// Per-episode means of one seed's steps.
pub fn episode_means(steps: &[StepRecord]) -> Vec<(usize, f64, f64)> {
    let n_ep = steps.iter().map(|s| s.episode + 1).max().unwrap_or(0);
    (0..n_ep)
        .filter_map(|e| {
            let ep: Vec<&StepRecord> = steps.iter().filter(|s| s.episode == e).collect();
            if ep.is_empty() {
                return None;
            }
            let n = ep.len() as f64;
            Some((
                e,
                ep.iter().map(|s| s.loss_mw).sum::<f64>() / n,
                ep.iter().map(|s| s.vvr).sum::<f64>() / n,
            ))
        })
        .collect()
}

/// Writes a seed's artifacts under `dir`.
pub fn write_seed(dir: &Path, run: &SeedRun) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_steps_csv(&dir.join("steps.csv"), &run.steps)?;
    let path = dir.join("episodes.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for (episode, loss_mean, vvr_mean) in episode_means(&run.steps) {
        let steps = run.steps.iter().filter(|s| s.episode == episode).count();
        w.serialize(EpisodeRow {
            episode,
            loss_mean,
            vvr_mean,
            steps,
        })
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    if let Some(log) = &run.log {
        let path = dir.join("events.jsonl");
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        log.write_events(BufWriter::new(f)).map_err(|e| io_err(&path, e))?;
        let path = dir.join("train.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        for t in &log.train {
            for (agent, a) in t.agents.iter().enumerate() {
                w.serialize(TrainRow {
                    time: t.time,
                    version: t.version,
                    agent,
                    critic_loss: a.critic_loss,
                    cost_loss: a.cost_loss,
                    actor_loss: a.actor_loss,
                    entropy: a.entropy,
                    lambda: a.lambda,
                })
                .map_err(|e| io_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    if let Some(ck) = &run.checkpoint {
        let path = dir.join("checkpoint.json");
        fs::write(&path, ck).map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Across-seed statistics from per-seed step logs.
pub fn summarize(
    cfg: &ExperimentConfig,
    runs: &[SeedRun],
    failures: Vec<SeedFailure>,
    wall_clock_s: f64,
) -> RunSummary {
    let deterministic = cfg.algorithm == Algorithm::Vvo;
    let per_seed: Vec<Vec<(usize, f64, f64)>> = runs.iter().map(|r| episode_means(&r.steps)).collect();
    let n_ep = per_seed.iter().map(Vec::len).min().unwrap_or(0);
    let per_episode: Vec<EpisodeStat> = (0..n_ep)
        .map(|e| {
            let (lm, ls) = mean_std(&per_seed.iter().map(|s| s[e].1).collect::<Vec<_>>());
            let (vm, vs) = mean_std(&per_seed.iter().map(|s| s[e].2).collect::<Vec<_>>());
            EpisodeStat {
                episode: e,
                loss_mean: lm,
                loss_std: ls,
                vvr_mean: vm,
                vvr_std: vs,
            }
        })
        .collect();
    let final_episode = per_episode.last().map(|e| FinalStat {
        loss_mean: e.loss_mean,
        loss_std: (!deterministic).then_some(e.loss_std),
        vvr_mean: e.vvr_mean,
        vvr_std: (!deterministic).then_some(e.vvr_std),
    });
    RunSummary {
        name: cfg.name.clone(),
        algorithm: cfg.algorithm,
        scenario: cfg.scenario,
        conditions: cfg.conditions(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        episodes: cfg.episodes,
        per_episode,
        final_episode,
        failures,
        wall_clock_s,
    }
}

/// Runs every seed, writing `<output>/seed-<k>/` artifacts and
/// `<output>/summary.json`. A failing seed is recorded without stopping
/// the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, ExperimentError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    fs::write(out.join("config.toml"), cfg.to_toml()).map_err(|e| io_err(&out, e))?;
    let seeds: Vec<u64> = if cfg.algorithm == Algorithm::Vvo {
        vec![cfg.seeds[0]]
    } else {
        cfg.seeds.clone()
    };
    let results: Vec<(u64, Result<SeedRun, ExperimentError>)> = if cfg.jobs > 1 {
        let mut all = Vec::new();
        for chunk in seeds.chunks(cfg.jobs) {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&seed| (seed, s.spawn(move || run_seed(cfg, seed))))
                    .collect();
                for (seed, h) in handles {
                    let r = h
                        .join()
                        .unwrap_or_else(|_| Err(ExperimentError::Runtime("worker panicked".into())));
                    all.push((seed, r));
                }
            });
        }
        all
    } else {
        seeds.iter().map(|&s| (s, run_seed(cfg, s))).collect()
    };
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r.and_then(|run| write_seed(&out.join(format!("seed-{seed}")), &run).map(|_| run)) {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let summary = summarize(cfg, &runs, failures, start.elapsed().as_secs_f64());
    let path = out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes"))
        .map_err(|e| io_err(&path, e))?;
    if runs.is_empty() {
        return Err(ExperimentError::Runtime(format!(
            "every seed failed: {}",
            summary.failures.iter().map(|f| format!("seed {}: {}", f.seed, f.error)).collect::<Vec<_>>().join("; ")
        )));
    }
    Ok(summary)
}

/// Oracle setpoints for step `step` of episode 0 of the default synthetic
/// day on `network`.
pub fn oracle_at(
    network: &str,
    step: usize,
    opt: &crate::baselines::VvoOptions,
) -> Result<crate::baselines::OracleResult, ExperimentError> {
    let cfg = ExperimentConfig {
        network: network.to_string(),
        ..ExperimentConfig::default()
    };
    let mut env = build_env(&cfg)?;
    let horizon = env.horizon();
    if step >= horizon {
        return Err(ExperimentError::Config(format!(
            "step: {step} is past the episode horizon {horizon}"
        )));
    }
    env.reset_episode(0)?;
    let idle: Vec<Vec<f64>> = env.act_dims().iter().map(|&d| vec![0.0; d]).collect();
    for _ in 0..step {
        MultiAgentEnv::step(&mut env, &idle)?;
    }
    let problem = crate::baselines::step_problem(&env);
    Ok(crate::baselines::vvo_solve(env.solver(), &problem, opt))
}
