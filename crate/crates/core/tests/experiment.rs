use std::fs;
use std::path::Path;
use std::process::Command;

use vvc::experiment::{
    compare, emit_plot_data, read_steps_csv, run_experiment, Algorithm, ExperimentConfig, ExperimentError,
    RunSummary,
};
use vvc::oldc::StepRecord;

fn smoke(dir: &Path, name: &str, algorithm: Algorithm, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: name.into(),
        algorithm,
        episodes: 2,
        seeds,
        output_root: dir.to_path_buf(),
        ..Default::default()
    };
    cfg.profile.synthetic.steps = 12;
    cfg.macsac.hidden = vec![16, 16];
    cfg.macsac.batch_size = 8;
    cfg.maddpg.hidden = vec![16, 16];
    cfg.maddpg.batch_size = 8;
    cfg
}

#[test]
fn config_round_trip_is_idempotent() {
    let text = r#"
name = "rt"
algorithm = "maddpg"
scenario = "online"
episodes = 7
seeds = [4, 5]
beta = [0.5, 1.0, 1.5, 2.0]

[profile]
seed = 3
pv_peak = 0.6

[schedule]
t_s = 8
t_u = 8
m = 1

[maddpg]
noise = 0.05
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    assert_eq!(cfg.profile.synthetic.pv_peak, 0.6);
    assert_eq!(cfg.schedule.m, 1);
    assert_eq!(cfg.maddpg.noise, 0.05);
    let once = cfg.to_toml();
    let again = ExperimentConfig::from_toml(&once).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_toml(), once);
}

#[test]
fn validation_names_the_offending_field() {
    let cases = [
        ("seeds = []", "seeds"),
        ("episodes = 0", "episodes"),
        ("beta = [1.0, 2.0]", "beta"),
        ("network = \"builtin:nope\"", "network"),
        ("[schedule]\nt_s = 8\nm = 9", "schedule"),
        ("[avvo]\nsigma = 1.5", "avvo.sigma"),
    ];
    for (text, field) in cases {
        let err = ExperimentConfig::from_toml(text).and_then(|c| c.validate().map(|_| c)).unwrap_err();
        assert!(matches!(err, ExperimentError::Config(_)), "{text}");
        assert!(err.to_string().contains(field), "{text}: {err}");
        assert_eq!(err.exit_code(), 1);
    }
}

#[test]
fn smoke_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke(dir.path(), "smoke", Algorithm::Macsac, vec![0, 1]);
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.seeds, vec![0, 1]);
    assert!(summary.failures.is_empty());
    assert_eq!(summary.per_episode.len(), 2);
    for seed in [0, 1] {
        let d = dir.path().join(format!("smoke/seed-{seed}"));
        for f in ["steps.csv", "episodes.csv", "train.csv", "events.jsonl", "checkpoint.json"] {
            assert!(d.join(f).is_file(), "{f}");
        }
    }
    let stored = RunSummary::load(&dir.path().join("smoke/summary.json")).unwrap();
    assert_eq!(stored, summary);
    let f = summary.final_episode.unwrap();
    assert!(f.loss_std.unwrap() >= 0.0 && f.vvr_std.unwrap() >= 0.0);
}

#[test]
fn summary_is_recomputable_from_step_logs() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_experiment(&smoke(dir.path(), "re", Algorithm::Maddpg, vec![3, 4])).unwrap();
    let finals: Vec<f64> = [3, 4]
        .iter()
        .map(|s| {
            let steps = read_steps_csv(&dir.path().join(format!("re/seed-{s}/steps.csv"))).unwrap();
            let last: Vec<&StepRecord> = steps.iter().filter(|r| r.episode == 1).collect();
            last.iter().map(|r| r.loss_mw).sum::<f64>() / last.len() as f64
        })
        .collect();
    let mean = (finals[0] + finals[1]) / 2.0;
    assert!((summary.final_episode.unwrap().loss_mean - mean).abs() < 1e-15);
}

#[test]
fn reruns_and_seed_subsets_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&smoke(dir.path(), "a", Algorithm::Macsac, vec![0, 1])).unwrap();
    run_experiment(&smoke(dir.path(), "b", Algorithm::Macsac, vec![0, 1])).unwrap();
    run_experiment(&smoke(dir.path(), "c", Algorithm::Macsac, vec![1])).unwrap();
    let mut parallel = smoke(dir.path(), "d", Algorithm::Macsac, vec![0, 1]);
    parallel.jobs = 2;
    run_experiment(&parallel).unwrap();
    for f in ["steps.csv", "episodes.csv", "train.csv", "events.jsonl", "checkpoint.json"] {
        let read = |run: &str| fs::read(dir.path().join(run).join("seed-1").join(f)).unwrap();
        assert_eq!(read("a"), read("b"), "{f}");
        assert_eq!(read("a"), read("c"), "{f}");
        assert_eq!(read("a"), read("d"), "{f}");
    }
}

#[test]
fn oracle_summary_has_no_spread() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke(dir.path(), "vvo", Algorithm::Vvo, vec![0, 1, 2]);
    cfg.episodes = 1;
    let s = run_experiment(&cfg).unwrap();
    let f = s.final_episode.unwrap();
    assert_eq!(s.seeds.len(), 1);
    assert_eq!((f.loss_std, f.vvr_std), (None, None));
    assert!(f.loss_mean > 0.0);
}

#[test]
fn comparison_orders_rows_and_refuses_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let mut vvo = smoke(dir.path(), "v", Algorithm::Vvo, vec![0]);
    vvo.episodes = 1;
    let mut mac = smoke(dir.path(), "m", Algorithm::Macsac, vec![0]);
    mac.episodes = 1;
    let mut mad = smoke(dir.path(), "d", Algorithm::Maddpg, vec![0]);
    mad.episodes = 1;
    let sv = run_experiment(&vvo).unwrap();
    let sm = run_experiment(&mac).unwrap();
    let sd = run_experiment(&mad).unwrap();
    let table = compare(&[sv.clone(), sm.clone(), sd.clone()]).unwrap();
    let methods: Vec<&str> = table.rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["maddpg", "macsac", "vvo"]);
    assert!(table.to_text().contains("vvo"));
    assert_eq!(table.to_csv().unwrap().lines().count(), 4);
    let twice = compare(&[sm.clone(), sm.clone()]).unwrap();
    assert_eq!(twice.rows[0], twice.rows[1]);

    let mut other = smoke(dir.path(), "o", Algorithm::Macsac, vec![0]);
    other.episodes = 1;
    other.profile.seed = 9;
    let so = run_experiment(&other).unwrap();
    let err = compare(&[sm, so]).unwrap_err();
    assert!(err.to_string().contains("different conditions"));
}

fn step(step: usize, loss: f64) -> StepRecord {
    StepRecord { step, episode: 0, t: step, time: step as u64, loss_mw: loss, vvr: loss / 10.0, reward: -loss, stochastic: false }
}

#[test]
fn plot_envelopes() {
    assert!(emit_plot_data(&[]).is_err());
    let one = vec![(0..5).map(|k| step(k, 1.0 / (k + 1) as f64)).collect::<Vec<_>>()];
    for r in emit_plot_data(&one).unwrap() {
        assert_eq!((r.loss_min, r.loss_max), (r.loss_mean, r.loss_mean));
    }
    let three: Vec<Vec<StepRecord>> = (0..3)
        .map(|s| (0..6).map(|k| step(k, (k as f64 + 1.0) * (1.0 + 0.1 * s as f64))).collect())
        .collect();
    let rows = emit_plot_data(&three).unwrap();
    for r in &rows {
        assert!(r.loss_min <= r.loss_mean && r.loss_mean <= r.loss_max);
        assert!(r.vvr_min <= r.vvr_mean && r.vvr_mean <= r.vvr_max);
    }
    assert!(rows.windows(2).all(|w| w[0].loss_mean < w[1].loss_mean));
}

fn vvc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vvc"))
}

#[test]
fn cli_exit_codes_and_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(
        &good,
        "name = \"cli\"\nepisodes = 1\nseeds = [0]\n[profile]\nsteps = 6\n[macsac]\nhidden = [8]\nbatch_size = 4\n",
    )
    .unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "episodes = 0\n").unwrap();
    let root = dir.path().join("out");

    assert_eq!(vvc().arg("validate").arg(&good).status().unwrap().code(), Some(0));
    assert_eq!(vvc().arg("validate").arg(&bad).status().unwrap().code(), Some(1));
    assert_eq!(vvc().arg("validate").arg(dir.path().join("missing.toml")).status().unwrap().code(), Some(1));

    let st = vvc().arg("run").arg(&good).env("VVC_OUTPUT_ROOT", &root).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let summary = root.join("cli/summary.json");
    assert!(summary.is_file());

    let out = vvc().arg("compare").arg(&summary).arg(&summary).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);

    let out = vvc().arg("plotdata").arg(root.join("cli/seed-0/steps.csv")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 7);

    let out = vvc().args(["oracle", "builtin:ieee33", "40"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let res: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(res["setpoints"].as_array().unwrap().len(), 4);
    assert_eq!(vvc().args(["oracle", "builtin:ieee33", "96"]).status().unwrap().code(), Some(1));

    // a runtime failure: the output root is a file
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let st = vvc().arg("run").arg(&good).env("VVC_OUTPUT_ROOT", &blocker).status().unwrap();
    assert_eq!(st.code(), Some(2));
}
