use rand::Rng;

use super::*;
use crate::env::toy::ToyCmg;
use crate::env::{EnvError, MultiAgentEnv, StepFeedback};
use crate::macsac::{Macsac, MacsacConfig};
use crate::seed::{rng, streams};

fn learner(env: &impl MultiAgentEnv, seed: u64) -> Macsac {
    let cfg = MacsacConfig { hidden: vec![16, 16], batch_size: 8, ..Default::default() };
    Macsac::new(&env.obs_dims(), &env.act_dims(), cfg, seed)
}

fn toy(horizon: usize) -> ToyCmg {
    ToyCmg::new(vec![0.4, -0.2], 0.5, horizon)
}

fn opts(episodes: usize, seed: u64) -> RunOptions {
    RunOptions { episodes, seed, ..Default::default() }
}

fn schedule(t_s: u64, t_u: u64, m: usize, comm_delay: u64, drop_prob: f64) -> OldcSchedule {
    OldcSchedule { dt: 1, t_s, t_u, m, comm_delay, drop_prob }
}

#[test]
fn degenerate_schedule_is_the_synchronous_loop() {
    let mut env = toy(12);
    let mut l = learner(&env, 1);
    let log = run(&OldcSchedule::synchronous(), &mut env, &mut l, &opts(3, 2)).unwrap();

    let mut env = toy(12);
    let mut reference = learner(&env, 1);
    let mut explore = rng(2, streams::EXPLORATION);
    let mut buffer = ReplayBuffer::new(RunOptions::default().buffer_capacity);
    let mut obs = env.reset_episode(0).unwrap();
    let mut losses = Vec::new();
    for step in 0..36 {
        let actions: Vec<Vec<f64>> = (0..2)
            .map(|i| reference.actor(i).act(&obs[i], true, &mut explore).unwrap())
            .collect();
        let fb = env.step(&actions).unwrap();
        buffer.push(Transition {
            x: obs.concat(),
            a: actions.concat(),
            r: fb.rewards.clone(),
            r_c: fb.costs.clone(),
            x_next: fb.observations.concat(),
            done: false,
        });
        reference.train_step(&buffer).unwrap();
        losses.push(fb.loss_mw);
        obs = if fb.done && step < 35 { env.reset_episode(step as u64 / 12 + 1).unwrap() } else { fb.observations };
    }
    let got: Vec<f64> = log.steps.iter().map(|s| s.loss_mw).collect();
    assert_eq!(got, losses);
    assert_eq!(l.checkpoint(), reference.checkpoint());
    assert_eq!(l.updates(), reference.updates());
}

#[test]
fn zero_uploads_freeze_the_policies() {
    let mut env = toy(16);
    let mut l = learner(&env, 3);
    let before = l.checkpoint().to_json();
    let log = run(&schedule(4, 4, 0, 0, 0.0), &mut env, &mut l, &opts(4, 3)).unwrap();
    assert_eq!(log.buffer.len(), 0);
    assert_eq!(log.uploaded, 0);
    assert_eq!(log.learner_version, 0);
    assert_eq!(log.executor_versions, vec![0, 0]);
    assert!(log.train.is_empty());
    assert_eq!(l.checkpoint().to_json(), before);
    assert!(log.steps.iter().all(|s| !s.stochastic));
}

#[test]
fn exactly_m_stochastic_steps_per_window() {
    for m in 0..=8 {
        let sched = schedule(8, 8, m, 0, 0.0);
        let mut env = toy(80);
        let mut l = learner(&env, 4);
        let log = run(&sched, &mut env, &mut l, &opts(1, 4)).unwrap();
        for w in 0..10 {
            let n = log.steps[w * 8..(w + 1) * 8].iter().filter(|s| s.stochastic).count();
            assert_eq!(n, m, "window {w}");
        }
        let controls = log.events.iter().filter(|e| e.kind == EventKind::Control && e.stochastic == Some(true));
        assert_eq!(controls.count(), 10 * m * 2);
    }
}

#[test]
fn selection_rule_examples() {
    let s = schedule(8, 8, 0, 0, 0.0);
    assert!((0..100).all(|k| select_exploration(k, &s) == Exploration::Deterministic));
    let s = schedule(8, 8, 7, 0, 0.0);
    for w in 0..5 {
        let det = (w * 8..w * 8 + 8).filter(|&k| select_exploration(k, &s) == Exploration::Deterministic).count();
        assert_eq!(det, 1);
    }
    let s = schedule(8, 8, 1, 0, 0.0);
    assert_eq!(select_exploration(7, &s), Exploration::Stochastic);
    assert_eq!(select_exploration(6, &s), Exploration::Deterministic);
}

#[test]
fn dropped_samples_match_the_binomial() {
    for &p in &[0.3, 0.5] {
        let mut env = toy(100);
        let mut l = learner(&env, 5);
        let log = run(&schedule(2, 4, 2, 0, p), &mut env, &mut l, &opts(10, 5)).unwrap();
        let n = log.uploaded as f64;
        assert_eq!(log.uploaded, 1000);
        let kept = log.buffer.len() as f64;
        assert_eq!(log.buffer.len() + log.dropped, log.uploaded);
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((kept - n * (1.0 - p)).abs() <= 5.0 * sd, "p {p}: kept {kept}");
    }
}

#[test]
fn staleness_is_bounded_and_visible() {
    let (d, t_u) = (5u64, 2u64);
    let mut env = toy(60);
    let mut l = learner(&env, 6);
    let log = run(&schedule(1, t_u, 1, d, 0.0), &mut env, &mut l, &opts(2, 6)).unwrap();
    let bound = d.div_ceil(t_u) + 1;
    let mut learner_version = 0;
    let mut saw_lag = false;
    for e in &log.events {
        match e.kind {
            EventKind::Train => learner_version = e.version.unwrap(),
            EventKind::Control => {
                let v = e.version.unwrap();
                assert!(learner_version - v <= bound, "lag {} at t={}", learner_version - v, e.time);
                saw_lag |= v < learner_version;
            }
            _ => {}
        }
    }
    assert!(saw_lag, "in-transit snapshots should leave executors behind the learner");
}

#[test]
fn control_never_waits_for_training() {
    let mut env = toy(30);
    let mut l = learner(&env, 7);
    let sched = OldcSchedule { dt: 3, t_s: 6, t_u: 3, m: 1, comm_delay: 4, drop_prob: 0.0 };
    let log = run(&sched, &mut env, &mut l, &opts(2, 7)).unwrap();
    let times: Vec<u64> = log.events.iter().filter(|e| e.kind == EventKind::Control).map(|e| e.time).collect();
    assert_eq!(times.len(), 60 * 2);
    for (k, pair) in times.chunks(2).enumerate() {
        assert_eq!(pair, [3 * k as u64, 3 * k as u64]);
    }
    assert!(log.events.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(!log.train.is_empty());
}

#[test]
fn policy_versions_only_move_forward() {
    let mut env = toy(40);
    let mut l = learner(&env, 8);
    let log = run(&schedule(2, 2, 1, 3, 0.0), &mut env, &mut l, &opts(2, 8)).unwrap();
    for agent in 0..2 {
        let versions: Vec<u64> = log
            .events
            .iter()
            .filter(|e| e.kind == EventKind::PolicyArrival && e.agent == Some(agent))
            .map(|e| e.version.unwrap())
            .collect();
        assert!(!versions.is_empty());
        assert!(versions.windows(2).all(|w| w[0] < w[1]));
    }
    let mut ex = Executor { snapshot: ship_policy(&l, 0, 5) };
    assert!(!ex.receive(ship_policy(&l, 0, 4)));
    assert!(ex.receive(ship_policy(&l, 0, 6)));
    assert_eq!(ex.version(), 6);
}

#[test]
fn snapshot_acts_like_the_learner() {
    let env = toy(4);
    let l = learner(&env, 9);
    let snap = ship_policy(&l, 1, 1);
    let mut r = rng(0, 0);
    assert_eq!(
        Executor { snapshot: snap }.act(&[1.0], Exploration::Deterministic, &mut r).unwrap(),
        l.actor(1).act(&[1.0], false, &mut r).unwrap()
    );
}

/// Adds noise to agent 1's observation only.
#[derive(Clone)]
struct NoisyOther {
    inner: ToyCmg,
    scale: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl NoisyOther {
    fn noisy(&mut self, mut obs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        obs[1][0] += self.scale * self.rng.gen_range(-1.0..1.0);
        obs
    }
}

impl MultiAgentEnv for NoisyOther {
    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }
    fn obs_dims(&self) -> Vec<usize> {
        self.inner.obs_dims()
    }
    fn act_dims(&self) -> Vec<usize> {
        self.inner.act_dims()
    }
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn reset_episode(&mut self, episode: u64) -> Result<Vec<Vec<f64>>, EnvError> {
        let obs = self.inner.reset_episode(episode)?;
        Ok(self.noisy(obs))
    }
    fn step(&mut self, actions: &[Vec<f64>]) -> Result<StepFeedback, EnvError> {
        let mut fb = self.inner.step(actions)?;
        fb.observations = self.noisy(fb.observations);
        Ok(fb)
    }
}

#[test]
fn actions_depend_only_on_local_observations() {
    let digests = |scale: f64| {
        let mut env = NoisyOther { inner: toy(20), scale, rng: rng(1, 1) };
        let mut l = learner(&env, 10);
        let log = run(&schedule(4, 4, 0, 0, 0.0), &mut env, &mut l, &opts(1, 10)).unwrap();
        let per_agent = |a: usize| -> Vec<String> {
            log.events
                .iter()
                .filter(|e| e.kind == EventKind::Control && e.agent == Some(a))
                .map(|e| e.digest.clone())
                .collect()
        };
        (per_agent(0), per_agent(1))
    };
    let (a0, a1) = digests(0.0);
    let (b0, b1) = digests(0.5);
    assert_eq!(a0, b0);
    assert_ne!(a1, b1);
}

#[test]
fn runs_are_reproducible() {
    let go = || {
        let mut env = toy(24);
        let mut l = learner(&env, 11);
        let log = run(&schedule(4, 2, 2, 1, 0.2), &mut env, &mut l, &opts(3, 11)).unwrap();
        (log.events_jsonl(), log.steps, l.checkpoint())
    };
    assert_eq!(go(), go());
}

#[test]
fn invalid_setups_are_refused() {
    let mut env = toy(4);
    let mut l = learner(&env, 12);
    for bad in [
        OldcSchedule { dt: 0, ..OldcSchedule::synchronous() },
        OldcSchedule { dt: 2, t_s: 4, t_u: 3, ..OldcSchedule::synchronous() },
        OldcSchedule { dt: 2, t_s: 1, ..OldcSchedule::synchronous() },
        schedule(4, 4, 5, 0, 0.0),
        schedule(4, 4, 1, 0, 1.5),
    ] {
        assert!(matches!(run(&bad, &mut env, &mut l, &opts(1, 0)), Err(OldcError::Schedule(_))), "{bad:?}");
    }
    let mut wrong = Macsac::new(&[2, 1], &[1, 1], MacsacConfig { hidden: vec![4], ..Default::default() }, 0);
    assert!(matches!(
        run(&OldcSchedule::synchronous(), &mut env, &mut wrong, &opts(1, 0)),
        Err(OldcError::Dimension(_))
    ));
}
