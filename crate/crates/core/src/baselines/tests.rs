use rand::Rng;

use super::*;
use crate::env::toy::ToyCmg;
use crate::env::{ieee33_case, DeviceSpec, EnvConfig, MultiAgentEnv, ProfileConfig, VvcEnv};
use crate::grid::{Branch, Bus, Injections, NetworkModel};
use crate::macsac::{Actor, Learner, Macsac, MacsacConfig, ReplayBuffer, Transition};
use crate::neural::Module;
use crate::oldc::{self, OldcSchedule, RunOptions};
use crate::testutil::{rng, set_constant, set_piecewise};

fn two_bus() -> (PowerFlowSolver, Vec<DeviceSpec>) {
    let net = NetworkModel::new(
        1.0,
        (0.95, 1.05),
        vec![Bus::slack(0), Bus::load(1, 0.6, 0.3)],
        vec![Branch::from_impedance(0, 1, 0.02, 0.06)],
    )
    .unwrap();
    (PowerFlowSolver::new(net), vec![DeviceSpec::compensator(1, -0.5, 0.5, 0)])
}

fn objective(r: &OracleResult, opt: &VvoOptions) -> f64 {
    r.loss_mw + opt.penalty * r.vvr
}

#[test]
fn no_devices_returns_the_uncontrolled_loss() {
    let (solver, _) = two_bus();
    let problem = VvoProblem { base: Injections::from_loads(solver.network()), devices: &[], p_gen: vec![] };
    let res = vvo_solve(&solver, &problem, &VvoOptions::default());
    let plain = solver.solve(&problem.base, None).unwrap();
    assert!(res.converged);
    assert!(res.setpoints.is_empty());
    assert_eq!(res.loss_mw, plain.p_loss_total);
}

#[test]
fn single_compensator_matches_dense_grid() {
    let (solver, devices) = two_bus();
    let problem = VvoProblem { base: Injections::from_loads(solver.network()), devices: &devices, p_gen: vec![0.0] };
    let opt = VvoOptions::default();
    let res = vvo_solve(&solver, &problem, &opt);
    let n = 20_001;
    let (best_a, best_f) = (0..n)
        .map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64)
        .map(|a| (a, objective(&evaluate_setpoints(&solver, &problem, vec![a]), &opt)))
        .fold((0.0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    let step = 2.0 / (n - 1) as f64;
    assert!(objective(&res, &opt) <= best_f + 1e-12, "{} vs {best_f}", objective(&res, &opt));
    assert!((res.setpoints[0] - best_a).abs() <= step, "{} vs {best_a}", res.setpoints[0]);
}

fn noon_env() -> VvcEnv {
    let mut env = VvcEnv::new(ieee33_case().unwrap(), EnvConfig::synthetic(4, ProfileConfig::default(), 0)).unwrap();
    env.reset_episode(0).unwrap();
    let idle = vec![vec![0.0]; 4];
    for _ in 0..48 {
        MultiAgentEnv::step(&mut env, &idle).unwrap();
    }
    env
}

#[test]
fn oracle_beats_random_probes_on_the_feeder() {
    let env = noon_env();
    let problem = step_problem(&env);
    let opt = VvoOptions::default();
    let res = vvo_solve(env.solver(), &problem, &opt);
    assert!(res.converged);
    assert!(res.setpoints.iter().all(|a| (-1.0..=1.0).contains(a)));
    let mut r = rng(1);
    for _ in 0..1000 {
        let a: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..=1.0)).collect();
        let probe = evaluate_setpoints(env.solver(), &problem, a);
        assert!(objective(&res, &opt) <= objective(&probe, &opt) + 1e-9);
        if probe.vvr == 0.0 {
            assert!(res.loss_mw <= probe.loss_mw + 1e-9);
        }
    }
}

#[test]
fn unperturbed_model_reproduces_the_oracle() {
    let env = noon_env();
    let problem = step_problem(&env);
    let opt = VvoOptions::default();
    let model = PowerFlowSolver::new(perturb_network(env.solver().network(), 0.0, 5).unwrap());
    let exact = vvo_solve(env.solver(), &problem, &opt);
    let approx = avvo_solve(env.solver(), &model, &problem, &opt);
    assert_eq!(exact.setpoints, approx.setpoints);
    assert_eq!(exact.loss_mw, approx.loss_mw);
}

#[test]
fn perturbed_model_does_no_better_than_the_oracle() {
    let env = noon_env();
    let problem = step_problem(&env);
    let opt = VvoOptions::default();
    let exact = vvo_solve(env.solver(), &problem, &opt);
    for seed in 0..3 {
        let net = perturb_network(env.solver().network(), 0.2, seed).unwrap();
        assert_eq!(net, perturb_network(env.solver().network(), 0.2, seed).unwrap());
        let approx = avvo_solve(env.solver(), &PowerFlowSolver::new(net), &problem, &opt);
        assert!(objective(&exact, &opt) <= objective(&approx, &opt) + 1e-4);
    }
    assert!(perturb_network(env.solver().network(), 1.0, 0).is_err());
}

#[test]
fn exploration_noise_is_clipped() {
    let m = Maddpg::new(&[1], &[1], MaddpgConfig { noise: 5.0, hidden: vec![8], ..Default::default() }, 2);
    let actor = m.actor(0);
    let mut r = rng(3);
    let outs: Vec<f64> = (0..500).map(|_| actor.act(&[0.3], true, &mut r).unwrap()[0]).collect();
    assert!(outs.iter().all(|a| (-1.0..=1.0).contains(a)));
    assert!(outs.iter().any(|&a| a == 1.0) && outs.iter().any(|&a| a == -1.0));
    let quiet = actor.act(&[0.3], false, &mut r).unwrap();
    assert_eq!(quiet, actor.act(&[0.3], false, &mut r).unwrap());
}

#[test]
fn deterministic_actor_follows_the_critic_slope() {
    let mut m = Maddpg::new(&[1], &[1], MaddpgConfig { noise: 0.0, hidden: vec![40, 40], ..Default::default() }, 4);
    set_piecewise(&mut m.agents[0].critic, 1, |a| -2.0 * a);
    let t = Transition { x: vec![1.0], a: vec![0.0], r: vec![0.0], r_c: vec![0.0], x_next: vec![1.0], done: false };
    let batch = crate::macsac::Batch::from_transitions(&[&t; 4]);
    let (_, grads) = m.actor_eval(0, &batch).unwrap();
    // dQ/da < 0, so the loss -Q rises with the pre-activation output
    assert!(grads.last().unwrap()[[0, 0]] > 0.0);
    set_piecewise(&mut m.agents[0].critic, 1, |a| 2.0 * a);
    let (_, grads) = m.actor_eval(0, &batch).unwrap();
    assert!(grads.last().unwrap()[[0, 0]] < 0.0);
}

#[test]
fn penalty_is_folded_into_the_reward() {
    let mut m = Maddpg::new(&[1], &[1], MaddpgConfig { gamma: 0.5, penalty: 10.0, hidden: vec![8], ..Default::default() }, 5);
    set_constant(&mut m.agents[0].critic_target, 2.0);
    let t = Transition { x: vec![1.0], a: vec![0.0], r: vec![-1.0], r_c: vec![0.05], x_next: vec![1.0], done: false };
    let batch = crate::macsac::Batch::from_transitions(&[&t]);
    assert!((m.targets(0, &batch).unwrap()[0] - (-1.0 - 0.5 + 1.0)).abs() < 1e-12);
}

fn toy_run<L: Learner>(learner: &mut L, env: &mut ToyCmg, episodes: usize, seed: u64) -> oldc::RunLog {
    let opts = RunOptions { episodes, seed, ..Default::default() };
    oldc::run(&OldcSchedule::synchronous(), env, learner, &opts).unwrap()
}

#[test]
fn maddpg_reaches_the_toy_optimum() {
    let targets = vec![0.5, -0.3];
    let mut env = ToyCmg::new(targets.clone(), 10.0, 10);
    let cfg = MaddpgConfig { gamma: 0.0, hidden: vec![32, 32], batch_size: 64, lr: 3e-3, noise: 0.2, ..Default::default() };
    let mut m = Maddpg::new(&env.obs_dims(), &env.act_dims(), cfg, 6);
    toy_run(&mut m, &mut env, 150, 6);
    for (i, c) in targets.iter().enumerate() {
        let a = m.actor(i).act(&[1.0], false, &mut rng(0)).unwrap()[0];
        assert!((a - c).abs() < 0.05, "agent {i}: {a} vs {c}");
    }
}

#[test]
fn maddpg_is_reproducible() {
    let run = || {
        let mut env = ToyCmg::new(vec![0.2, 0.1], 10.0, 5);
        let cfg = MaddpgConfig { hidden: vec![8], batch_size: 8, ..Default::default() };
        let mut m = Maddpg::new(&env.obs_dims(), &env.act_dims(), cfg, 7);
        let log = toy_run(&mut m, &mut env, 6, 7);
        (log.events_jsonl(), m.checkpoint().to_json())
    };
    assert_eq!(run(), run());
}

#[test]
fn centralized_view_concatenates_agents() {
    let env = Centralized::new(noon_env());
    assert_eq!(env.obs_dims(), vec![111]);
    assert_eq!(env.act_dims(), vec![4]);
    let m = csac(&env.inner.obs_dims(), &env.inner.act_dims(), MacsacConfig { hidden: vec![8], ..Default::default() }, 1);
    assert_eq!(m.layout().obs_dim(0), 111);
}

#[test]
fn centralized_cost_is_the_network_cost() {
    let mut env = Centralized::new(ToyCmg::new(vec![0.5, 0.5], 0.4, 3));
    env.reset_episode(0).unwrap();
    let fb = env.step(&[vec![0.5, 0.5]]).unwrap();
    assert_eq!(fb.costs, vec![fb.global_cost]);
    assert!((fb.global_cost - 0.6).abs() < 1e-12);
    assert!(env.step(&[vec![0.5]]).is_err());
}

#[test]
fn csac_equals_single_agent_macsac() {
    let cfg = MacsacConfig { hidden: vec![16], batch_size: 16, ..Default::default() };
    let run = |central: bool| {
        let mut env = Centralized::new(ToyCmg::new(vec![0.3, -0.2], 0.5, 8));
        let mut m = if central {
            csac(&env.inner.obs_dims(), &env.inner.act_dims(), cfg.clone(), 8)
        } else {
            Macsac::new(&env.obs_dims(), &env.act_dims(), cfg.clone(), 8)
        };
        let opts = RunOptions { episodes: 6, seed: 8, ..Default::default() };
        let log = oldc::run(&OldcSchedule::synchronous(), &mut env, &mut m, &opts).unwrap();
        (log.events_jsonl(), log.steps, m.checkpoint().to_json())
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn empty_buffer_is_a_no_op_for_maddpg() {
    let mut m = Maddpg::new(&[1], &[1], MaddpgConfig::default(), 9);
    assert!(m.train_step(&ReplayBuffer::new(4)).unwrap().is_none());
    let Actor::Deterministic { net, .. } = m.actor(0) else { panic!("deterministic actor expected") };
    assert_eq!(net.params(), m.agents[0].actor.params());
}
