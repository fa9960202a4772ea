use proptest::prelude::*;

use super::*;
use crate::grid::{Branch, Bus, NetworkModel};

fn default_env(profile_seed: u64) -> VvcEnv {
    let case = ieee33_case().unwrap();
    VvcEnv::new(case, EnvConfig::synthetic(4, ProfileConfig::default(), profile_seed)).unwrap()
}

fn zero_actions(env: &VvcEnv) -> Vec<ActionVector> {
    env.act_dims().iter().map(|&d| ActionVector(vec![0.0; d])).collect()
}

fn fake_solution(v_mag: Vec<f64>, loss: f64) -> PowerFlowSolution {
    let n = v_mag.len();
    PowerFlowSolution {
        v_ang: vec![0.0; n],
        v_mag,
        branch_p: vec![],
        branch_q: vec![],
        branch_p_rev: vec![],
        branch_q_rev: vec![],
        p_inj: vec![0.0; n],
        q_inj: vec![0.0; n],
        p_loss_total: loss,
        converged: true,
        iterations: 1,
        max_mismatch: 0.0,
        diagnostic: None,
    }
}

#[test]
fn vvr_examples() {
    let lim = (0.95, 1.05);
    assert_eq!(vvr(&[0, 1, 2], &[0.95, 1.0, 1.05], lim), 0.0);
    assert!((vvr(&[0], &[1.06], lim) - 1e-4).abs() < 1e-15);
    assert!((vvr(&[0, 1], &[0.94, 1.07], lim) - 5e-4).abs() < 1e-15);
}

#[test]
fn cost_examples() {
    let case = ieee33_case().unwrap();
    let lim = (0.95, 1.05);
    let mut v = vec![1.0; 33];
    for beta in [0.0, 0.5, 1.0] {
        assert_eq!(cost(&case.areas, 1, beta, &v, lim), 0.0);
    }
    // Bus 30 (index 29) lies in area 3, outside area 1.
    v[29] = 1.06;
    assert_eq!(cost(&case.areas, 1, 0.0, &v, lim), 0.0);
    assert!((cost(&case.areas, 3, 1.0, &v, lim) - 2e-4).abs() < 1e-15);
}

#[test]
fn reward_is_negative_loss() {
    assert_eq!(reward_power(&fake_solution(vec![1.0; 2], 0.0)).unwrap(), -0.0);
    assert_eq!(reward_power(&fake_solution(vec![1.0; 2], 0.2)).unwrap(), -0.2);
    let mut bad = fake_solution(vec![1.0; 2], 0.2);
    bad.converged = false;
    assert!(reward_power(&bad).is_err());
}

#[test]
fn zero_load_reset_is_flat_and_step_is_free() {
    let mut env = default_env(0);
    let case = env.case().clone();
    let reset = env.reset(Profile::constant(&case, 4, 0.0)).unwrap();
    for obs in &reset.observations {
        assert!(obs.v_area.iter().all(|&v| v == 1.0));
        assert!(obs.p_outlet.iter().chain(&obs.q_outlet).all(|&p| p == 0.0));
    }
    let out = env.step(&zero_actions(&env)).unwrap();
    assert!(out.rewards.iter().all(|&r| r == 0.0));
    assert!(out.costs.iter().all(|&c| c == 0.0));
    assert!(!out.done);
}

#[test]
fn same_seed_same_observations() {
    let mut a = default_env(7);
    let mut b = default_env(7);
    assert_eq!(a.reset_episode(3).unwrap(), b.reset_episode(3).unwrap());
    let mut c = default_env(8);
    assert_ne!(a.reset_episode(3).unwrap(), c.reset_episode(3).unwrap());
}

#[test]
fn nominal_reset_balances_at_the_slack() {
    let mut env = default_env(0);
    let case = env.case().clone();
    env.reset(Profile::constant(&case, 2, 1.0)).unwrap();
    let sol = env.solution().unwrap().clone();
    let (p_slack, _) = sol.slack_injection(&case.network);
    let (p_load, _) = case.network.total_load();
    assert!((p_slack - (p_load + sol.p_loss_total)).abs() < 1e-7);
    // The root area's outlets feed every other area: together they carry
    // the downstream load plus downstream loss.
    let obs = env.observation(0);
    let downstream_load: f64 = (18..33).map(|j| case.network.buses()[j].p_load).sum();
    let downstream_loss: f64 = case
        .network
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, br)| case.areas.area_of(br.from_bus) != 0 || case.areas.area_of(br.to_bus) != 0)
        .map(|(k, _)| sol.branch_p[k] + sol.branch_p_rev[k])
        .sum();
    let outlet: f64 = obs.p_outlet.iter().sum();
    assert!((outlet - downstream_load - downstream_loss).abs() < 1e-7);
}

#[test]
fn single_area_has_no_outlets() {
    let net = crate::grid::case33::ieee33().unwrap();
    let case = FeederCase::new(net, vec![DeviceSpec::inverter(17, 1.0, 0)], vec![]).unwrap();
    let mut env = VvcEnv::new(case.clone(), EnvConfig::synthetic(1, ProfileConfig::default(), 0))
        .unwrap();
    let reset = env.reset(Profile::constant(&case, 2, 1.0)).unwrap();
    assert!(reset.observations[0].p_outlet.is_empty());
    assert_eq!(env.obs_dims(), vec![99]);
}

#[test]
fn saturated_inverter_has_no_reactive_range() {
    let dev = DeviceSpec::inverter(3, 0.8, 0);
    for a in [-1.0, -0.3, 0.0, 0.7, 1.0] {
        assert_eq!(dev.map_action(a, 0.8), 0.0);
    }
    assert_eq!(dev.normalize(0.0, 0.8), 0.0);
}

#[test]
fn episode_ends_at_horizon() {
    let mut env = default_env(0);
    let case = env.case().clone();
    env.reset(Profile::constant(&case, 2, 0.5)).unwrap();
    assert!(!env.step(&zero_actions(&env)).unwrap().done);
    assert!(env.step(&zero_actions(&env)).unwrap().done);
    assert_eq!(env.step(&zero_actions(&env)), Err(EnvError::Finished));
}

#[test]
fn malformed_actions_are_rejected() {
    let mut env = default_env(0);
    env.reset_episode(0).unwrap();
    let mut acts = zero_actions(&env);
    acts[0].0.push(0.0);
    assert!(matches!(env.step(&acts), Err(EnvError::InvalidAction(_))));
    let mut acts = zero_actions(&env);
    acts[2].0[0] = f64::NAN;
    assert!(matches!(env.step(&acts), Err(EnvError::InvalidAction(_))));
}

#[test]
fn reward_identical_across_agents_and_equals_loss() {
    let mut env = default_env(1);
    env.reset_episode(0).unwrap();
    for k in 0..5 {
        let acts: Vec<ActionVector> = env
            .act_dims()
            .iter()
            .map(|&d| ActionVector(vec![0.2 * k as f64 - 0.4; d]))
            .collect();
        let out = env.step(&acts).unwrap();
        assert!(out.rewards.iter().all(|&r| r == -out.loss_mw));
    }
}

#[test]
fn trajectory_is_determined_by_seed_and_actions() {
    let run = || {
        let mut env = default_env(4);
        env.reset_episode(2).unwrap();
        (0..10)
            .map(|k| {
                let a = ((k as f64) * 0.37).sin();
                let acts: Vec<Vec<f64>> = env.act_dims().iter().map(|&d| vec![a; d]).collect();
                MultiAgentEnv::step(&mut env, &acts).unwrap()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

/// Two-bus feeder with a compensator: the environment's reward at each
/// setpoint agrees with a closed-form two-bus loss, so its grid argmax
/// matches brute force.
#[test]
fn two_bus_compensator_grid_optimum() {
    let net = NetworkModel::new(
        1.0,
        (0.95, 1.05),
        vec![Bus::slack(0), Bus::load(1, 0.1, 0.05)],
        vec![Branch::new(0, 1, 10.0, -20.0)],
    )
    .unwrap();
    let case = FeederCase::new(net, vec![DeviceSpec::compensator(1, -0.1, 0.1, 0)], vec![]).unwrap();
    let mut env = VvcEnv::new(case.clone(), EnvConfig::synthetic(1, ProfileConfig::default(), 0))
        .unwrap();
    // Independent route: iterate V2 = V1 - z * conj(S2 / V2) and take the
    // loss as |I|^2 r.
    let oracle_loss = |q: f64| {
        let (g, b) = (10.0, -20.0);
        let d = g * g + b * b;
        let (r, x) = (g / d, -b / d);
        let (p2, q2) = (-0.1, -0.05 + q);
        let (mut vr, mut vi) = (1.0f64, 0.0f64);
        for _ in 0..200 {
            // I = conj(S / V) flowing into bus 2 from the line = -conj(S2)/conj(V2)
            let den = vr * vr + vi * vi;
            let ir = -(p2 * vr + q2 * vi) / den;
            let ii = -(p2 * vi - q2 * vr) / den;
            vr = 1.0 - (r * ir - x * ii);
            vi = -(r * ii + x * ir);
        }
        let den = vr * vr + vi * vi;
        let ir = -(p2 * vr + q2 * vi) / den;
        let ii = -(p2 * vi - q2 * vr) / den;
        (ir * ir + ii * ii) * r
    };
    let mut best_env = (f64::NEG_INFINITY, 0.0);
    let mut best_oracle = (f64::NEG_INFINITY, 0.0);
    for k in 0..=2000 {
        let a = -1.0 + k as f64 * 1e-3;
        env.reset(Profile::constant(&case, 1, 1.0)).unwrap();
        let out = env.step(&[ActionVector(vec![a])]).unwrap();
        let q = out.device_q[0];
        let r_oracle = -oracle_loss(q);
        assert!((out.rewards[0] - r_oracle).abs() < 1e-9);
        if out.rewards[0] > best_env.0 {
            best_env = (out.rewards[0], a);
        }
        if r_oracle > best_oracle.0 {
            best_oracle = (r_oracle, a);
        }
    }
    assert!((best_env.1 - best_oracle.1).abs() <= 1e-3 + 1e-12);
    assert!((best_env.0 - best_oracle.0).abs() < 1e-9);
}

#[test]
fn case_json_round_trip() {
    let case = ieee33_case().unwrap();
    let text = case.to_json();
    let back = FeederCase::from_json(&text).unwrap();
    assert_eq!(back, case);
}

#[test]
fn case_json_uses_file_bus_ids() {
    let text = r#"{
        "base_mva": 1.0, "v_limits": [0.95, 1.05],
        "buses": [
            {"id": 1, "kind": "slack", "g_sh": 0, "b_sh": 0, "p_load": 0, "q_load": 0},
            {"id": 5, "kind": "load", "g_sh": 0, "b_sh": 0, "p_load": 0.1, "q_load": 0.02},
            {"id": 9, "kind": "load", "g_sh": 0, "b_sh": 0.01, "p_load": 0.1, "q_load": 0.02}
        ],
        "branches": [{"from": 1, "to": 5, "g": 10, "b": -20}, {"from": 5, "to": 9, "g": 10, "b": -20}],
        "devices": [{"node": 9, "kind": "inverter", "s_rated": 0.2, "q_min": 0, "q_max": 0, "area": 1},
                    {"node": 5, "kind": "compensator", "q_min": -0.1, "q_max": 0.1, "area": 0}],
        "areas": [[1, 5], [9]]
    }"#;
    let case = FeederCase::from_json(text).unwrap();
    assert_eq!(case.devices[0].node, 2);
    assert_eq!(case.areas.nodes(0), &[0, 1]);
    assert_eq!(case.areas.boundary(1), &[(1, false)]);
}

#[test]
fn invalid_cases_are_rejected() {
    let net = crate::grid::case33::ieee33().unwrap();
    let overlap = vec![(0..20).collect(), (18..33).collect()];
    assert!(FeederCase::new(net.clone(), vec![], overlap).is_err());
    let gap = vec![(0..18).collect(), (19..33).collect()];
    assert!(FeederCase::new(net.clone(), vec![], gap).is_err());
    let both = vec![
        DeviceSpec::inverter(5, 1.0, 0),
        DeviceSpec::compensator(5, -0.1, 0.1, 0),
    ];
    assert!(FeederCase::new(net.clone(), both, vec![]).is_err());
    let no_device_area = vec![(0..18).collect(), (18..33).collect()];
    assert!(FeederCase::new(net, vec![DeviceSpec::inverter(5, 1.0, 0)], no_device_area).is_err());
}

#[test]
fn profile_csv_round_trip() {
    let case = ieee33_case().unwrap();
    let profile = Profile::synthetic(&case, &ProfileConfig::default(), 11);
    let mut buf = Vec::new();
    profile.write_csv(&mut buf).unwrap();
    let back = Profile::read_csv(buf.as_slice(), &case).unwrap();
    assert_eq!(back, profile);
}

#[test]
fn synthetic_profile_respects_capabilities() {
    let case = ieee33_case().unwrap();
    let profile = Profile::synthetic(&case, &ProfileConfig::default(), 5);
    assert_eq!(profile.len(), DEFAULT_EPISODE_STEPS);
    profile.validate(&case).unwrap();
    // No sun at midnight, some at noon.
    assert!(profile.pv_avail[0].iter().all(|&p| p == 0.0));
    assert!(profile.pv_avail[48][0] > 0.5);
}

proptest! {
    #[test]
    fn mapped_setpoints_are_feasible(
        raw in proptest::collection::vec(-1.5f64..1.5, 4),
        pv_frac in proptest::collection::vec(0.0f64..=1.0, 4),
    ) {
        let case = ieee33_case().unwrap();
        for (d, dev) in case.devices.iter().enumerate() {
            let p = match dev.kind { DeviceKind::Inverter => pv_frac[d] * dev.s_rated, DeviceKind::Compensator => 0.0 };
            let q = dev.map_action(raw[d], p);
            match dev.kind {
                DeviceKind::Inverter => prop_assert!(q * q <= dev.s_rated * dev.s_rated - p * p + 1e-12),
                DeviceKind::Compensator => prop_assert!(dev.q_min <= q && q <= dev.q_max),
            }
        }
    }

    #[test]
    fn cost_is_zero_iff_all_voltages_feasible(v in proptest::collection::vec(0.9f64..1.1, 33)) {
        let case = ieee33_case().unwrap();
        let feasible = v.iter().all(|&x| (0.95..=1.05).contains(&x));
        for a in 0..4 {
            let c = cost(&case.areas, a, 1.0, &v, (0.95, 1.05));
            prop_assert!(c >= 0.0);
            prop_assert_eq!(c == 0.0, feasible);
        }
    }
}
