//! Balanced distribution-network model and Newton-Raphson AC power flow.

mod admittance;
pub mod case33;
mod network;
mod powerflow;

use rand::Rng;
use thiserror::Error;

pub use admittance::{build_admittance, AdmittanceStructure};
pub use network::{Branch, Bus, BusKind, NetworkModel};
pub use powerflow::{
    branch_flow, solve_power_flow, total_loss, Injections, PowerFlowOptions, PowerFlowSolution,
    PowerFlowSolver, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("duplicate branch between buses {from} and {to}")]
    DuplicateBranch { from: usize, to: usize },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("branch references unknown bus {0}")]
    UnknownBus(usize),
    #[error("branch connects bus {0} to itself")]
    SelfLoop(usize),
    #[error("network is disconnected: bus {bus} is unreachable from the slack")]
    Disconnected { bus: usize },
    #[error("network has no slack bus")]
    NoSlack,
    #[error("network has {0} slack buses, expected exactly one")]
    MultipleSlack(usize),
    #[error("power flow solution did not converge")]
    Unconverged,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Random radial feeder with `n` buses rooted at bus 0. Branch impedances
/// and loads are drawn from ranges typical of a 1 MVA-base medium-voltage
/// feeder, light enough that Newton-Raphson converges from a flat start.
pub fn random_radial<R: Rng + ?Sized>(rng: &mut R, n: usize) -> NetworkModel {
    assert!(n >= 2, "a radial feeder needs at least two buses");
    let mut buses = vec![Bus::slack(0)];
    let mut branches = Vec::with_capacity(n - 1);
    for k in 1..n {
        let parent = rng.gen_range(0..k);
        let r = rng.gen_range(0.001..0.01);
        let x = r * rng.gen_range(0.5..2.0);
        branches.push(Branch::from_impedance(parent, k, r, x));
        let mut bus = Bus::load(k, rng.gen_range(0.0..0.15), rng.gen_range(-0.02..0.08));
        if rng.gen_bool(0.2) {
            bus.b_shunt = rng.gen_range(0.0..0.02);
        }
        buses.push(bus);
    }
    NetworkModel::new(1.0, (0.95, 1.05), buses, branches).expect("generated feeder is valid")
}
