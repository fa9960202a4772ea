//! The Baran-Wu 33-bus radial distribution feeder (12.66 kV).
//!
//! Bus numbers in the table are the customary 1-based labels; the built
//! network uses ids `0..33` with bus 1 (id 0) as the substation slack.

use super::{Branch, Bus, GridError, NetworkModel};

pub const BASE_KV: f64 = 12.66;

/// `(from, to, r_ohm, x_ohm, p_kw, q_kvar)` with the load at `to`.
pub const BRANCHES: [(usize, usize, f64, f64, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470, 100.0, 60.0),
    (2, 3, 0.4930, 0.2511, 90.0, 40.0),
    (3, 4, 0.3660, 0.1864, 120.0, 80.0),
    (4, 5, 0.3811, 0.1941, 60.0, 30.0),
    (5, 6, 0.8190, 0.7070, 60.0, 20.0),
    (6, 7, 0.1872, 0.6188, 200.0, 100.0),
    (7, 8, 0.7114, 0.2351, 200.0, 100.0),
    (8, 9, 1.0300, 0.7400, 60.0, 20.0),
    (9, 10, 1.0440, 0.7400, 60.0, 20.0),
    (10, 11, 0.1966, 0.0650, 45.0, 30.0),
    (11, 12, 0.3744, 0.1238, 60.0, 35.0),
    (12, 13, 1.4680, 1.1550, 60.0, 35.0),
    (13, 14, 0.5416, 0.7129, 120.0, 80.0),
    (14, 15, 0.5910, 0.5260, 60.0, 10.0),
    (15, 16, 0.7463, 0.5450, 60.0, 20.0),
    (16, 17, 1.2890, 1.7210, 60.0, 20.0),
    (17, 18, 0.7320, 0.5740, 90.0, 40.0),
    (2, 19, 0.1640, 0.1565, 90.0, 40.0),
    (19, 20, 1.5042, 1.3554, 90.0, 40.0),
    (20, 21, 0.4095, 0.4784, 90.0, 40.0),
    (21, 22, 0.7089, 0.9373, 90.0, 40.0),
    (3, 23, 0.4512, 0.3083, 90.0, 50.0),
    (23, 24, 0.8980, 0.7091, 420.0, 200.0),
    (24, 25, 0.8960, 0.7011, 420.0, 200.0),
    (6, 26, 0.2030, 0.1034, 60.0, 25.0),
    (26, 27, 0.2842, 0.1447, 60.0, 25.0),
    (27, 28, 1.0590, 0.9337, 60.0, 20.0),
    (28, 29, 0.8042, 0.7006, 120.0, 70.0),
    (29, 30, 0.5075, 0.2585, 200.0, 600.0),
    (30, 31, 0.9744, 0.9630, 150.0, 70.0),
    (31, 32, 0.3105, 0.3619, 210.0, 100.0),
    (32, 33, 0.3410, 0.5302, 60.0, 40.0),
];

/// Builds the feeder on a 1 MVA base with voltage limits `[0.95, 1.05]`.
pub fn ieee33() -> Result<NetworkModel, GridError> {
    let base_mva = 1.0;
    let z_base = BASE_KV * BASE_KV / base_mva;
    let mut buses = vec![Bus::slack(0)];
    let mut branches = Vec::with_capacity(BRANCHES.len());
    for &(f, t, r, x, p_kw, q_kvar) in &BRANCHES {
        buses.push(Bus::load(t - 1, p_kw / 1000.0 / base_mva, q_kvar / 1000.0 / base_mva));
        branches.push(Branch::from_impedance(f - 1, t - 1, r / z_base, x / z_base));
    }
    NetworkModel::new(base_mva, (0.95, 1.05), buses, branches)
}
