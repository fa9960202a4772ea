//! Scripted networks for unit tests.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::neural::{Mlp, Module, SquashedGaussianPolicy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Zeroes every parameter and sets the output bias to `c`.
pub fn set_constant(net: &mut Mlp, c: f64) {
    let params = net.params_mut();
    let n = params.len();
    for (k, p) in params.into_iter().enumerate() {
        p.value.fill(0.0);
        if k == n - 1 {
            p.value.fill(c);
        }
    }
}

/// Sets a policy head to the constant `(mu, log_std)` for every input.
pub fn set_policy(pi: &mut SquashedGaussianPolicy, mu: f64, log_std: f64) {
    let params = pi.params_mut();
    let n = params.len();
    for (k, p) in params.into_iter().enumerate() {
        p.value.fill(0.0);
        if k == n - 1 {
            let d = p.value.ncols() / 2;
            for j in 0..d {
                p.value[[0, j]] = mu;
                p.value[[0, d + j]] = log_std;
            }
        }
    }
}

/// Overwrites a `[in, k, k, 1]` network so it computes the piecewise
/// linear interpolant of `f` over input column `col` on `k` equal segments
/// of `[-1, 1]`.
pub fn set_piecewise(net: &mut Mlp, col: usize, f: impl Fn(f64) -> f64) {
    let sizes = net.sizes().to_vec();
    assert_eq!(sizes.len(), 4, "two hidden layers expected");
    let (n_in, k) = (sizes[0], sizes[1]);
    assert_eq!(sizes[2], k);
    let h = 2.0 / k as f64;
    let knots: Vec<f64> = (0..=k).map(|j| -1.0 + h * j as f64).collect();
    let slopes: Vec<f64> = (0..k).map(|j| (f(knots[j + 1]) - f(knots[j])) / h).collect();
    let mut w0 = Array2::zeros((n_in, k));
    let mut b0 = Array2::zeros((1, k));
    for j in 0..k {
        w0[[col, j]] = 1.0;
        b0[[0, j]] = -knots[j];
    }
    let w1 = Array2::eye(k);
    let mut w2 = Array2::zeros((k, 1));
    for j in 0..k {
        w2[[j, 0]] = if j == 0 { slopes[0] } else { slopes[j] - slopes[j - 1] };
    }
    let b2 = Array2::from_elem((1, 1), f(-1.0));
    let values = [w0, b0, w1, Array2::zeros((1, k)), w2, b2];
    for (p, v) in net.params_mut().into_iter().zip(values) {
        p.value = v;
    }
}
