use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tape::{softplus, Tape, Var};
use super::{Bound, Mlp, Module, NeuralError, Param};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `tanh(mu + sigma * xi)` with state-dependent `mu` and `log sigma` from a
/// shared trunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquashedGaussianPolicy {
    trunk: Mlp,
    act_dim: usize,
}

/// A recorded policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyVars {
    pub action: Var,
    /// `n x 1` log-densities of the squashed actions.
    pub log_prob: Var,
    pub bound: Bound,
}

impl SquashedGaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        obs_dim: usize,
        hidden: &[usize],
        act_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        SquashedGaussianPolicy {
            trunk: Mlp::new(name, &sizes, rng),
            act_dim,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    /// `(mu, clamped log sigma)` for a batch of observations.
    pub fn head(&self, obs: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>), NeuralError> {
        let out = self.trunk.forward(obs);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::NonFinite {
                name: format!("{} output", self.trunk.params()[0].name),
            });
        }
        let d = self.act_dim;
        let mu = out.slice(s![.., ..d]).to_owned();
        let log_std = out
            .slice(s![.., d..])
            .mapv(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Ok((mu, log_std))
    }

    /// Squashed actions and their log-densities for supplied noise.
    pub fn sample_with(
        &self,
        obs: &Array2<f64>,
        xi: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array1<f64>), NeuralError> {
        let (mu, log_std) = self.head(obs)?;
        let u = &mu + &(log_std.mapv(f64::exp) * xi);
        let a = u.mapv(f64::tanh);
        let mut lp = Array2::zeros(u.dim());
        ndarray::Zip::from(&mut lp)
            .and(&u)
            .and(&log_std)
            .and(xi)
            .for_each(|lp, &u, &ls, &xi| *lp = gaussian_term(xi, ls) - tanh_correction(u));
        Ok((a, lp.sum_axis(Axis(1))))
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &Array2<f64>,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Array1<f64>), NeuralError> {
        let xi = standard_normal((obs.nrows(), self.act_dim), rng);
        self.sample_with(obs, &xi)
    }

    /// Deterministic mode `tanh(mu)`.
    pub fn mode(&self, obs: &Array2<f64>) -> Result<Array2<f64>, NeuralError> {
        Ok(self.head(obs)?.0.mapv(f64::tanh))
    }

    /// One observation; `stochastic = false` gives the mode.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        stochastic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>, NeuralError> {
        let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec())
            .map_err(|e| NeuralError::Shape(e.to_string()))?;
        let a = if stochastic {
            self.sample(&x, rng)?.0
        } else {
            self.mode(&x)?
        };
        Ok(a.into_raw_vec_and_offset().0)
    }

    /// Records a reparameterized sample; gradients reach the trunk
    /// parameters when `trainable`.
    pub fn record(&self, tape: &mut Tape, obs: Var, xi: &Array2<f64>, trainable: bool) -> PolicyVars {
        let (out, bound) = self.trunk.record(tape, obs, trainable);
        let d = self.act_dim;
        let mu = tape.slice(out, 0, d);
        let raw = tape.slice(out, d, 2 * d);
        let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(log_std);
        let noise = tape.constant(xi.clone());
        let spread = tape.mul(std, noise);
        let u = tape.add(mu, spread);
        let action = tape.tanh(u);
        // log N(xi) - log sigma - sum 2(ln 2 - u - softplus(-2u))
        let k = tape.constant(xi.mapv(|x| -0.5 * x * x - 0.5 * (2.0 * PI).ln() - 2.0 * LN_2));
        let neg2u = tape.scale(u, -2.0);
        let sp = tape.softplus(neg2u);
        let sp2 = tape.scale(sp, 2.0);
        let u2 = tape.scale(u, 2.0);
        let t = tape.sub(k, log_std);
        let t = tape.add(t, u2);
        let t = tape.add(t, sp2);
        let log_prob = tape.row_sum(t);
        PolicyVars {
            action,
            log_prob,
            bound,
        }
    }
}

impl Module for SquashedGaussianPolicy {
    fn params(&self) -> Vec<&Param> {
        self.trunk.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.trunk.params_mut()
    }
}

fn gaussian_term(xi: f64, log_std: f64) -> f64 {
    -0.5 * xi * xi - log_std - 0.5 * (2.0 * PI).ln()
}

/// `log(1 - tanh(u)^2)` in the overflow-free form `2(ln 2 - u - softplus(-2u))`.
pub fn tanh_correction(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

pub fn standard_normal<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}
