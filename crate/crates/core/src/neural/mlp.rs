use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::NeuralError;

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Array2<f64>) -> Self {
        Param {
            name: name.into(),
            value,
        }
    }
}

/// Anything owning an ordered list of parameters.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Target update `self <- eta * self + (1 - eta) * online`.
    fn polyak_from(&mut self, online: &Self, eta: f64) -> Result<(), NeuralError>
    where
        Self: Sized,
    {
        let src = online.params();
        polyak_update(&mut self.params_mut(), &src, eta)
    }
}

/// `target <- eta * target + (1 - eta) * online`, elementwise.
pub fn polyak_update(
    target: &mut [&mut Param],
    online: &[&Param],
    eta: f64,
) -> Result<(), NeuralError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(NeuralError::Shape(format!("eta {eta} outside [0, 1]")));
    }
    if target.len() != online.len() {
        return Err(NeuralError::Shape(format!(
            "{} target tensors vs {} online tensors",
            target.len(),
            online.len()
        )));
    }
    for (t, o) in target.iter_mut().zip(online) {
        if t.value.dim() != o.value.dim() {
            return Err(NeuralError::Shape(format!(
                "{}: {:?} vs {:?}",
                t.name,
                t.value.dim(),
                o.value.dim()
            )));
        }
        t.value.zip_mut_with(&o.value, |t, &o| *t = eta * *t + (1.0 - eta) * o);
    }
    Ok(())
}

/// Parameters of a module bound onto a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    pub vars: Vec<Var>,
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, params: &[&Param], trainable: bool) -> Self {
        Bound {
            vars: params
                .iter()
                .map(|p| tape.leaf(p.value.clone(), trainable))
                .collect(),
            names: params.iter().map(|p| p.name.clone()).collect(),
            shapes: params.iter().map(|p| p.value.dim()).collect(),
        }
    }

    /// Parameter gradients in binding order, rejecting non-finite values.
    pub fn grads(&self, grads: &Gradients) -> Result<Vec<Array2<f64>>, NeuralError> {
        self.vars
            .iter()
            .zip(&self.names)
            .zip(&self.shapes)
            .map(|((&v, name), &shape)| {
                let g = grads.of(v, shape);
                if g.iter().all(|x| x.is_finite()) {
                    Ok(g)
                } else {
                    Err(NeuralError::NonFinite { name: name.clone() })
                }
            })
            .collect()
    }
}

/// Fully connected network: ReLU on hidden layers, identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Param>,
    biases: Vec<Param>,
}

impl Mlp {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases.
    pub fn new<R: Rng + ?Sized>(name: &str, sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let mut draw = |r: usize, c: usize| {
                Array2::from_shape_fn((r, c), |_| rng.gen_range(-bound..bound))
            };
            weights.push(Param::new(format!("{name}.{l}.w"), draw(w[0], w[1])));
            biases.push(Param::new(format!("{name}.{l}.b"), draw(1, w[1])));
        }
        Mlp {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut h = x.dot(&self.weights[0].value) + &self.biases[0].value;
        for l in 1..=last {
            h.mapv_inplace(|v| v.max(0.0));
            h = h.dot(&self.weights[l].value) + &self.biases[l].value;
        }
        h
    }

    /// Records the forward pass; returns the output and the bound
    /// parameters (trainable or constant).
    pub fn record(&self, tape: &mut Tape, x: Var, trainable: bool) -> (Var, Bound) {
        let bound = Bound::bind(tape, &self.params(), trainable);
        let out = self.record_with(tape, x, &bound);
        (out, bound)
    }

    /// Records the forward pass with parameters already on the tape.
    pub fn record_with(&self, tape: &mut Tape, x: Var, bound: &Bound) -> Var {
        let n = self.weights.len();
        let mut h = x;
        for l in 0..n {
            if l > 0 {
                h = tape.relu(h);
            }
            h = tape.matmul(h, bound.vars[2 * l]);
            h = tape.add_row(h, bound.vars[2 * l + 1]);
        }
        h
    }
}

impl Module for Mlp {
    /// Interleaved `w0, b0, w1, b1, ...`.
    fn params(&self) -> Vec<&Param> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}
