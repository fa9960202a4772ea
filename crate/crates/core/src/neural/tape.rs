//! Reverse-mode differentiation over a recorded tape of 2-D arrays.

use ndarray::{s, Array2, Axis, Zip};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// A computation record. Values are evaluated eagerly as ops are added;
/// [`Tape::backward`] then walks the record in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded value that needs
/// one.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of `v`; zeros if nothing flowed into it.
    pub fn of(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(shape))
    }

    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that gradients flow into (a trainable parameter or an input
    /// being differentiated).
    pub fn var(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A value treated as a constant.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Array2<f64>, needs_grad: bool) -> Var {
        self.push(value, Op::Leaf, needs_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a, row), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        let ng = self.ng(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        let ng = self.ng(a);
        self.push(v, Op::Exp(a), ng)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        let ng = self.ng(a);
        self.push(v, Op::Softplus(a), ng)
    }

    /// Elementwise clamp; the gradient is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        let ng = self.ng(a);
        self.push(v, Op::Clamp(a, lo, hi), ng)
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.min(y));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Min(a, b), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Array2::from_elem((1, 1), x.sum() / x.len() as f64);
        let ng = self.ng(a);
        self.push(v, Op::Mean(a), ng)
    }

    /// Per-row sums as an `n x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a);
        self.push(v, Op::RowSum(a), ng)
    }

    /// Joins values with equal row counts side by side.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat needs equal row counts");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::Concat(parts.to_vec()), ng)
    }

    /// Columns `start..end`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(v, Op::Slice(a, start, end), ng)
    }

    /// Gradients of the scalar `loss` (a 1x1 node).
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Array2<f64>,
        g: &Array2<f64>,
        grads: &mut [Option<Array2<f64>>],
    ) {
        let mut acc = |v: Var, d: Array2<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot => *slot = Some(d),
            }
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(a) {
                    acc(a, g.dot(&self.value(b).t()));
                }
                if self.ng(b) {
                    acc(b, self.value(a).t().dot(g));
                }
            }
            Op::AddRow(a, row) => {
                acc(a, g.clone());
                if self.ng(row) {
                    acc(row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                if self.ng(b) {
                    acc(b, -g);
                }
            }
            Op::Mul(a, b) => {
                if self.ng(a) {
                    acc(a, g * self.value(b));
                }
                if self.ng(b) {
                    acc(b, g * self.value(a));
                }
            }
            Op::Scale(a, c) => acc(a, g * c),
            Op::AddScalar(a) => acc(a, g.clone()),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                acc(a, d);
            }
            Op::Tanh(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(out).for_each(|d, &y| *d *= 1.0 - y * y);
                acc(a, d);
            }
            Op::Exp(a) => acc(a, g * out),
            Op::Softplus(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(a))
                    .for_each(|d, &x| *d *= sigmoid(x));
                acc(a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(a))
                    .for_each(|d, &x| {
                        if x < lo || x > hi {
                            *d = 0.0
                        }
                    });
                acc(a, d);
            }
            Op::Min(a, b) => {
                let mut da = g.clone();
                let mut db = g.clone();
                Zip::from(&mut da)
                    .and(&mut db)
                    .and(self.value(a))
                    .and(self.value(b))
                    .for_each(|da, db, &x, &y| {
                        if x <= y {
                            *db = 0.0
                        } else {
                            *da = 0.0
                        }
                    });
                acc(a, da);
                acc(b, db);
            }
            Op::Sum(a) => acc(a, Array2::from_elem(self.value(a).dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let x = self.value(a);
                acc(a, Array2::from_elem(x.dim(), g[[0, 0]] / x.len() as f64));
            }
            Op::RowSum(a) => {
                let dim = self.value(a).dim();
                acc(a, g.broadcast(dim).expect("column broadcast").to_owned());
            }
            Op::Concat(ref parts) => {
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    if self.ng(p) {
                        acc(p, g.slice(s![.., col..col + w]).to_owned());
                    }
                    col += w;
                }
            }
            Op::Slice(a, start, end) => {
                if self.ng(a) {
                    let mut d = Array2::zeros(self.value(a).dim());
                    d.slice_mut(s![.., start..end]).assign(g);
                    acc(a, d);
                }
            }
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
