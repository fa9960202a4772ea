use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{vvr, DeviceSpec};
use crate::grid::{Injections, PowerFlowSolution, PowerFlowSolver};
use crate::seed::{rng, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VvoOptions {
    /// Weight on the voltage violation rate, MW per p.u.^2.
    pub penalty: f64,
    /// Random restarts in addition to the zero-output start.
    pub restarts: usize,
    pub max_iter: usize,
    /// Projected-gradient tolerance in normalized coordinates.
    pub tolerance: f64,
    /// Finite-difference step in normalized coordinates.
    pub fd_step: f64,
    /// Grid points per axis for the refinement pass on at most 3
    /// variables.
    pub grid_points: [usize; 3],
    pub seed: u64,
}

impl Default for VvoOptions {
    fn default() -> Self {
        VvoOptions {
            penalty: 1e4,
            restarts: 2,
            max_iter: 60,
            tolerance: 1e-7,
            fd_step: 1e-5,
            grid_points: [401, 61, 21],
            seed: 0,
        }
    }
}

/// One operating point to optimize: fixed injections (loads and PV active
/// output, devices at zero reactive output) and the devices' active
/// outputs that bound their reactive ranges.
#[derive(Debug, Clone)]
pub struct VvoProblem<'a> {
    pub base: Injections,
    pub devices: &'a [DeviceSpec],
    pub p_gen: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Normalized setpoints in `[-1, 1]`, one per device.
    pub setpoints: Vec<f64>,
    /// Reactive outputs, p.u.
    pub q: Vec<f64>,
    pub loss_mw: f64,
    pub vvr: f64,
    /// Objective evaluations (power-flow solves).
    pub iterations: usize,
    pub converged: bool,
}

impl<'a> VvoProblem<'a> {
    pub fn q_of(&self, a: &[f64]) -> Vec<f64> {
        self.devices
            .iter()
            .zip(a)
            .zip(&self.p_gen)
            .map(|((d, &a), &p)| d.map_action(a, p))
            .collect()
    }

    pub fn injections(&self, a: &[f64]) -> Injections {
        let mut inj = self.base.clone();
        for (d, q) in self.devices.iter().zip(self.q_of(a)) {
            inj.q[d.node] += q;
        }
        inj
    }
}

/// Objective evaluator with a warm-start cache.
struct Evaluator<'p, 'a> {
    solver: &'p PowerFlowSolver,
    problem: &'p VvoProblem<'a>,
    penalty: f64,
    warm: Option<PowerFlowSolution>,
    count: usize,
}

impl Evaluator<'_, '_> {
    fn solve(&mut self, a: &[f64]) -> Option<PowerFlowSolution> {
        self.count += 1;
        let sol = self
            .solver
            .solve(&self.problem.injections(a), self.warm.as_ref())
            .ok()?;
        if !sol.converged {
            return None;
        }
        if self.warm.is_none() {
            self.warm = Some(sol.clone());
        }
        Some(sol)
    }

    fn objective(&mut self, a: &[f64]) -> f64 {
        match self.solve(a) {
            Some(sol) => {
                let all: Vec<usize> = (0..sol.v_mag.len()).collect();
                let limits = self.solver.network().v_limits();
                sol.p_loss_total + self.penalty * vvr(&all, &sol.v_mag, limits)
            }
            None => f64::INFINITY,
        }
    }

    fn gradient(&mut self, a: &[f64], h: f64) -> Vec<f64> {
        (0..a.len())
            .map(|k| {
                let mut hi = a.to_vec();
                let mut lo = a.to_vec();
                hi[k] = (a[k] + h).min(1.0);
                lo[k] = (a[k] - h).max(-1.0);
                let span = hi[k] - lo[k];
                (self.objective(&hi) - self.objective(&lo)) / span
            })
            .collect()
    }
}

fn project(a: &mut [f64]) {
    for v in a {
        *v = v.clamp(-1.0, 1.0);
    }
}

/// Components of the gradient that can still move inside the box.
fn free_gradient(a: &[f64], g: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(g)
        .map(|(&x, &g)| {
            if (x >= 1.0 && g < 0.0) || (x <= -1.0 && g > 0.0) {
                0.0
            } else {
                g
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projected BFGS from `start`; returns the best point and objective.
fn descend(ev: &mut Evaluator, start: Vec<f64>, opt: &VvoOptions) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut x = start;
    project(&mut x);
    let mut f = ev.objective(&x);
    if !f.is_finite() {
        return (x, f);
    }
    let mut h = identity(n);
    let mut g = ev.gradient(&x, opt.fd_step);
    for _ in 0..opt.max_iter {
        let gf = free_gradient(&x, &g);
        if norm(&gf) < opt.tolerance {
            break;
        }
        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i][j] * gf[j]).sum::<f64>())
            .collect();
        for i in 0..n {
            if gf[i] == 0.0 {
                dir[i] = 0.0;
            }
        }
        if dir.iter().zip(&gf).map(|(d, g)| d * g).sum::<f64>() >= 0.0 {
            h = identity(n);
            dir = gf.iter().map(|g| -g).collect();
        }
        let Some((x_new, f_new)) = line_search(ev, &x, f, &dir, &gf) else {
            if h != identity(n) {
                h = identity(n);
                continue;
            }
            break;
        };
        let g_new = ev.gradient(&x_new, opt.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        bfgs_update(&mut h, &s, &y);
        let improvement = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        if norm(&s) < 1e-10 || improvement < 1e-13 {
            break;
        }
    }
    (x, f)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn line_search(
    ev: &mut Evaluator,
    x: &[f64],
    f: f64,
    dir: &[f64],
    g: &[f64],
) -> Option<(Vec<f64>, f64)> {
    let mut t = 1.0;
    for _ in 0..30 {
        let mut cand: Vec<f64> = x.iter().zip(dir).map(|(x, d)| x + t * d).collect();
        project(&mut cand);
        let step: f64 = cand.iter().zip(x).zip(g).map(|((c, x), g)| (c - x) * g).sum();
        let fc = ev.objective(&cand);
        if fc.is_finite() && fc <= f + 1e-4 * step && fc < f {
            return Some((cand, fc));
        }
        t *= 0.5;
    }
    None
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64]) {
    let n = s.len();
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    if sy <= 1e-14 {
        return;
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Best grid point on `[-1, 1]^n` for `n <= 3`.
fn grid_search(ev: &mut Evaluator, n: usize, points: usize) -> (Vec<f64>, f64) {
    let axis: Vec<f64> = (0..points)
        .map(|k| -1.0 + 2.0 * k as f64 / (points - 1) as f64)
        .collect();
    let mut best = (vec![0.0; n], f64::INFINITY);
    let total = points.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let a: Vec<f64> = (0..n)
            .map(|_| {
                let v = axis[rem % points];
                rem /= points;
                v
            })
            .collect();
        let f = ev.objective(&a);
        if f < best.1 {
            best = (a, f);
        }
    }
    best
}

/// Minimizes loss plus penalized voltage violation over the devices'
/// reactive setpoints, evaluating every candidate with `solver`.
pub fn vvo_solve(solver: &PowerFlowSolver, problem: &VvoProblem, opt: &VvoOptions) -> OracleResult {
    let n = problem.devices.len();
    let mut ev = Evaluator {
        solver,
        problem,
        penalty: opt.penalty,
        warm: None,
        count: 0,
    };
    // Zero reactive output as the first start.
    let zero: Vec<f64> = problem
        .devices
        .iter()
        .zip(&problem.p_gen)
        .map(|(d, &p)| d.normalize(0.0, p))
        .collect();
    let mut best = (zero.clone(), ev.objective(&zero));
    if n > 0 {
        let mut starts = vec![zero];
        let mut r = rng(opt.seed, streams::PERTURBATION);
        for _ in 0..opt.restarts {
            starts.push((0..n).map(|_| r.gen_range(-1.0..1.0)).collect());
        }
        if n <= 3 {
            let (a, f) = grid_search(&mut ev, n, opt.grid_points[n - 1].max(2));
            if f < best.1 {
                best = (a.clone(), f);
            }
            starts.push(a);
        }
        for s in starts {
            let (a, f) = descend(&mut ev, s, opt);
            if f < best.1 {
                best = (a, f);
            }
        }
    }
    finish(solver, problem, best.0, ev.count)
}

/// Scores setpoints on `solver`'s network.
pub fn evaluate_setpoints(
    solver: &PowerFlowSolver,
    problem: &VvoProblem,
    setpoints: Vec<f64>,
) -> OracleResult {
    finish(solver, problem, setpoints, 0)
}

fn finish(
    solver: &PowerFlowSolver,
    problem: &VvoProblem,
    setpoints: Vec<f64>,
    evaluations: usize,
) -> OracleResult {
    let q = problem.q_of(&setpoints);
    match solver.solve(&problem.injections(&setpoints), None) {
        Ok(sol) if sol.converged => {
            let all: Vec<usize> = (0..sol.v_mag.len()).collect();
            OracleResult {
                vvr: vvr(&all, &sol.v_mag, solver.network().v_limits()),
                loss_mw: sol.p_loss_total,
                setpoints,
                q,
                iterations: evaluations + 1,
                converged: true,
            }
        }
        _ => OracleResult {
            setpoints,
            q,
            loss_mw: f64::INFINITY,
            vvr: f64::INFINITY,
            iterations: evaluations + 1,
            converged: false,
        },
    }
}
