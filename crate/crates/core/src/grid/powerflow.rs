use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{build_admittance, AdmittanceStructure, GridError, NetworkModel};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

/// Per-bus net injections (generation minus load), per-unit. The slack
/// entry is ignored by the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Injections {
    pub fn zeros(n: usize) -> Self {
        Injections {
            p: vec![0.0; n],
            q: vec![0.0; n],
        }
    }

    /// Injections of the network's nominal loads.
    pub fn from_loads(net: &NetworkModel) -> Self {
        let (p, q) = net.load_injections();
        Injections { p, q }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Sending-end flows `P_ij`, `Q_ij` of each branch, oriented from
    /// `from_bus` to `to_bus`.
    pub branch_p: Vec<f64>,
    pub branch_q: Vec<f64>,
    /// Receiving-end flows `P_ji`, `Q_ji` (leaving `to_bus` toward `from_bus`).
    pub branch_p_rev: Vec<f64>,
    pub branch_q_rev: Vec<f64>,
    /// Computed net injections, including the slack bus.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    /// Total active loss in MW.
    pub p_loss_total: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest absolute mismatch at the final iterate, per-unit.
    pub max_mismatch: f64,
    pub diagnostic: Option<String>,
}

impl PowerFlowSolution {
    pub fn slack_injection(&self, net: &NetworkModel) -> (f64, f64) {
        (self.p_inj[net.slack()], self.q_inj[net.slack()])
    }
}

/// Newton-Raphson solver in polar coordinates bound to one network.
/// Building the admittance matrix once lets episode rollouts reuse it.
#[derive(Debug, Clone)]
pub struct PowerFlowSolver {
    net: NetworkModel,
    y: AdmittanceStructure,
    options: PowerFlowOptions,
}

impl PowerFlowSolver {
    pub fn new(net: NetworkModel) -> Self {
        Self::with_options(net, PowerFlowOptions::default())
    }

    pub fn with_options(net: NetworkModel, options: PowerFlowOptions) -> Self {
        let y = build_admittance(&net);
        PowerFlowSolver { net, y, options }
    }

    pub fn network(&self) -> &NetworkModel {
        &self.net
    }

    pub fn admittance(&self) -> &AdmittanceStructure {
        &self.y
    }

    pub fn options(&self) -> PowerFlowOptions {
        self.options
    }

    pub fn solve(
        &self,
        inj: &Injections,
        start: Option<&PowerFlowSolution>,
    ) -> Result<PowerFlowSolution, GridError> {
        let n = self.net.n_buses();
        if inj.p.len() != n || inj.q.len() != n {
            return Err(GridError::InvalidInput(format!(
                "injections sized {}/{} for a {n}-bus network",
                inj.p.len(),
                inj.q.len()
            )));
        }
        if let Some(k) = inj
            .p
            .iter()
            .chain(&inj.q)
            .position(|v| !v.is_finite())
        {
            return Err(GridError::InvalidInput(format!(
                "non-finite injection at bus {}",
                k % n
            )));
        }
        let slack = self.net.slack();
        let (mut v, mut th) = match start {
            Some(s) if s.v_mag.len() == n && s.converged => (s.v_mag.clone(), s.v_ang.clone()),
            _ => (vec![1.0; n], vec![0.0; n]),
        };
        v[slack] = 1.0;
        th[slack] = 0.0;

        // Unknown ordering: angles of non-slack buses, then magnitudes.
        let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
        let m = pq.len();
        let mut iterations = 0;
        let mut converged = false;
        let mut diagnostic = None;
        let mut max_mismatch = f64::INFINITY;

        while iterations < self.options.max_iter {
            iterations += 1;
            let (p_calc, q_calc) = self.calc_injections(&v, &th);
            let mut rhs = DVector::zeros(2 * m);
            max_mismatch = 0.0;
            for (k, &i) in pq.iter().enumerate() {
                rhs[k] = inj.p[i] - p_calc[i];
                rhs[m + k] = inj.q[i] - q_calc[i];
                max_mismatch = max_mismatch.max(rhs[k].abs()).max(rhs[m + k].abs());
            }
            if !max_mismatch.is_finite() {
                diagnostic = Some("mismatch became non-finite".into());
                break;
            }
            if max_mismatch <= self.options.tolerance {
                converged = true;
                break;
            }
            let jac = self.jacobian(&v, &th, &p_calc, &q_calc, &pq);
            let Some(dx) = jac.lu().solve(&rhs) else {
                diagnostic = Some(format!("singular Jacobian at iteration {iterations}"));
                break;
            };
            for (k, &i) in pq.iter().enumerate() {
                th[i] += dx[k];
                v[i] += dx[m + k];
            }
        }
        if !converged && diagnostic.is_none() {
            diagnostic = Some(format!(
                "no convergence within {} iterations (mismatch {max_mismatch:.3e})",
                self.options.max_iter
            ));
        }
        Ok(self.finish(v, th, converged, iterations, max_mismatch, diagnostic))
    }

    fn calc_injections(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = v.len();
        let (g, b) = (self.y.g_matrix(), self.y.b_matrix());
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let (mut pi, mut qi) = (0.0, 0.0);
            for j in 0..n {
                let (gij, bij) = (g[(i, j)], b[(i, j)]);
                if gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let (s, c) = (th[i] - th[j]).sin_cos();
                pi += v[j] * (gij * c + bij * s);
                qi += v[j] * (gij * s - bij * c);
            }
            p[i] = v[i] * pi;
            q[i] = v[i] * qi;
        }
        (p, q)
    }

    fn jacobian(
        &self,
        v: &[f64],
        th: &[f64],
        p: &[f64],
        q: &[f64],
        pq: &[usize],
    ) -> DMatrix<f64> {
        let m = pq.len();
        let (g, b) = (self.y.g_matrix(), self.y.b_matrix());
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &j) in pq.iter().enumerate() {
                let (gij, bij) = (g[(i, j)], b[(i, j)]);
                if i == j {
                    jac[(r, c)] = -q[i] - bij * v[i] * v[i];
                    jac[(r, m + c)] = p[i] / v[i] + gij * v[i];
                    jac[(m + r, c)] = p[i] - gij * v[i] * v[i];
                    jac[(m + r, m + c)] = q[i] / v[i] - bij * v[i];
                } else {
                    if gij == 0.0 && bij == 0.0 {
                        continue;
                    }
                    let (s, co) = (th[i] - th[j]).sin_cos();
                    let a = gij * s - bij * co;
                    let d = gij * co + bij * s;
                    jac[(r, c)] = v[i] * v[j] * a;
                    jac[(r, m + c)] = v[i] * d;
                    jac[(m + r, c)] = -v[i] * v[j] * d;
                    jac[(m + r, m + c)] = v[i] * a;
                }
            }
        }
        jac
    }

    fn finish(
        &self,
        v: Vec<f64>,
        th: Vec<f64>,
        converged: bool,
        iterations: usize,
        max_mismatch: f64,
        diagnostic: Option<String>,
    ) -> PowerFlowSolution {
        let (p_inj, q_inj) = self.calc_injections(&v, &th);
        let nb = self.net.branches().len();
        let mut branch_p = Vec::with_capacity(nb);
        let mut branch_q = Vec::with_capacity(nb);
        let mut branch_p_rev = Vec::with_capacity(nb);
        let mut branch_q_rev = Vec::with_capacity(nb);
        let mut loss = 0.0;
        for br in self.net.branches() {
            let (pij, qij) = branch_flow(br.g, br.b, v[br.from_bus], v[br.to_bus], th[br.from_bus] - th[br.to_bus]);
            let (pji, qji) = branch_flow(br.g, br.b, v[br.to_bus], v[br.from_bus], th[br.to_bus] - th[br.from_bus]);
            loss += pij + pji;
            branch_p.push(pij);
            branch_q.push(qij);
            branch_p_rev.push(pji);
            branch_q_rev.push(qji);
        }
        for bus in self.net.buses() {
            loss += bus.g_shunt * v[bus.id] * v[bus.id];
        }
        PowerFlowSolution {
            v_mag: v,
            v_ang: th,
            branch_p,
            branch_q,
            branch_p_rev,
            branch_q_rev,
            p_inj,
            q_inj,
            p_loss_total: loss * self.net.base_mva(),
            converged,
            iterations,
            max_mismatch,
            diagnostic,
        }
    }
}

/// Sending-end flow over a series admittance `g + jb` from a bus at
/// `(vi, θi)` to one at `(vj, θj)`, with `theta = θi - θj`.
pub fn branch_flow(g: f64, b: f64, vi: f64, vj: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let p = g * vi * vi - g * vi * vj * c - b * vi * vj * s;
    let q = -b * vi * vi + b * vi * vj * c - g * vi * vj * s;
    (p, q)
}

/// One-shot solve; builds the admittance matrix on every call.
pub fn solve_power_flow(
    net: &NetworkModel,
    inj: &Injections,
    start: Option<&PowerFlowSolution>,
) -> Result<PowerFlowSolution, GridError> {
    PowerFlowSolver::new(net.clone()).solve(inj, start)
}

/// Total active loss in MW of a converged solution.
pub fn total_loss(sol: &PowerFlowSolution, _net: &NetworkModel) -> Result<f64, GridError> {
    if !sol.converged {
        return Err(GridError::Unconverged);
    }
    Ok(sol.p_loss_total)
}
