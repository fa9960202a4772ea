use std::collections::HashMap;

use nalgebra::DMatrix;

use super::NetworkModel;

/// Bus admittance matrix split into conductance and susceptance parts,
/// together with per-branch series admittances.
#[derive(Debug, Clone)]
pub struct AdmittanceStructure {
    g: DMatrix<f64>,
    b: DMatrix<f64>,
    branch: HashMap<(usize, usize), (f64, f64)>,
}

impl AdmittanceStructure {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Series admittance `(G_ij, B_ij)` of the branch joining `i` and `j`,
    /// in either orientation.
    pub fn branch(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        self.branch.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn n_branches(&self) -> usize {
        self.branch.len()
    }

    /// Bus-matrix entry `Y_ij = G + jB`.
    pub fn y(&self, i: usize, j: usize) -> (f64, f64) {
        (self.g[(i, j)], self.b[(i, j)])
    }

    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Assembles the bus admittance matrix. Network validation (duplicate
/// branches, connectivity) happens when the [`NetworkModel`] is built, so
/// this cannot fail.
pub fn build_admittance(net: &NetworkModel) -> AdmittanceStructure {
    let n = net.n_buses();
    let mut g = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    let mut branch = HashMap::with_capacity(net.branches().len());
    for bus in net.buses() {
        g[(bus.id, bus.id)] += bus.g_shunt;
        b[(bus.id, bus.id)] += bus.b_shunt;
    }
    for br in net.branches() {
        let (i, j) = (br.from_bus, br.to_bus);
        g[(i, i)] += br.g;
        b[(i, i)] += br.b;
        g[(j, j)] += br.g;
        b[(j, j)] += br.b;
        g[(i, j)] -= br.g;
        b[(i, j)] -= br.b;
        g[(j, i)] -= br.g;
        b[(j, i)] -= br.b;
        branch.insert((i.min(j), i.max(j)), (br.g, br.b));
    }
    AdmittanceStructure { g, b, branch }
}
