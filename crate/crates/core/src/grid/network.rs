use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Load,
}

/// A network node. Electrical quantities are per-unit on the network base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default, rename = "g_sh")]
    pub g_shunt: f64,
    #[serde(default, rename = "b_sh")]
    pub b_shunt: f64,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
}

impl Bus {
    pub fn load(id: usize, p_load: f64, q_load: f64) -> Self {
        Bus {
            id,
            kind: BusKind::Load,
            g_shunt: 0.0,
            b_shunt: 0.0,
            p_load,
            q_load,
        }
    }

    pub fn slack(id: usize) -> Self {
        Bus {
            id,
            kind: BusKind::Slack,
            g_shunt: 0.0,
            b_shunt: 0.0,
            p_load: 0.0,
            q_load: 0.0,
        }
    }
}

/// Series branch admittance `g + jb` between two buses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    #[serde(rename = "from")]
    pub from_bus: usize,
    #[serde(rename = "to")]
    pub to_bus: usize,
    pub g: f64,
    pub b: f64,
}

impl Branch {
    pub fn new(from_bus: usize, to_bus: usize, g: f64, b: f64) -> Self {
        Branch {
            from_bus,
            to_bus,
            g,
            b,
        }
    }

    /// Branch from series impedance `r + jx` (per-unit).
    pub fn from_impedance(from_bus: usize, to_bus: usize, r: f64, x: f64) -> Self {
        let d = r * r + x * x;
        Branch::new(from_bus, to_bus, r / d, -x / d)
    }
}

/// A validated balanced distribution network.
///
/// Buses are stored in id order and indexed `0..n` internally; branch
/// endpoints are rewritten to those positional indices on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct NetworkModel {
    base_mva: f64,
    v_limits: (f64, f64),
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    slack: usize,
    labels: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawNetwork {
    base_mva: f64,
    v_limits: [f64; 2],
    buses: Vec<Bus>,
    branches: Vec<Branch>,
}

impl TryFrom<RawNetwork> for NetworkModel {
    type Error = GridError;

    fn try_from(raw: RawNetwork) -> Result<Self, Self::Error> {
        NetworkModel::new(
            raw.base_mva,
            (raw.v_limits[0], raw.v_limits[1]),
            raw.buses,
            raw.branches,
        )
    }
}

impl From<NetworkModel> for RawNetwork {
    fn from(net: NetworkModel) -> Self {
        let labels = net.labels;
        RawNetwork {
            base_mva: net.base_mva,
            v_limits: [net.v_limits.0, net.v_limits.1],
            buses: net
                .buses
                .into_iter()
                .map(|b| Bus { id: labels[b.id], ..b })
                .collect(),
            branches: net
                .branches
                .into_iter()
                .map(|br| Branch::new(labels[br.from_bus], labels[br.to_bus], br.g, br.b))
                .collect(),
        }
    }
}

impl NetworkModel {
    /// Validates and normalizes a network. Bus ids may be arbitrary but
    /// unique; they are renumbered to contiguous positions in id order.
    pub fn new(
        base_mva: f64,
        v_limits: (f64, f64),
        mut buses: Vec<Bus>,
        branches: Vec<Branch>,
    ) -> Result<Self, GridError> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(GridError::InvalidInput(format!(
                "base_mva must be positive, got {base_mva}"
            )));
        }
        let (lo, hi) = v_limits;
        if !(lo < 1.0 && 1.0 < hi) {
            return Err(GridError::InvalidInput(format!(
                "voltage limits must bracket 1.0 p.u., got [{lo}, {hi}]"
            )));
        }
        if buses.is_empty() {
            return Err(GridError::InvalidInput("network has no buses".into()));
        }
        buses.sort_by_key(|b| b.id);
        let mut position = BTreeMap::new();
        for (pos, bus) in buses.iter().enumerate() {
            if position.insert(bus.id, pos).is_some() {
                return Err(GridError::DuplicateBus(bus.id));
            }
            for (name, v) in [
                ("g_sh", bus.g_shunt),
                ("b_sh", bus.b_shunt),
                ("p_load", bus.p_load),
                ("q_load", bus.q_load),
            ] {
                if !v.is_finite() {
                    return Err(GridError::InvalidInput(format!(
                        "bus {}: {name} is not finite",
                        bus.id
                    )));
                }
            }
        }
        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        let slack = match slacks.as_slice() {
            [s] => *s,
            [] => return Err(GridError::NoSlack),
            _ => return Err(GridError::MultipleSlack(slacks.len())),
        };

        let mut seen = HashSet::new();
        let mut mapped = Vec::with_capacity(branches.len());
        for br in branches {
            let lookup = |id: usize| {
                position
                    .get(&id)
                    .copied()
                    .ok_or(GridError::UnknownBus(id))
            };
            let (f, t) = (lookup(br.from_bus)?, lookup(br.to_bus)?);
            if f == t {
                return Err(GridError::SelfLoop(br.from_bus));
            }
            if !seen.insert((f.min(t), f.max(t))) {
                return Err(GridError::DuplicateBranch {
                    from: br.from_bus,
                    to: br.to_bus,
                });
            }
            if !(br.g.is_finite() && br.b.is_finite()) || br.g < 0.0 {
                return Err(GridError::InvalidInput(format!(
                    "branch {}-{}: admittance must be finite with g >= 0",
                    br.from_bus, br.to_bus
                )));
            }
            mapped.push(Branch::new(f, t, br.g, br.b));
        }
        let labels = buses.iter().map(|b| b.id).collect();
        for (pos, bus) in buses.iter_mut().enumerate() {
            bus.id = pos;
        }
        let net = NetworkModel {
            base_mva,
            v_limits,
            buses,
            branches: mapped,
            slack,
            labels,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<(), GridError> {
        let adj = self.adjacency();
        let mut visited = vec![false; self.n_buses()];
        let mut stack = vec![self.slack];
        visited[self.slack] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    stack.push(v);
                }
            }
        }
        match visited.iter().position(|v| !v) {
            Some(bus) => Err(GridError::Disconnected { bus }),
            None => Ok(()),
        }
    }

    /// Neighbour lists: `adj[u]` holds `(v, branch index)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_buses()];
        for (k, br) in self.branches.iter().enumerate() {
            adj[br.from_bus].push((br.to_bus, k));
            adj[br.to_bus].push((br.from_bus, k));
        }
        adj
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn v_limits(&self) -> (f64, f64) {
        self.v_limits
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    /// Original id of the bus at position `index`.
    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    /// Position of the bus with original id `label`.
    pub fn index_of(&self, label: usize) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn is_radial(&self) -> bool {
        self.branches.len() + 1 == self.buses.len()
    }

    /// Net injections `(P, Q)` of the nominal loads, i.e. `-load` per bus.
    pub fn load_injections(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.buses.iter().map(|b| -b.p_load).collect();
        let q = self.buses.iter().map(|b| -b.q_load).collect();
        (p, q)
    }

    pub fn total_load(&self) -> (f64, f64) {
        self.buses
            .iter()
            .fold((0.0, 0.0), |(p, q), b| (p + b.p_load, q + b.q_load))
    }

    /// Copy of this network with every branch admittance scaled by the
    /// matching factor.
    pub fn with_scaled_admittances(&self, factors: &[f64]) -> Result<Self, GridError> {
        if factors.len() != self.branches.len() {
            return Err(GridError::InvalidInput(format!(
                "expected {} admittance factors, got {}",
                self.branches.len(),
                factors.len()
            )));
        }
        let mut out = self.clone();
        for (br, &f) in out.branches.iter_mut().zip(factors) {
            if !(f.is_finite() && f > 0.0) {
                return Err(GridError::InvalidInput(format!(
                    "admittance factor must be positive, got {f}"
                )));
            }
            br.g *= f;
            br.b *= f;
        }
        Ok(out)
    }

    /// Parent branch of every bus in a BFS tree rooted at the slack.
    /// `parent[slack]` is `None`.
    pub fn tree_parents(&self) -> Vec<Option<(usize, usize)>> {
        let adj = self.adjacency();
        let mut parent = vec![None; self.n_buses()];
        let mut visited = vec![false; self.n_buses()];
        let mut queue = std::collections::VecDeque::from([self.slack]);
        visited[self.slack] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, k) in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = Some((u, k));
                    queue.push_back(v);
                }
            }
        }
        parent
    }
}
