use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::grid::{case33, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    /// PV inverter; reactive range follows the capability circle.
    Inverter,
    /// Static VAR compensator with box bounds.
    Compensator,
}

/// A controllable reactive-power resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub node: usize,
    pub kind: DeviceKind,
    #[serde(default)]
    pub s_rated: f64,
    #[serde(default)]
    pub q_min: f64,
    #[serde(default)]
    pub q_max: f64,
    pub area: usize,
}

impl DeviceSpec {
    pub fn inverter(node: usize, s_rated: f64, area: usize) -> Self {
        DeviceSpec {
            node,
            kind: DeviceKind::Inverter,
            s_rated,
            q_min: 0.0,
            q_max: 0.0,
            area,
        }
    }

    pub fn compensator(node: usize, q_min: f64, q_max: f64, area: usize) -> Self {
        DeviceSpec {
            node,
            kind: DeviceKind::Compensator,
            s_rated: 0.0,
            q_min,
            q_max,
            area,
        }
    }

    /// Feasible reactive range given the device's current active output.
    pub fn reactive_range(&self, p_gen: f64) -> (f64, f64) {
        match self.kind {
            DeviceKind::Inverter => {
                let q = (self.s_rated * self.s_rated - p_gen * p_gen).max(0.0).sqrt();
                (-q, q)
            }
            DeviceKind::Compensator => (self.q_min, self.q_max),
        }
    }

    /// Affine map of a normalized action in `[-1, 1]` onto the feasible
    /// range. Out-of-range actions are clipped first.
    pub fn map_action(&self, action: f64, p_gen: f64) -> f64 {
        let (lo, hi) = self.reactive_range(p_gen);
        let a = action.clamp(-1.0, 1.0);
        lo + 0.5 * (a + 1.0) * (hi - lo)
    }

    /// Inverse of [`DeviceSpec::map_action`]; 0 for a collapsed range.
    pub fn normalize(&self, q: f64, p_gen: f64) -> f64 {
        let (lo, hi) = self.reactive_range(p_gen);
        if hi - lo <= 0.0 {
            return 0.0;
        }
        (2.0 * (q - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }
}

/// Disjoint control areas covering the network, with the branches that
/// cross each area's boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaPartition {
    areas: Vec<Vec<usize>>,
    area_of: Vec<usize>,
    /// Per area: `(branch index, leaves through the from-end)`.
    boundary: Vec<Vec<(usize, bool)>>,
}

impl AreaPartition {
    pub fn new(net: &NetworkModel, areas: Vec<Vec<usize>>) -> Result<Self, EnvError> {
        let n = net.n_buses();
        let mut area_of = vec![usize::MAX; n];
        for (k, nodes) in areas.iter().enumerate() {
            if nodes.is_empty() {
                return Err(EnvError::InvalidCase(format!("area {k} is empty")));
            }
            for &node in nodes {
                if node >= n {
                    return Err(EnvError::InvalidCase(format!(
                        "area {k} references bus {node} outside the network"
                    )));
                }
                if area_of[node] != usize::MAX {
                    return Err(EnvError::InvalidCase(format!(
                        "bus {node} belongs to areas {} and {k}",
                        area_of[node]
                    )));
                }
                area_of[node] = k;
            }
        }
        if let Some(node) = area_of.iter().position(|&a| a == usize::MAX) {
            return Err(EnvError::InvalidCase(format!(
                "bus {node} is not assigned to any area"
            )));
        }
        let mut boundary = vec![Vec::new(); areas.len()];
        for (k, br) in net.branches().iter().enumerate() {
            let (af, at) = (area_of[br.from_bus], area_of[br.to_bus]);
            if af != at {
                boundary[af].push((k, true));
                boundary[at].push((k, false));
            }
        }
        let mut areas = areas;
        for nodes in &mut areas {
            nodes.sort_unstable();
        }
        Ok(AreaPartition {
            areas,
            area_of,
            boundary,
        })
    }

    pub fn single(net: &NetworkModel) -> Self {
        Self::new(net, vec![(0..net.n_buses()).collect()]).expect("one area covers every bus")
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    pub fn nodes(&self, area: usize) -> &[usize] {
        &self.areas[area]
    }

    pub fn area_of(&self, node: usize) -> usize {
        self.area_of[node]
    }

    pub fn boundary(&self, area: usize) -> &[(usize, bool)] {
        &self.boundary[area]
    }
}

/// A network together with its controllable devices and control areas.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederCase {
    pub network: NetworkModel,
    pub devices: Vec<DeviceSpec>,
    pub areas: AreaPartition,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseFile {
    #[serde(flatten)]
    network: NetworkModel,
    #[serde(default)]
    devices: Vec<DeviceSpec>,
    #[serde(default)]
    areas: Vec<Vec<usize>>,
}

impl FeederCase {
    /// Validates devices against the network and partition. Device nodes
    /// and area members are positional bus indices.
    pub fn new(
        network: NetworkModel,
        devices: Vec<DeviceSpec>,
        areas: Vec<Vec<usize>>,
    ) -> Result<Self, EnvError> {
        let areas = if areas.is_empty() {
            AreaPartition::single(&network)
        } else {
            AreaPartition::new(&network, areas)?
        };
        let mut used = std::collections::HashSet::new();
        for (d, dev) in devices.iter().enumerate() {
            if dev.node >= network.n_buses() {
                return Err(EnvError::InvalidCase(format!(
                    "device {d} sits on unknown bus {}",
                    dev.node
                )));
            }
            if dev.node == network.slack() {
                return Err(EnvError::InvalidCase(format!(
                    "device {d} sits on the slack bus"
                )));
            }
            if dev.area >= areas.len() {
                return Err(EnvError::InvalidCase(format!(
                    "device {d} assigned to unknown area {}",
                    dev.area
                )));
            }
            if areas.area_of(dev.node) != dev.area {
                return Err(EnvError::InvalidCase(format!(
                    "device {d} on bus {} lies outside its area {}",
                    dev.node, dev.area
                )));
            }
            if !used.insert(dev.node) {
                return Err(EnvError::InvalidCase(format!(
                    "more than one device on bus {}",
                    dev.node
                )));
            }
            match dev.kind {
                DeviceKind::Inverter if !(dev.s_rated > 0.0) => {
                    return Err(EnvError::InvalidCase(format!(
                        "inverter {d} needs s_rated > 0"
                    )))
                }
                DeviceKind::Compensator if !(dev.q_min <= dev.q_max) => {
                    return Err(EnvError::InvalidCase(format!(
                        "compensator {d} has q_min > q_max"
                    )))
                }
                _ => {}
            }
        }
        for area in 0..areas.len() {
            if !devices.iter().any(|d| d.area == area) {
                return Err(EnvError::InvalidCase(format!(
                    "area {area} has no controllable device"
                )));
            }
        }
        Ok(FeederCase {
            network,
            devices,
            areas,
        })
    }

    /// Parses the JSON case schema. Device and area entries use the bus
    /// ids of the file.
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let file: CaseFile =
            serde_json::from_str(text).map_err(|e| EnvError::InvalidCase(e.to_string()))?;
        let net = file.network;
        let index = |label: usize| {
            net.index_of(label)
                .ok_or_else(|| EnvError::InvalidCase(format!("unknown bus id {label}")))
        };
        let devices = file
            .devices
            .iter()
            .map(|d| Ok(DeviceSpec { node: index(d.node)?, ..d.clone() }))
            .collect::<Result<Vec<_>, EnvError>>()?;
        let areas = file
            .areas
            .iter()
            .map(|nodes| nodes.iter().map(|&l| index(l)).collect())
            .collect::<Result<Vec<_>, EnvError>>()?;
        FeederCase::new(net, devices, areas)
    }

    pub fn to_json(&self) -> String {
        let net = &self.network;
        let file = CaseFile {
            network: net.clone(),
            devices: self
                .devices
                .iter()
                .map(|d| DeviceSpec { node: net.label(d.node), ..d.clone() })
                .collect(),
            areas: (0..self.areas.len())
                .map(|a| self.areas.nodes(a).iter().map(|&i| net.label(i)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("case serializes")
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::InvalidCase(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Resolves `builtin:<name>` or a path to a JSON case file.
    pub fn resolve(spec: &str) -> Result<Self, EnvError> {
        match spec.strip_prefix("builtin:") {
            Some("ieee33") => ieee33_case(),
            Some(other) => Err(EnvError::InvalidCase(format!(
                "unknown builtin network '{other}'"
            ))),
            None => Self::load(Path::new(spec)),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.areas.len()
    }

    /// Device indices controlled by an agent, in device order.
    pub fn agent_devices(&self, agent: usize) -> Vec<usize> {
        (0..self.devices.len())
            .filter(|&d| self.devices[d].area == agent)
            .collect()
    }
}

/// The 33-bus feeder with three PV inverters and one SVC, each in its own
/// control area:
///
/// | area | buses (1-based) | device |
/// |------|-----------------|--------|
/// | 0 | 1-18  | PV inverter at bus 18, 1.0 MVA |
/// | 1 | 19-22 | PV inverter at bus 22, 0.5 MVA |
/// | 2 | 23-25 | PV inverter at bus 25, 1.0 MVA |
/// | 3 | 26-33 | SVC at bus 30, -0.8..0.8 MVAr |
pub fn ieee33_case() -> Result<FeederCase, EnvError> {
    let net = case33::ieee33()?;
    let areas = vec![
        (0..18).collect(),
        (18..22).collect(),
        (22..25).collect(),
        (25..33).collect(),
    ];
    let devices = vec![
        DeviceSpec::inverter(17, 1.0, 0),
        DeviceSpec::inverter(21, 0.5, 1),
        DeviceSpec::inverter(24, 1.0, 2),
        DeviceSpec::compensator(29, -0.8, 0.8, 3),
    ];
    FeederCase::new(net, devices, areas)
}
