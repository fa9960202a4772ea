use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DeviceKind, EnvError, FeederCase};

pub const DEFAULT_EPISODE_STEPS: usize = 96;

/// Per-step load multipliers for every bus and available active power for
/// every device (zero for compensators).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub load_mult: Vec<Vec<f64>>,
    pub pv_avail: Vec<Vec<f64>>,
}

/// Shape of the synthetic daily profiles.
///
/// Loads follow `base + amplitude * sin(2 pi t / T + phase) + noise`; with
/// the default phase of `-pi` they bottom out at 06:00 and peak at 18:00.
/// PV follows a clear-sky half-sine between 06:00 and 18:00 scaled by
/// `pv_peak * s_rated`, multiplied by a per-step cloud factor drawn
/// uniformly from `[1 - cloud_depth, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub steps: usize,
    pub load_base: f64,
    pub load_amplitude: f64,
    pub load_phase: f64,
    pub load_noise: f64,
    pub pv_peak: f64,
    pub cloud_depth: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            steps: DEFAULT_EPISODE_STEPS,
            load_base: 0.7,
            load_amplitude: 0.3,
            load_phase: -PI,
            load_noise: 0.02,
            pv_peak: 0.9,
            cloud_depth: 0.2,
        }
    }
}

impl Profile {
    pub fn len(&self) -> usize {
        self.load_mult.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load_mult.is_empty()
    }

    /// Every load at its nominal value, no PV output.
    pub fn constant(case: &FeederCase, steps: usize, load_mult: f64) -> Self {
        Profile {
            load_mult: vec![vec![load_mult; case.network.n_buses()]; steps],
            pv_avail: vec![vec![0.0; case.devices.len()]; steps],
        }
    }

    pub fn synthetic(case: &FeederCase, cfg: &ProfileConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, cfg.load_noise.max(0.0)).expect("finite std");
        let steps = cfg.steps;
        let n = case.network.n_buses();
        let mut load_mult = Vec::with_capacity(steps);
        let mut pv_avail = Vec::with_capacity(steps);
        for t in 0..steps {
            let phase = 2.0 * PI * t as f64 / steps as f64 + cfg.load_phase;
            let shape = cfg.load_base + cfg.load_amplitude * phase.sin();
            load_mult.push(
                (0..n)
                    .map(|_| (shape + noise.sample(&mut rng)).max(0.0))
                    .collect(),
            );
            let frac = t as f64 / steps as f64;
            let bell = if (0.25..=0.75).contains(&frac) {
                (PI * (frac - 0.25) / 0.5).sin().max(0.0)
            } else {
                0.0
            };
            pv_avail.push(
                case.devices
                    .iter()
                    .map(|dev| {
                        let cloud = 1.0 - cfg.cloud_depth * rng.gen::<f64>();
                        match dev.kind {
                            DeviceKind::Inverter => {
                                (dev.s_rated * cfg.pv_peak * bell * cloud).clamp(0.0, dev.s_rated)
                            }
                            DeviceKind::Compensator => 0.0,
                        }
                    })
                    .collect(),
            );
        }
        Profile {
            load_mult,
            pv_avail,
        }
    }

    pub fn validate(&self, case: &FeederCase) -> Result<(), EnvError> {
        if self.load_mult.len() != self.pv_avail.len() {
            return Err(EnvError::Profile(format!(
                "{} load steps but {} PV steps",
                self.load_mult.len(),
                self.pv_avail.len()
            )));
        }
        for (t, (loads, pv)) in self.load_mult.iter().zip(&self.pv_avail).enumerate() {
            if loads.len() != case.network.n_buses() || pv.len() != case.devices.len() {
                return Err(EnvError::Profile(format!("step {t} has wrong dimensions")));
            }
            if loads.iter().any(|m| !m.is_finite()) {
                return Err(EnvError::Profile(format!("step {t}: non-finite load")));
            }
            for (d, (&p, dev)) in pv.iter().zip(&case.devices).enumerate() {
                let cap = match dev.kind {
                    DeviceKind::Inverter => dev.s_rated,
                    DeviceKind::Compensator => 0.0,
                };
                if !(0.0..=cap).contains(&p) {
                    return Err(EnvError::Profile(format!(
                        "step {t}: device {d} output {p} outside [0, {cap}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV with header `step,kind,id,value`; `kind` is `load` (id = bus
    /// position, value = multiplier) or `pv` (id = device index, value =
    /// available active power in p.u.).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EnvError> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| EnvError::Profile(e.to_string());
        out.write_record(["step", "kind", "id", "value"]).map_err(io)?;
        for (t, (loads, pv)) in self.load_mult.iter().zip(&self.pv_avail).enumerate() {
            for (i, v) in loads.iter().enumerate() {
                out.serialize((t, "load", i, v)).map_err(io)?;
            }
            for (d, v) in pv.iter().enumerate() {
                out.serialize((t, "pv", d, v)).map_err(io)?;
            }
        }
        out.flush().map_err(|e| EnvError::Profile(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R, case: &FeederCase) -> Result<Self, EnvError> {
        let mut rdr = csv::Reader::from_reader(r);
        let n = case.network.n_buses();
        let nd = case.devices.len();
        let mut load_mult: Vec<Vec<f64>> = Vec::new();
        let mut pv_avail: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.deserialize::<(usize, String, usize, f64)>() {
            let (t, kind, id, value) = rec.map_err(|e| EnvError::Profile(e.to_string()))?;
            while load_mult.len() <= t {
                load_mult.push(vec![f64::NAN; n]);
                pv_avail.push(vec![0.0; nd]);
            }
            match kind.as_str() {
                "load" if id < n => load_mult[t][id] = value,
                "pv" if id < nd => pv_avail[t][id] = value,
                _ => {
                    return Err(EnvError::Profile(format!(
                        "bad row: step {t}, kind {kind}, id {id}"
                    )))
                }
            }
        }
        let profile = Profile {
            load_mult,
            pv_avail,
        };
        profile.validate(case)?;
        Ok(profile)
    }
}
