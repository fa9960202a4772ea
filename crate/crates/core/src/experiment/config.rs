use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::baselines::{MaddpgConfig, VvoOptions};
use crate::env::{FeederCase, ProfileConfig, DEFAULT_BETA};
use crate::macsac::MacsacConfig;
use crate::oldc::OldcSchedule;

/// Environment variable that replaces `output_root`.
pub const OUTPUT_ROOT_VAR: &str = "VVC_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Macsac,
    Maddpg,
    Csac,
    Vvo,
    Avvo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Macsac => "macsac",
            Algorithm::Maddpg => "maddpg",
            Algorithm::Csac => "csac",
            Algorithm::Vvo => "vvo",
            Algorithm::Avvo => "avvo",
        }
    }

    /// Row order of comparison tables.
    pub fn table_rank(self) -> usize {
        match self {
            Algorithm::Csac => 0,
            Algorithm::Maddpg => 1,
            Algorithm::Macsac => 2,
            Algorithm::Avvo => 3,
            Algorithm::Vvo => 4,
        }
    }

    pub fn is_learner(self) -> bool {
        matches!(self, Algorithm::Macsac | Algorithm::Maddpg | Algorithm::Csac)
    }
}

/// Where exploration happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Explore on a copy of the system; the real one runs the policy mode.
    Ideal,
    /// Explore on the real system.
    Online,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileSpec {
    /// CSV profile used for every episode; synthetic days when absent.
    pub file: Option<PathBuf>,
    pub seed: u64,
    #[serde(flatten)]
    pub synthetic: ProfileConfig,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            file: None,
            seed: 0,
            synthetic: ProfileConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvvoSpec {
    /// Half-width of the uniform multiplicative admittance error.
    pub sigma: f64,
}

impl Default for AvvoSpec {
    fn default() -> Self {
        AvvoSpec { sigma: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// `builtin:ieee33` or a JSON case file.
    pub network: String,
    pub algorithm: Algorithm,
    pub scenario: Scenario,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub output_root: PathBuf,
    /// Seeds run at once.
    pub jobs: usize,
    pub buffer_capacity: usize,
    /// Cooperative index per agent; one value applies to all.
    pub beta: Vec<f64>,
    pub profile: ProfileSpec,
    pub schedule: OldcSchedule,
    pub macsac: MacsacConfig,
    pub maddpg: MaddpgConfig,
    pub vvo: VvoOptions,
    pub avvo: AvvoSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            network: "builtin:ieee33".into(),
            algorithm: Algorithm::Macsac,
            scenario: Scenario::Ideal,
            episodes: 500,
            seeds: vec![0, 1, 2],
            output_root: PathBuf::from("runs"),
            jobs: 1,
            buffer_capacity: 400_000,
            beta: vec![DEFAULT_BETA],
            profile: ProfileSpec::default(),
            schedule: OldcSchedule::synchronous(),
            macsac: MacsacConfig::default(),
            maddpg: MaddpgConfig::default(),
            vvo: VvoOptions::default(),
            avvo: AvvoSpec::default(),
        }
    }
}

fn field(path: &str, msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(format!("{path}: {}", msg.into()))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parses and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if !cfg.network.starts_with("builtin:") && Path::new(&cfg.network).is_relative() {
            cfg.network = base.join(&cfg.network).to_string_lossy().into_owned();
        }
        if let Some(f) = &cfg.profile.file {
            if f.is_relative() {
                cfg.profile.file = Some(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(field("seeds", "at least one seed is required"));
        }
        if self.episodes == 0 {
            return Err(field("episodes", "must be positive"));
        }
        if self.jobs == 0 {
            return Err(field("jobs", "must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(field("buffer_capacity", "must be positive"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(field("name", "must be a non-empty file name"));
        }
        self.schedule
            .validate()
            .map_err(|e| field("schedule", e.to_string()))?;
        let case = self.case()?;
        if self.beta.len() != 1 && self.beta.len() != case.n_agents() {
            return Err(field(
                "beta",
                format!("give 1 or {} values", case.n_agents()),
            ));
        }
        if self.beta.iter().any(|b| !(*b >= 0.0)) {
            return Err(field("beta", "values must be non-negative"));
        }
        if let Some(f) = &self.profile.file {
            if !f.exists() {
                return Err(field("profile.file", format!("{} does not exist", f.display())));
            }
        }
        let p = &self.profile.synthetic;
        if p.steps == 0 {
            return Err(field("profile.steps", "must be positive"));
        }
        let m = &self.macsac;
        let checks: [(&str, bool); 9] = [
            ("macsac.gamma", (0.0..=1.0).contains(&m.gamma)),
            ("macsac.alpha", m.alpha >= 0.0),
            ("macsac.lr", m.lr > 0.0),
            ("macsac.lambda_lr", m.lambda_lr >= 0.0),
            ("macsac.lambda_init", m.lambda_init >= 0.0),
            ("macsac.eta", (0.0..=1.0).contains(&m.eta)),
            ("macsac.batch_size", m.batch_size > 0),
            ("macsac.hidden", m.hidden.iter().all(|&h| h > 0)),
            ("macsac.reward_scale", m.reward_scale > 0.0 && m.cost_scale > 0.0),
        ];
        for (path, ok) in checks {
            if !ok {
                return Err(field(path, "out of range"));
            }
        }
        let d = &self.maddpg;
        let checks: [(&str, bool); 6] = [
            ("maddpg.gamma", (0.0..=1.0).contains(&d.gamma)),
            ("maddpg.lr", d.lr > 0.0),
            ("maddpg.eta", (0.0..=1.0).contains(&d.eta)),
            ("maddpg.batch_size", d.batch_size > 0),
            ("maddpg.noise", d.noise >= 0.0),
            ("maddpg.penalty", d.penalty >= 0.0),
        ];
        for (path, ok) in checks {
            if !ok {
                return Err(field(path, "out of range"));
            }
        }
        if !(0.0..1.0).contains(&self.avvo.sigma) {
            return Err(field("avvo.sigma", "must lie in [0, 1)"));
        }
        if self.vvo.penalty < 0.0 {
            return Err(field("vvo.penalty", "must be non-negative"));
        }
        Ok(())
    }

    pub fn case(&self) -> Result<FeederCase, ExperimentError> {
        FeederCase::resolve(&self.network).map_err(|e| field("network", e.to_string()))
    }

    /// `output_root/name`, with the root taken from `VVC_OUTPUT_ROOT`
    /// when set.
    pub fn output_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_root.clone());
        root.join(&self.name)
    }

    /// Fingerprint of the experimental conditions that comparisons must
    /// share.
    pub fn conditions(&self) -> String {
        let p = toml::to_string(&self.profile).expect("profile serializes");
        format!("network={}\nbeta={:?}\n{p}", self.network, self.beta)
    }
}
