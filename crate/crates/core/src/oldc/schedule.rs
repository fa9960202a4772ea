use serde::{Deserialize, Serialize};

use super::OldcError;

/// Timing of local control, sample upload and central training, in
/// integer units of simulated time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OldcSchedule {
    /// Control period.
    pub dt: u64,
    /// Upload period.
    pub t_s: u64,
    /// Training period.
    pub t_u: u64,
    /// Samples uploaded per upload window.
    pub m: usize,
    /// Latency of uploads and policy shipments.
    pub comm_delay: u64,
    /// Probability that an uploaded sample is lost.
    pub drop_prob: f64,
}

impl Default for OldcSchedule {
    fn default() -> Self {
        OldcSchedule::synchronous()
    }
}

/// How an executor acts at a control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exploration {
    Stochastic,
    Deterministic,
}

impl OldcSchedule {
    /// Upload and train every control step, every sample uploaded.
    pub fn synchronous() -> Self {
        OldcSchedule {
            dt: 1,
            t_s: 1,
            t_u: 1,
            m: 1,
            comm_delay: 0,
            drop_prob: 0.0,
        }
    }

    /// Upload and train every `period` steps with `m` samples per window.
    pub fn periodic(period: u64, m: usize) -> Self {
        OldcSchedule {
            t_s: period,
            t_u: period,
            m,
            ..Self::synchronous()
        }
    }

    pub fn validate(&self) -> Result<(), OldcError> {
        let bad = |msg: String| Err(OldcError::Schedule(msg));
        if self.dt == 0 {
            return bad("dt must be positive".into());
        }
        if self.t_s < self.dt || self.t_u < self.dt {
            return bad(format!(
                "periods t_s = {} and t_u = {} must be at least dt = {}",
                self.t_s, self.t_u, self.dt
            ));
        }
        if self.t_s % self.dt != 0 || self.t_u % self.dt != 0 {
            return bad("t_s and t_u must be multiples of dt".into());
        }
        if self.m > self.window() {
            return bad(format!(
                "m = {} exceeds the {} control steps of an upload window",
                self.m,
                self.window()
            ));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad(format!("drop_prob {} outside [0, 1]", self.drop_prob));
        }
        Ok(())
    }

    /// Control steps per upload window.
    pub fn window(&self) -> usize {
        (self.t_s / self.dt) as usize
    }

    /// Control steps per training period.
    pub fn train_every(&self) -> usize {
        (self.t_u / self.dt) as usize
    }
}

/// The last `m` steps of each upload window explore; the rest act on the
/// policy mode.
pub fn select_exploration(step: usize, schedule: &OldcSchedule) -> Exploration {
    let w = schedule.window();
    if step % w >= w - schedule.m.min(w) {
        Exploration::Stochastic
    } else {
        Exploration::Deterministic
    }
}
