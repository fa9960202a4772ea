use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, RunSummary};
use crate::oldc::StepRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub scenario: String,
    pub loss_mean: f64,
    pub loss_std: Option<f64>,
    pub vvr_mean: f64,
    pub vvr_std: Option<f64>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn fmt_pm(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{mean:.3e} ± {s:.2e}"),
        None => format!("{mean:.3e}"),
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<8} {:<8} {:>24} {:>24} {:>5}\n", "method", "scenario", "loss (MW)", "vvr", "seeds");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:<8} {:>24} {:>24} {:>5}",
                r.method,
                r.scenario,
                fmt_pm(r.loss_mean, r.loss_std),
                fmt_pm(r.vvr_mean, r.vvr_std),
                r.seeds
            );
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| ExperimentError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Final-episode table across methods, ordered CSAC, MADDPG, MACSAC,
/// AVVO, VVO. Summaries run under different conditions are refused.
pub fn compare(summaries: &[RunSummary]) -> Result<Comparison, ExperimentError> {
    let first = summaries
        .first()
        .ok_or_else(|| ExperimentError::Config("no summaries to compare".into()))?;
    for s in &summaries[1..] {
        if s.conditions != first.conditions {
            return Err(ExperimentError::Config(format!(
                "{} and {} were run under different conditions",
                first.name, s.name
            )));
        }
    }
    let mut sorted: Vec<&RunSummary> = summaries.iter().collect();
    sorted.sort_by_key(|s| (s.algorithm.table_rank(), s.scenario as u8));
    let rows = sorted
        .into_iter()
        .map(|s| {
            let f = s.final_episode.as_ref().ok_or_else(|| {
                ExperimentError::Runtime(format!("{} has no completed episode", s.name))
            })?;
            Ok(ComparisonRow {
                method: s.algorithm.name().to_string(),
                scenario: format!("{:?}", s.scenario).to_lowercase(),
                loss_mean: f.loss_mean,
                loss_std: f.loss_std,
                vvr_mean: f.vvr_mean,
                vvr_std: f.vvr_std,
                seeds: s.seeds.len(),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(Comparison { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub step: usize,
    pub loss_mean: f64,
    pub loss_min: f64,
    pub loss_max: f64,
    pub vvr_mean: f64,
    pub vvr_min: f64,
    pub vvr_max: f64,
}

/// Per-step mean, min and max across step logs, truncated to the shortest
/// log.
pub fn emit_plot_data(logs: &[Vec<StepRecord>]) -> Result<Vec<PlotRow>, ExperimentError> {
    if logs.is_empty() {
        return Err(ExperimentError::Config("no step logs given".into()));
    }
    let n = logs.iter().map(Vec::len).min().unwrap_or(0);
    let k = logs.len() as f64;
    Ok((0..n)
        .map(|i| {
            let loss: Vec<f64> = logs.iter().map(|l| l[i].loss_mw).collect();
            let vvr: Vec<f64> = logs.iter().map(|l| l[i].vvr).collect();
            PlotRow {
                step: logs[0][i].step,
                loss_mean: loss.iter().sum::<f64>() / k,
                loss_min: loss.iter().cloned().fold(f64::INFINITY, f64::min),
                loss_max: loss.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                vvr_mean: vvr.iter().sum::<f64>() / k,
                vvr_min: vvr.iter().cloned().fold(f64::INFINITY, f64::min),
                vvr_max: vvr.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

pub fn plot_data_csv(rows: &[PlotRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| ExperimentError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
