//! JSON and CSV shapes shared by the CLI and the service.

use std::io::Write;

use projpost::diagnostics::DrawSummary;
use projpost::{StepwisePath, TauSummary};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const HIST_BINS: usize = 64;

/// Equal-width bins over `mean ± 4 sd`, normalized to a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bin_width: f64,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn from_draws(draws: &[f64], summary: &TauSummary) -> Self {
        let half = if summary.sd > 0.0 {
            4.0 * summary.sd
        } else {
            0.5
        };
        let lo = summary.mean - half;
        let hi = summary.mean + half;
        let width = (hi - lo) / HIST_BINS as f64;
        let mut counts = vec![0usize; HIST_BINS];
        for &v in draws {
            if v < lo || v > hi {
                continue;
            }
            let k = (((v - lo) / width) as usize).min(HIST_BINS - 1);
            counts[k] += 1;
        }
        let scale = 1.0 / (draws.len() as f64 * width);
        Self {
            lo,
            hi,
            bin_width: width,
            density: counts.into_iter().map(|c| c as f64 * scale).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPosterior {
    pub summary: TauSummary,
    pub histogram: Histogram,
}

impl TauPosterior {
    pub fn from_draws(draws: &[f64]) -> Self {
        let summary = TauSummary::from_draws(draws);
        Self {
            histogram: Histogram::from_draws(draws, &summary),
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub removed: String,
    pub removed_index: usize,
    pub d_value: f64,
    pub tau_mean: f64,
    pub tau_sd: f64,
    pub tau_q025: f64,
    pub tau_q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseReport {
    pub metric: String,
    pub steps: Vec<StepRecord>,
}

impl StepwiseReport {
    pub fn from_path(path: &StepwisePath, names: &[String], metric: &str) -> Self {
        let steps = path
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| StepRecord {
                step: k + 1,
                removed: names[s.removed].clone(),
                removed_index: s.removed,
                d_value: s.distance,
                tau_mean: s.tau.mean,
                tau_sd: s.tau.sd,
                tau_q025: s.tau.q025,
                tau_q975: s.tau.q975,
            })
            .collect();
        Self {
            metric: metric.to_string(),
            steps,
        }
    }

    /// Plot data: `step,removed,d_value,tau_mean,tau_lo,tau_hi`.
    pub fn write_plot_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["step", "removed", "d_value", "tau_mean", "tau_lo", "tau_hi"])
            .map_err(projpost::Error::from)?;
        for s in &self.steps {
            w.write_record([
                s.step.to_string(),
                s.removed.clone(),
                s.d_value.to_string(),
                s.tau_mean.to_string(),
                s.tau_q025.to_string(),
                s.tau_q975.to_string(),
            ])
            .map_err(projpost::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    #[serde(flatten)]
    pub summary: DrawSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub provenance: projpost::Provenance,
    pub n: usize,
    pub p: usize,
    pub n_draws: usize,
    pub chains: usize,
    pub coefficients: Vec<CoefficientRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitColumns {
    pub sigma_refit: f64,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub label: String,
    pub q: usize,
    pub include: Vec<String>,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub d_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit: Option<RefitColumns>,
}
