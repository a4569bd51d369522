//! Machine-readable fit reports.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zinbarma_core::diagnostics::{excess_zero_probability, gof_summary, ExcessZeros, GofSummary};
use zinbarma_core::estimation::{inference_from_covariance, FitResult};
use zinbarma_core::model::{Dataset, Design, Method, ParameterSet};

use crate::config::{ModelConfig, ResolvedConfig};
use crate::data::{fmt_f64, fmt_opt, write_table};
use crate::error::{AppError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFingerprint {
    pub n_obs: usize,
    pub zero_count: usize,
    pub zero_fraction: f64,
}

impl DataFingerprint {
    pub fn of(data: &Dataset) -> Self {
        DataFingerprint { n_obs: data.len(), zero_count: data.zero_count(), zero_fraction: data.zero_fraction() }
    }
}

/// Estimates / standard errors / p-values, one row per coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRow {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub n_params: usize,
    pub condition: Option<f64>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch; the only field that differs between identical runs.
    pub generated_at: u64,
    pub seed: u64,
    pub model: String,
    pub config: ModelConfig,
    pub data: DataFingerprint,
    pub fit: FitSummary,
    pub estimates: Vec<EstimateRow>,
    pub params: ParameterSet,
    pub covariance: Option<Vec<Vec<f64>>>,
    /// The k standard error comes from the joint information; asymptotics
    /// are only established for known k, so treat it as a heuristic.
    pub k_se_heuristic: bool,
    pub gof: Option<GofSummary>,
    pub excess_zeros: Option<ExcessZeros>,
    pub warnings: Vec<String>,
}

pub fn estimate_rows(fit: &FitResult, names: &[String]) -> Vec<EstimateRow> {
    let est = fit.params.to_vec();
    let inf = fit.cov.as_ref().and_then(|c| inference_from_covariance(&est, c, 0.05).ok());
    (0..est.len())
        .map(|i| {
            let fixed = !fit.free[i];
            let pick = |v: Option<f64>| if fixed { None } else { v };
            EstimateRow {
                name: names[i].clone(),
                estimate: est[i],
                se: pick(inf.as_ref().map(|x| x.se[i])),
                z: pick(inf.as_ref().and_then(|x| x.z[i])),
                p_value: pick(inf.as_ref().and_then(|x| x.p_value[i])),
                ci_lower: pick(inf.as_ref().map(|x| x.ci_lower[i])),
                ci_upper: pick(inf.as_ref().map(|x| x.ci_upper[i])),
                fixed,
            }
        })
        .collect()
}

impl RunReport {
    pub fn build(config: &ResolvedConfig, data: &Dataset, design: &Design, fit: &FitResult, seed: u64) -> Self {
        let mut warnings = fit.warnings.clone();
        let gof = match gof_summary(fit, design, &data.y) {
            Ok(g) => Some(g),
            Err(e) => {
                warnings.push(format!("goodness of fit unavailable: {e}"));
                None
            }
        };
        let excess_zeros = excess_zero_probability(fit, design, &data.y).ok();
        if excess_zeros.is_some_and(|z| z.negative) {
            warnings.push("NB component alone over-predicts the zeros (negative excess-zero probability)".into());
        }
        RunReport {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            generated_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            seed,
            model: config.name.clone(),
            config: config.raw.clone(),
            data: DataFingerprint::of(data),
            fit: FitSummary {
                method: fit.method,
                converged: fit.converged,
                iterations: fit.iterations,
                loglik: fit.loglik,
                n_params: fit.n_params,
                condition: fit.condition,
                trace: fit.trace.clone(),
            },
            estimates: estimate_rows(fit, &config.spec.parameter_names()),
            params: fit.params.clone(),
            covariance: fit
                .cov
                .as_ref()
                .map(|c| (0..c.nrows()).map(|i| c.row(i).iter().copied().collect()).collect()),
            k_se_heuristic: true,
            gof,
            excess_zeros,
            warnings,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| AppError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| AppError::Data { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// `parameter,estimate,se,z,p_value,ci_lower,ci_upper`
pub fn write_estimates_csv(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    write_table(
        path,
        &["parameter", "estimate", "se", "z", "p_value", "ci_lower", "ci_upper"],
        rows.iter().map(|r| {
            vec![
                r.name.clone(),
                fmt_f64(r.estimate),
                fmt_opt(r.se),
                fmt_opt(r.z),
                fmt_opt(r.p_value),
                fmt_opt(r.ci_lower),
                fmt_opt(r.ci_upper),
            ]
        }),
    )
}
