//! Strict JSON model configs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zinbarma_core::model::{Block, CovariateRecipe, EstimationOptions, FixedLag, ModelSpec, Orders, ParameterSet};
use zinbarma_core::simulation::{EstimatorChoice, McStudyConfig, StartChoice};

use crate::error::{AppError, Result};

/// One linear predictor: regressors plus ARMA orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub covariates: Vec<CovariateRecipe>,
    #[serde(default)]
    pub ar: usize,
    #[serde(default)]
    pub ma: usize,
    /// One-based AR lags held at zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_ar: Vec<usize>,
    /// One-based MA lags held at zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_ma: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub beta: Vec<f64>,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    pub k: f64,
}

impl From<&TruthConfig> for ParameterSet {
    fn from(t: &TruthConfig) -> Self {
        ParameterSet {
            beta: t.beta.clone(),
            phi: t.phi.clone(),
            theta: t.theta.clone(),
            delta: t.delta.clone(),
            alpha: t.alpha.clone(),
            gamma: t.gamma.clone(),
            k: t.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub sizes: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default)]
    pub start: StartChoice,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_y")]
    pub y_column: String,
    /// Columns to load; all non-`y`, non-`t` columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
}

fn default_y() -> String {
    "y".into()
}

/// File form of a model. A missing `zero_inflation` block gives a plain NB-ARMA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub log_mean: PredictorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_inflation: Option<PredictorConfig>,
    #[serde(default)]
    pub estimation: EstimationOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
}

/// A config with every default applied and cross-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub name: String,
    pub spec: ModelSpec,
    pub truth: Option<ParameterSet>,
    pub raw: ModelConfig,
}

impl ResolvedConfig {
    pub fn study(&self) -> std::result::Result<McStudyConfig, String> {
        let s = self.raw.study.as_ref().ok_or("config has no `study` block")?;
        let truth = self.truth.clone().ok_or("a Monte Carlo study needs a `truth` block")?;
        Ok(McStudyConfig {
            spec: self.spec.clone(),
            truth,
            sizes: s.sizes.clone(),
            replications: s.replications,
            estimator: s.estimator,
            start: s.start,
            seed: s.seed,
        })
    }

    pub fn data(&self) -> DataConfig {
        self.raw.data.clone().unwrap_or(DataConfig { y_column: default_y(), covariates: None })
    }
}

pub fn parse_model_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    parse_model_config_str(&text, &path.display().to_string())
        .map_err(|message| AppError::Config { path: path.to_path_buf(), message })
}

/// Parses config text; `label` names the source in the fallback name.
pub fn parse_model_config_str(text: &str, label: &str) -> std::result::Result<ResolvedConfig, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: ModelConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let p = e.path().to_string();
        if p == "." || p.is_empty() {
            e.inner().to_string()
        } else {
            format!("at `{p}`: {}", e.inner())
        }
    })?;
    resolve(raw, label)
}

fn fixed(block: Block, lags: &[usize]) -> impl Iterator<Item = FixedLag> + '_ {
    lags.iter().map(move |&lag| FixedLag { block, lag })
}

pub fn resolve(raw: ModelConfig, label: &str) -> std::result::Result<ResolvedConfig, String> {
    let zi = raw.zero_inflation.as_ref();
    let mut spec = ModelSpec::new(
        raw.log_mean.covariates.clone(),
        zi.map(|z| z.covariates.clone()).unwrap_or_default(),
        Orders {
            p1: raw.log_mean.ar,
            q1: raw.log_mean.ma,
            p2: zi.map_or(0, |z| z.ar),
            q2: zi.map_or(0, |z| z.ma),
        },
    );
    spec.zero_inflated = zi.is_some();
    spec.options = raw.estimation;
    spec.fixed.extend(fixed(Block::Phi, &raw.log_mean.fixed_ar));
    spec.fixed.extend(fixed(Block::Theta, &raw.log_mean.fixed_ma));
    if let Some(z) = zi {
        spec.fixed.extend(fixed(Block::Alpha, &z.fixed_ar));
        spec.fixed.extend(fixed(Block::Gamma, &z.fixed_ma));
    }
    if spec.w_covariates.is_empty() {
        return Err("at `log_mean.covariates`: covariate list is empty".into());
    }
    if zi.is_some() && spec.m_covariates.is_empty() {
        return Err("at `zero_inflation.covariates`: covariate list is empty".into());
    }
    spec.validate().map_err(|e| e.to_string())?;

    let truth = match &raw.truth {
        Some(t) => {
            let p = ParameterSet::from(t);
            p.check_layout(&spec.layout()).map_err(|e| format!("at `truth`: {e}"))?;
            p.validate().map_err(|e| format!("at `truth`: {e}"))?;
            for i in spec.fixed_indices() {
                if p.to_vec()[i] != 0.0 {
                    return Err(format!("at `truth`: fixed coefficient {} must be zero", spec.parameter_names()[i]));
                }
            }
            Some(p)
        }
        None => None,
    };
    if let Some(s) = &raw.study {
        if s.replications == 0 {
            return Err("at `study.replications`: must be at least 1".into());
        }
        if s.sizes.is_empty() {
            return Err("at `study.sizes`: no sample sizes".into());
        }
    }
    let name = raw.name.clone().unwrap_or_else(|| {
        Path::new(label).file_stem().map_or_else(|| label.to_string(), |s| s.to_string_lossy().into_owned())
    });
    Ok(ResolvedConfig { name, spec, truth, raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL3: &str = r#"{
        "log_mean": {
            "covariates": [{"kind": "intercept"}, {"kind": "linear-trend"}, {"kind": "harmonic", "period": 52}],
            "ma": 3, "fixed_ma": [2]
        },
        "zero_inflation": {"covariates": [{"kind": "intercept"}, {"kind": "harmonic", "period": 52}]}
    }"#;

    #[test]
    fn resolves_defaults() {
        let c = parse_model_config_str(MODEL3, "configs/model3.json").unwrap();
        assert_eq!(c.name, "model3");
        assert_eq!((c.spec.n1(), c.spec.n2()), (4, 3));
        assert_eq!(c.spec.orders.q1, 3);
        assert_eq!(c.spec.fixed_indices(), vec![5]);
        assert_eq!(c.spec.options, EstimationOptions::default());
        assert!(c.spec.zero_inflated);
    }

    #[test]
    fn unknown_keys_fail_with_path() {
        let bad = MODEL3.replace("\"ma\": 3", "\"ma\": 3, \"mq\": 1");
        let e = parse_model_config_str(&bad, "x").unwrap_err();
        assert!(e.contains("log_mean") && e.contains("mq"), "{e}");
        let bad = MODEL3.replace("\"ma\": 3", "\"ma\": -3");
        assert!(parse_model_config_str(&bad, "x").unwrap_err().contains("log_mean.ma"));
        let bad = MODEL3.replace("\"period\": 52}],\n            \"ma\"", "\"period\": 0}],\n            \"ma\"");
        assert!(parse_model_config_str(&bad, "x").is_err());
    }

    #[test]
    fn empty_covariates_rejected() {
        let bad = r#"{"log_mean": {"covariates": []}}"#;
        assert!(parse_model_config_str(bad, "x").unwrap_err().contains("empty"));
    }

    #[test]
    fn truth_checked_against_layout() {
        let with_truth = MODEL3.replacen('{', r#"{"truth": {"beta": [1, 0, 0, 0], "theta": [0.1, 0, 0], "delta": [0, 0, 0], "k": 2},"#, 1);
        assert!(parse_model_config_str(&with_truth, "x").unwrap().truth.is_some());
        let short = with_truth.replace("\"beta\": [1, 0, 0, 0]", "\"beta\": [1, 0]");
        assert!(parse_model_config_str(&short, "x").is_err());
        let nonzero_fixed = with_truth.replace("[0.1, 0, 0]", "[0.1, 0.2, 0]");
        assert!(parse_model_config_str(&nonzero_fixed, "x").is_err());
    }
}
