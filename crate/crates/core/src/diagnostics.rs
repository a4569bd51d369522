//! Goodness of fit, residuals, correlograms, zero-inflation checks and
//! one-step forecasts for fitted models.

use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimation::{FitResult, TestResult};
use crate::model::{compute_states, Design, ParameterSet, StateRecursion, StateTrajectory, ZinbDistribution, PSI_FLOOR};
use crate::simulation::stream_rng;
use crate::special::{chi2_sf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GofSummary {
    pub mse: f64,
    pub mad: f64,
    pub pearson_chi2: f64,
    pub deviance: f64,
    pub df: f64,
    pub aic: f64,
    pub bic: f64,
    pub loglik: f64,
    pub n_params: usize,
    pub n_obs: usize,
}

/// `(AIC, BIC)` for a log-likelihood with `p` parameters on `n` observations.
pub fn information_criteria(loglik: f64, p: usize, n: usize) -> (f64, f64) {
    let p = p as f64;
    (-2.0 * loglik + 2.0 * p, -2.0 * loglik + p * (n as f64).ln())
}

/// Log-likelihood of the saturated model: a zero is certain when `y = 0`,
/// otherwise the NB part sits at `lambda = y` with the fitted `k`.
pub fn saturated_loglik(y: &[u64], k: f64) -> f64 {
    y.iter()
        .filter(|&&v| v > 0)
        .map(|&v| ZinbDistribution { lambda: v as f64, pi: 0.0, k }.ln_nb_pmf(v))
        .sum()
}

/// Summary statistics from fitted conditional means and variances.
pub fn gof_from_moments(
    y: &[u64],
    mean: &[f64],
    var: &[f64],
    loglik: f64,
    saturated: f64,
    n_params: usize,
) -> Result<GofSummary> {
    let n = y.len();
    if mean.len() != n || var.len() != n {
        return Err(Error::DimensionMismatch { what: "fitted moments", expected: n, actual: mean.len() });
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty series".into()));
    }
    let (mut sq, mut ab, mut chi) = (0.0, 0.0, 0.0);
    for t in 0..n {
        let r = y[t] as f64 - mean[t];
        if !(var[t] >= PSI_FLOOR) {
            return Err(Error::Numerical(alloc::format!("fitted variance underflows at t = {}", t + 1)));
        }
        sq += r * r;
        ab += r.abs();
        chi += r * r / var[t];
    }
    let (aic, bic) = information_criteria(loglik, n_params, n);
    Ok(GofSummary {
        mse: sq / n as f64,
        mad: ab / n as f64,
        pearson_chi2: chi,
        deviance: 2.0 * (saturated - loglik),
        df: n as f64 - n_params as f64,
        aic,
        bic,
        loglik,
        n_params,
        n_obs: n,
    })
}

pub fn gof_summary(fit: &FitResult, design: &Design, y: &[u64]) -> Result<GofSummary> {
    let st = compute_states(&fit.params, &design.x, &design.u, y)?;
    gof_from_moments(y, &st.mean, &st.var, fit.loglik, saturated_loglik(y, fit.params.k), fit.n_params)
}

/// How the uniform draw inside `(F(y-1), F(y)]` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    Randomized { seed: u64 },
    Midpoint,
}

/// Quantile residuals `Phi^{-1}(u_t)` with `u_t` in `(F(y_t - 1), F(y_t)]`.
pub fn quantile_residuals_from_states(
    st: &StateTrajectory,
    k: f64,
    y: &[u64],
    mode: ResidualMode,
) -> Result<Vec<f64>> {
    if st.len() != y.len() {
        return Err(Error::DimensionMismatch { what: "trajectory", expected: y.len(), actual: st.len() });
    }
    let mut rng = match mode {
        ResidualMode::Randomized { seed } => Some(stream_rng(seed, 0)),
        ResidualMode::Midpoint => None,
    };
    let mut out = Vec::with_capacity(y.len());
    for (t, &yt) in y.iter().enumerate() {
        let d = st.distribution(t, k);
        let lo = if yt == 0 { 0.0 } else { d.cdf(yt - 1) };
        let width = d.pmf(yt).min(1.0 - lo);
        if !(width >= 1e-14) {
            return Err(Error::Numerical(alloc::format!(
                "quantile interval at t = {} has width {width:e}",
                t + 1
            )));
        }
        let w = match rng.as_mut() {
            Some(r) => r.random::<f64>(),
            None => 0.5,
        };
        // keep strictly inside (0, 1)
        let u = (lo + w * width).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        out.push(normal_quantile(u));
    }
    Ok(out)
}

pub fn randomized_quantile_residuals(
    fit: &FitResult,
    design: &Design,
    y: &[u64],
    mode: ResidualMode,
) -> Result<Vec<f64>> {
    let st = compute_states(&fit.params, &design.x, &design.u, y)?;
    quantile_residuals_from_states(&st, fit.params.k, y, mode)
}

/// Pearson residuals `e_t` at the fitted parameters.
pub fn pearson_residuals(fit: &FitResult, design: &Design, y: &[u64]) -> Result<Vec<f64>> {
    Ok(compute_states(&fit.params, &design.x, &design.u, y)?.e)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correlogram {
    /// Lags `0..=max_lag`, with `acf[0] = 1`.
    pub acf: Vec<f64>,
    /// Same indexing; `pacf[0] = 1`.
    pub pacf: Vec<f64>,
}

/// Sample ACF and PACF (Durbin-Levinson).
pub fn acf_pacf(series: &[f64], max_lag: usize) -> Result<Correlogram> {
    let n = series.len();
    if n <= max_lag + 1 {
        return Err(Error::InvalidInput(alloc::format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c = |h: usize| -> f64 {
        (0..n - h).map(|t| (series[t] - mean) * (series[t + h] - mean)).sum::<f64>() / n as f64
    };
    let c0 = c(0);
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::InvalidInput("constant series has no autocorrelation".into()));
    }
    let acf: Vec<f64> = (0..=max_lag).map(|h| if h == 0 { 1.0 } else { c(h) / c0 }).collect();

    let mut pacf = alloc::vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for h in 1..=max_lag {
        let num = acf[h] - (0..h - 1).map(|j| phi[j] * acf[h - 1 - j]).sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let mut next: Vec<f64> = (0..h - 1).map(|j| phi[j] - a * phi[h - 2 - j]).collect();
        next.push(a);
        phi = next;
        v *= 1.0 - a * a;
        pacf.push(a);
    }
    Ok(Correlogram { acf, pacf })
}

/// Ljung-Box portmanteau statistic on lags `1..=max_lag`, referred to
/// chi-square with `max_lag - fitted_df` degrees of freedom (at least 1).
pub fn ljung_box(residuals: &[f64], max_lag: usize, fitted_df: usize) -> Result<TestResult> {
    if max_lag == 0 {
        return Err(Error::InvalidInput("Ljung-Box needs max_lag >= 1".into()));
    }
    let n = residuals.len() as f64;
    let cg = acf_pacf(residuals, max_lag)?;
    let q = n * (n + 2.0) * (1..=max_lag).map(|h| cg.acf[h] * cg.acf[h] / (n - h as f64)).sum::<f64>();
    let df = max_lag.saturating_sub(fitted_df).max(1) as f64;
    Ok(TestResult { statistic: q, df: Some(df), p_value: chi2_sf(q, df) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExcessZeros {
    pub p0: f64,
    pub zero_count: usize,
    /// NB zero probabilities summed over the zero observations.
    pub nb_zero_mass: f64,
    pub n_obs: usize,
    /// Set when the NB part alone over-predicts the zeros.
    pub negative: bool,
}

pub fn excess_zero_from_aggregates(zero_count: usize, nb_zero_mass: f64, n_obs: usize) -> ExcessZeros {
    let p0 = if n_obs == 0 { 0.0 } else { (zero_count as f64 - nb_zero_mass) / n_obs as f64 };
    ExcessZeros { p0, zero_count, nb_zero_mass, n_obs, negative: p0 < 0.0 }
}

/// Average probability of a zero not explained by the NB component.
pub fn excess_zero_probability(fit: &FitResult, design: &Design, y: &[u64]) -> Result<ExcessZeros> {
    let st = compute_states(&fit.params, &design.x, &design.u, y)?;
    let k = fit.params.k;
    let mass: f64 = y
        .iter()
        .zip(&st.lambda)
        .filter(|(v, _)| **v == 0)
        .map(|(_, &l)| (-k * (l / k).ln_1p()).exp())
        .sum();
    let zeros = y.iter().filter(|&&v| v == 0).count();
    Ok(excess_zero_from_aggregates(zeros, mass, y.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassificationRow {
    pub threshold: f64,
    /// Share of observed zeros predicted as zero; absent without zeros.
    pub sensitivity: Option<f64>,
    /// Share of observed positives predicted positive; absent without positives.
    pub specificity: Option<f64>,
}

/// Predicts a zero whenever the fitted mean is below each threshold.
pub fn classify_zeros(mean: &[f64], y: &[u64], thresholds: &[f64]) -> Result<Vec<ClassificationRow>> {
    if mean.len() != y.len() {
        return Err(Error::DimensionMismatch { what: "fitted means", expected: y.len(), actual: mean.len() });
    }
    let zeros = y.iter().filter(|&&v| v == 0).count();
    let positives = y.len() - zeros;
    thresholds
        .iter()
        .map(|&c| {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidInput(alloc::format!("threshold must be positive, got {c}")));
            }
            let mut hit0 = 0usize;
            let mut hit1 = 0usize;
            for (m, &v) in mean.iter().zip(y) {
                let pred_zero = *m < c;
                if v == 0 && pred_zero {
                    hit0 += 1;
                } else if v > 0 && !pred_zero {
                    hit1 += 1;
                }
            }
            Ok(ClassificationRow {
                threshold: c,
                sensitivity: (zeros > 0).then(|| hit0 as f64 / zeros as f64),
                specificity: (positives > 0).then(|| hit1 as f64 / positives as f64),
            })
        })
        .collect()
}

pub fn zero_classification_table(
    fit: &FitResult,
    design: &Design,
    y: &[u64],
    thresholds: &[f64],
) -> Result<Vec<ClassificationRow>> {
    let st = compute_states(&fit.params, &design.x, &design.u, y)?;
    classify_zeros(&st.mean, y, thresholds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Forecast {
    pub lambda: f64,
    pub pi: f64,
    /// `Lambda_{N+1}`
    pub mean: f64,
    pub var: f64,
    pub distribution: ZinbDistribution,
}

/// One-step-ahead predictive law after running the recursions over `y`.
pub fn forecast_from_params(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
    x_next: &[f64],
    u_next: &[f64],
) -> Result<Forecast> {
    if x_next.len() != params.beta.len() {
        return Err(Error::DimensionMismatch { what: "x_{N+1}", expected: params.beta.len(), actual: x_next.len() });
    }
    if u_next.len() != params.delta.len() {
        return Err(Error::DimensionMismatch { what: "u_{N+1}", expected: params.delta.len(), actual: u_next.len() });
    }
    crate::model::check_dimensions(params, x, u, y.len())?;
    let mut rec = StateRecursion::new(params);
    for (t, &yt) in y.iter().enumerate() {
        rec.next_states();
        let u_row: Vec<f64> = if params.delta.is_empty() { Vec::new() } else { u.row(t).iter().copied().collect() };
        let step = rec.predict(x.row(t).iter().copied(), u_row);
        rec.observe(&step, yt as f64);
    }
    rec.next_states();
    let step = rec.predict(x_next.iter().copied(), u_next.iter().copied());
    Ok(Forecast {
        lambda: step.lambda,
        pi: step.pi,
        mean: step.mean,
        var: step.var,
        distribution: step.distribution(params.k),
    })
}

pub fn one_step_forecast(
    fit: &FitResult,
    design: &Design,
    y: &[u64],
    x_next: &[f64],
    u_next: &[f64],
) -> Result<Forecast> {
    forecast_from_params(&fit.params, &design.x, &design.u, y, x_next, u_next)
}
