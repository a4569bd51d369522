use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use super::optimizer::condition_number;
use super::FitResult;
use crate::error::{Error, Result};
use crate::special::{chi2_sf, normal_quantile, normal_sf};

/// Wald intervals and z tests for every parameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Inference {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// `estimate / se`; absent for fixed coefficients.
    pub z: Vec<Option<f64>>,
    /// Two-sided normal p-value of `estimate = 0`.
    pub p_value: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestResult {
    pub statistic: f64,
    /// Chi-square degrees of freedom; absent for normal-reference tests.
    pub df: Option<f64>,
    pub p_value: f64,
}

/// Inverse of a symmetric positive-definite information matrix.
pub fn invert_information(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match info.clone().cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            // the solve leaves last-bit asymmetry
            Ok((&inv + inv.transpose()) * 0.5)
        }
        None => Err(Error::SingularInformation { condition: condition_number(info) }),
    }
}

/// Wald intervals at level `1 - alpha` from an estimate and its covariance.
pub fn inference_from_covariance(estimate: &[f64], cov: &DMatrix<f64>, alpha: f64) -> Result<Inference> {
    let p = estimate.len();
    if cov.nrows() != p || cov.ncols() != p {
        return Err(Error::DimensionMismatch { what: "covariance", expected: p, actual: cov.nrows() });
    }
    let q = normal_quantile(1.0 - alpha / 2.0);
    let se: Vec<f64> = (0..p).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let z: Vec<Option<f64>> = estimate
        .iter()
        .zip(&se)
        .map(|(e, s)| if *s > 0.0 { Some(e / s) } else { None })
        .collect();
    Ok(Inference {
        estimate: estimate.to_vec(),
        ci_lower: estimate.iter().zip(&se).map(|(e, s)| e - q * s).collect(),
        ci_upper: estimate.iter().zip(&se).map(|(e, s)| e + q * s).collect(),
        p_value: z.iter().map(|z| z.map(|z| 2.0 * normal_sf(z.abs()))).collect(),
        se,
        z,
    })
}

/// Standard errors and 95% intervals of a fit.
pub fn standard_errors(fit: &FitResult) -> Result<Inference> {
    let cov = fit
        .cov
        .as_ref()
        .ok_or(Error::SingularInformation { condition: fit.condition.unwrap_or(f64::INFINITY) })?;
    inference_from_covariance(&fit.params.to_vec(), cov, 0.05)
}

/// Wald statistic for `C theta = zeta` with covariance `cov`.
pub fn wald_test_covariance(
    estimate: &[f64],
    cov: &DMatrix<f64>,
    c: &DMatrix<f64>,
    zeta: &[f64],
) -> Result<TestResult> {
    let p = estimate.len();
    let m = c.nrows();
    if c.ncols() != p {
        return Err(Error::DimensionMismatch { what: "contrast columns", expected: p, actual: c.ncols() });
    }
    if zeta.len() != m {
        return Err(Error::DimensionMismatch { what: "hypothesis vector", expected: m, actual: zeta.len() });
    }
    if m == 0 || m > p || c.rank(1e-10 * c.amax().max(1e-300)) != m {
        return Err(Error::InvalidInput("contrast matrix must have full row rank".into()));
    }
    let diff = c * DVector::from_column_slice(estimate) - DVector::from_column_slice(zeta);
    let middle = c * cov * c.transpose();
    let inv = invert_information(&middle)?;
    let w = (diff.transpose() * inv * &diff)[(0, 0)];
    Ok(TestResult { statistic: w, df: Some(m as f64), p_value: chi2_sf(w, m as f64) })
}

/// Wald test of `C theta = zeta` for a fitted model.
pub fn wald_test(fit: &FitResult, c: &DMatrix<f64>, zeta: &[f64]) -> Result<TestResult> {
    let cov = fit
        .cov
        .as_ref()
        .ok_or(Error::SingularInformation { condition: fit.condition.unwrap_or(f64::INFINITY) })?;
    wald_test_covariance(&fit.params.to_vec(), cov, c, zeta)
}

/// Likelihood ratio test of a nested pair of fits.
pub fn likelihood_ratio_test(small: &FitResult, big: &FitResult) -> Result<TestResult> {
    likelihood_ratio(small.loglik, small.n_params, big.loglik, big.n_params)
}

/// `L = 2 (l_big - l_small)` against chi-square with `p_big - p_small` df.
pub fn likelihood_ratio(ll_small: f64, p_small: usize, ll_big: f64, p_big: usize) -> Result<TestResult> {
    if p_big < p_small {
        return Err(Error::InvalidInput("the larger model has fewer parameters".into()));
    }
    if ll_big < ll_small - 1e-6 {
        return Err(Error::InvalidInput(alloc::format!(
            "larger model fits worse by {:e}: models not nested or not converged",
            ll_small - ll_big
        )));
    }
    let stat = (2.0 * (ll_big - ll_small)).max(0.0);
    let df = (p_big - p_small) as f64;
    let p_value = if df == 0.0 {
        if stat > 1e-6 {
            return Err(Error::InvalidInput("equal parameter counts but different fits".into()));
        }
        1.0
    } else {
        chi2_sf(stat, df)
    };
    Ok(TestResult { statistic: stat, df: Some(df), p_value })
}

/// One-sided Vuong test from per-observation log-likelihoods; large `z`
/// favours the first model.
pub fn vuong_test(ll_first: &[f64], ll_second: &[f64]) -> Result<TestResult> {
    if ll_first.len() != ll_second.len() {
        return Err(Error::DimensionMismatch {
            what: "pointwise log-likelihoods",
            expected: ll_first.len(),
            actual: ll_second.len(),
        });
    }
    let n = ll_first.len();
    if n < 2 {
        return Err(Error::InvalidInput("Vuong test needs at least two observations".into()));
    }
    let m: Vec<f64> = ll_first.iter().zip(ll_second).map(|(a, b)| a - b).collect();
    let mean = m.iter().sum::<f64>() / n as f64;
    let var = m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::Numerical("pointwise log-likelihood differences have zero spread".into()));
    }
    let z = (n as f64).sqrt() * mean / var.sqrt();
    Ok(TestResult { statistic: z, df: None, p_value: normal_sf(z) })
}
