use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use super::spec::{CovariateRecipe, ModelSpec};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Observed counts plus named covariate columns, aligned by time.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    pub y: Vec<u64>,
    /// Named covariate columns in file order.
    pub columns: Vec<(String, Vec<f64>)>,
    /// Optional explicit time index.
    pub time: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(y: Vec<u64>) -> Self {
        Dataset { y, columns: Vec::new(), time: None }
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.columns.push((name.into(), values));
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn zero_count(&self) -> usize {
        self.y.iter().filter(|&&v| v == 0).count()
    }

    pub fn zero_fraction(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.zero_count() as f64 / self.y.len() as f64
    }

    pub fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(|&v| v as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::InvalidInput("dataset has no observations".into()));
        }
        let n = self.y.len();
        for (name, col) in &self.columns {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "covariate column",
                    expected: n,
                    actual: col.len(),
                });
            }
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(alloc::format!(
                    "column `{name}` has a non-finite value at row {}",
                    t + 1
                )));
            }
        }
        if let Some(time) = &self.time {
            if time.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "time index",
                    expected: n,
                    actual: time.len(),
                });
            }
        }
        Ok(())
    }
}

/// Design matrices for the two linear predictors, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// `N x n1`, rows are `x_t`.
    pub x: DMatrix<f64>,
    /// `N x n2`, rows are `u_t`. Zero columns for a plain NB model.
    pub u: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub u_names: Vec<String>,
}

impl Design {
    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }
}

/// Builds `x_t` and `u_t` for `t = 1..N` from the recipes in `spec`.
pub fn build_design(spec: &ModelSpec, dataset: &Dataset) -> Result<Design> {
    spec.validate()?;
    dataset.validate()?;
    let n = dataset.len();
    spec.validate_length(n)?;
    let x = build_block(&spec.w_covariates, dataset)?;
    let u = build_block(&spec.m_covariates, dataset)?;
    let (x_names, u_names) = spec.column_names();
    Ok(Design { x, u, x_names, u_names })
}

fn build_block(recipes: &[CovariateRecipe], dataset: &Dataset) -> Result<DMatrix<f64>> {
    let n = dataset.len();
    let width: usize = recipes.iter().map(CovariateRecipe::width).sum();
    let mut m = DMatrix::zeros(n, width);
    let mut col = 0;
    for recipe in recipes {
        recipe.validate()?;
        match recipe {
            CovariateRecipe::External { column } => {
                let values = dataset
                    .column(column)
                    .ok_or_else(|| Error::UnknownColumn(column.clone()))?;
                for (t, v) in values.iter().enumerate() {
                    m[(t, col)] = *v;
                }
            }
            CovariateRecipe::LaggedIndicator { lag } => {
                for t in *lag..n {
                    m[(t, col)] = if dataset.y[t - lag] > 0 { 1.0 } else { 0.0 };
                }
            }
            _ => {
                for t in 0..n {
                    let row = deterministic_regressors(recipe, t + 1, n);
                    for (j, v) in row.iter().enumerate() {
                        m[(t, col + j)] = *v;
                    }
                }
            }
        }
        col += recipe.width();
    }
    Ok(m)
}

/// Values of a data-free recipe at one-based time `t` in a series of length `n`.
///
/// Valid for `t > n` as well, which is how forecast rows are produced.
/// Returns an empty vector for data-dependent recipes.
pub fn deterministic_regressors(recipe: &CovariateRecipe, t: usize, n: usize) -> Vec<f64> {
    let tp = (t - 1) as f64;
    match recipe {
        CovariateRecipe::Intercept => alloc::vec![1.0],
        CovariateRecipe::LinearTrend => {
            let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
            alloc::vec![tp / denom]
        }
        CovariateRecipe::ScaledTime { divisor } => alloc::vec![t as f64 / divisor],
        CovariateRecipe::Harmonic { period } => {
            let a = 2.0 * PI * tp / period;
            alloc::vec![a.cos(), a.sin()]
        }
        CovariateRecipe::External { .. } | CovariateRecipe::LaggedIndicator { .. } => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::Orders;

    fn spec(w: Vec<CovariateRecipe>) -> ModelSpec {
        ModelSpec::new(w, alloc::vec![CovariateRecipe::Intercept], Orders::default())
    }

    #[test]
    fn trend_starts_at_zero_and_ends_at_one() {
        let ds = Dataset::new(alloc::vec![1; 149]);
        let d = build_design(&spec(alloc::vec![CovariateRecipe::LinearTrend]), &ds).unwrap();
        assert_eq!(d.x[(0, 0)], 0.0);
        assert_eq!(d.x[(148, 0)], 1.0);
        assert!(d.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn harmonic_quarter_period() {
        let ds = Dataset::new(alloc::vec![1; 30]);
        let d = build_design(&spec(alloc::vec![CovariateRecipe::Harmonic { period: 52.0 }]), &ds)
            .unwrap();
        // t' = 13 is row 14
        assert!(d.x[(13, 0)].abs() < 1e-15);
        assert!((d.x[(13, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model3_design_has_four_columns() {
        let ds = Dataset::new(alloc::vec![0; 60]);
        let s = spec(alloc::vec![
            CovariateRecipe::Intercept,
            CovariateRecipe::LinearTrend,
            CovariateRecipe::Harmonic { period: 52.0 },
        ]);
        let d = build_design(&s, &ds).unwrap();
        assert_eq!(d.x.ncols(), 4);
        assert_eq!(d.x_names.len(), 4);
    }

    #[test]
    fn scaled_time_and_indicator() {
        let ds = Dataset::new(alloc::vec![0, 3, 0, 2]);
        let s = spec(alloc::vec![
            CovariateRecipe::ScaledTime { divisor: 1000.0 },
            CovariateRecipe::LaggedIndicator { lag: 1 },
        ]);
        let d = build_design(&s, &ds).unwrap();
        assert_eq!(d.x[(0, 0)], 0.001);
        assert_eq!(d.x.column(1).iter().copied().collect::<Vec<_>>(), alloc::vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn external_columns_and_errors() {
        let ds = Dataset::new(alloc::vec![1, 2, 3]).with_column("hmd", alloc::vec![0.5, 0.6, 0.7]);
        let ok = spec(alloc::vec![CovariateRecipe::External { column: "hmd".into() }]);
        assert_eq!(build_design(&ok, &ds).unwrap().x[(2, 0)], 0.7);
        let bad = spec(alloc::vec![CovariateRecipe::External { column: "rain".into() }]);
        assert_eq!(build_design(&bad, &ds), Err(Error::UnknownColumn("rain".into())));
        assert!(build_design(&spec(alloc::vec![]), &ds).is_err());
        let neg = spec(alloc::vec![CovariateRecipe::Harmonic { period: -1.0 }]);
        assert!(build_design(&neg, &ds).is_err());
    }
}
