use alloc::string::String;
use alloc::vec::Vec;

use super::params::{Block, Layout};
use crate::error::{Error, Result};

/// One regressor recipe for a linear predictor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", try_from = "RecipeFields"))]
pub enum CovariateRecipe {
    /// Constant 1.
    Intercept,
    /// `t' / (N - 1)` with `t' = t - 1`, so values run over `[0, 1]`.
    LinearTrend,
    /// `t / divisor` with the one-based time index `t`.
    ScaledTime { divisor: f64 },
    /// The pair `cos(2 pi t'/period), sin(2 pi t'/period)`.
    Harmonic { period: f64 },
    /// A named dataset column, used as-is.
    External { column: String },
    /// `1{y_{t-lag} > 0}`, zero for `t <= lag`.
    LaggedIndicator { lag: usize },
}

/// Flat wire form; internally tagged unit variants would silently accept extra keys.
#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeFields {
    kind: String,
    divisor: Option<f64>,
    period: Option<f64>,
    column: Option<String>,
    lag: Option<usize>,
}

#[cfg(feature = "serde")]
impl TryFrom<RecipeFields> for CovariateRecipe {
    type Error = String;

    fn try_from(f: RecipeFields) -> core::result::Result<Self, String> {
        use alloc::format;
        let extra = |allowed: &str| -> core::result::Result<(), String> {
            let present = [
                ("divisor", f.divisor.is_some()),
                ("period", f.period.is_some()),
                ("column", f.column.is_some()),
                ("lag", f.lag.is_some()),
            ];
            match present.iter().find(|(n, p)| *p && *n != allowed) {
                Some((n, _)) => Err(format!("field `{n}` does not apply to kind `{}`", f.kind)),
                None => Ok(()),
            }
        };
        let need = |name: &str| format!("kind `{}` needs field `{name}`", f.kind);
        match f.kind.as_str() {
            "intercept" => extra("").map(|_| CovariateRecipe::Intercept),
            "linear-trend" => extra("").map(|_| CovariateRecipe::LinearTrend),
            "scaled-time" => {
                extra("divisor")?;
                Ok(CovariateRecipe::ScaledTime { divisor: f.divisor.ok_or_else(|| need("divisor"))? })
            }
            "harmonic" => {
                extra("period")?;
                Ok(CovariateRecipe::Harmonic { period: f.period.ok_or_else(|| need("period"))? })
            }
            "external" => {
                extra("column")?;
                Ok(CovariateRecipe::External { column: f.column.clone().ok_or_else(|| need("column"))? })
            }
            "lagged-indicator" => {
                extra("lag")?;
                Ok(CovariateRecipe::LaggedIndicator { lag: f.lag.ok_or_else(|| need("lag"))? })
            }
            other => Err(format!(
                "unknown kind `{other}`, expected one of intercept, linear-trend, scaled-time, harmonic, external, lagged-indicator"
            )),
        }
    }
}

impl CovariateRecipe {
    pub fn width(&self) -> usize {
        match self {
            CovariateRecipe::Harmonic { .. } => 2,
            _ => 1,
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        use alloc::format;
        match self {
            CovariateRecipe::Intercept => alloc::vec!["intercept".into()],
            CovariateRecipe::LinearTrend => alloc::vec!["trend".into()],
            CovariateRecipe::ScaledTime { divisor } => alloc::vec![format!("t/{divisor}")],
            CovariateRecipe::Harmonic { period } => {
                alloc::vec![format!("cos(2pi t/{period})"), format!("sin(2pi t/{period})")]
            }
            CovariateRecipe::External { column } => alloc::vec![column.clone()],
            CovariateRecipe::LaggedIndicator { lag } => alloc::vec![format!("I(y[t-{lag}]>0)")],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateRecipe::Harmonic { period } if !(*period > 0.0) || !period.is_finite() => Err(
                Error::InvalidInput(alloc::format!("harmonic period must be positive, got {period}")),
            ),
            CovariateRecipe::ScaledTime { divisor } if !(*divisor > 0.0) || !divisor.is_finite() => {
                Err(Error::InvalidInput(alloc::format!(
                    "time divisor must be positive, got {divisor}"
                )))
            }
            CovariateRecipe::LaggedIndicator { lag: 0 } => {
                Err(Error::InvalidInput("lagged indicator needs lag >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// ARMA orders of the two state processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Orders {
    pub p1: usize,
    pub q1: usize,
    pub p2: usize,
    pub q2: usize,
}

impl Orders {
    pub fn max_lag(&self) -> usize {
        self.p1.max(self.q1).max(self.p2).max(self.q2)
    }
}

/// A coefficient held fixed at zero during estimation (one-based `lag`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FixedLag {
    pub block: Block,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Method {
    Nr,
    #[default]
    Em,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nr => "NR",
            Method::Em => "EM",
        }
    }
}

/// Optimizer controls. Defaults: step 1e-8, log-likelihood 1e-10,
/// 200 NR iterations, 500 EM iterations with a 50-step inner NR.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EstimationOptions {
    pub method: Method,
    pub step_tol: f64,
    pub loglik_tol: f64,
    pub max_iter: usize,
    pub em_rel_tol: f64,
    pub em_max_iter: usize,
    pub inner_max_iter: usize,
    pub inner_grad_tol: f64,
    pub seed: u64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            method: Method::Em,
            step_tol: 1e-8,
            loglik_tol: 1e-10,
            max_iter: 200,
            em_rel_tol: 1e-8,
            em_max_iter: 500,
            inner_max_iter: 50,
            inner_grad_tol: 1e-8,
            seed: 0,
        }
    }
}

/// Complete description of a ZINB-ARMA model to fit or simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub orders: Orders,
    /// Recipes for `x_t` (log-mean predictor).
    pub w_covariates: Vec<CovariateRecipe>,
    /// Recipes for `u_t` (logit predictor). Must be empty iff `zero_inflated` is false.
    pub m_covariates: Vec<CovariateRecipe>,
    /// `false` fixes `pi_t = 0`, giving a plain NB-ARMA model.
    pub zero_inflated: bool,
    pub fixed: Vec<FixedLag>,
    pub options: EstimationOptions,
}

impl ModelSpec {
    pub fn new(
        w_covariates: Vec<CovariateRecipe>,
        m_covariates: Vec<CovariateRecipe>,
        orders: Orders,
    ) -> Self {
        ModelSpec {
            orders,
            w_covariates,
            m_covariates,
            zero_inflated: true,
            fixed: Vec::new(),
            options: EstimationOptions::default(),
        }
    }

    pub fn n1(&self) -> usize {
        self.w_covariates.iter().map(CovariateRecipe::width).sum()
    }

    pub fn n2(&self) -> usize {
        self.m_covariates.iter().map(CovariateRecipe::width).sum()
    }

    pub fn layout(&self) -> Layout {
        let (p2, q2) = if self.zero_inflated {
            (self.orders.p2, self.orders.q2)
        } else {
            (0, 0)
        };
        Layout {
            n1: self.n1(),
            p1: self.orders.p1,
            q1: self.orders.q1,
            n2: self.n2(),
            p2,
            q2,
        }
    }

    /// Flat indices of the parameters held fixed.
    pub fn fixed_indices(&self) -> Vec<usize> {
        let layout = self.layout();
        let mut out: Vec<usize> = self
            .fixed
            .iter()
            .map(|f| layout.offset(f.block) + f.lag - 1)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// `true` for each flat parameter index that is estimated.
    pub fn free_mask(&self) -> Vec<bool> {
        let mut mask = alloc::vec![true; self.layout().len()];
        for i in self.fixed_indices() {
            mask[i] = false;
        }
        mask
    }

    /// Number of estimated parameters.
    pub fn n_free(&self) -> usize {
        self.layout().len() - self.fixed_indices().len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_covariates.is_empty() {
            return Err(Error::InvalidInput("log-mean covariate list is empty".into()));
        }
        if self.zero_inflated && self.m_covariates.is_empty() {
            return Err(Error::InvalidInput("logit covariate list is empty".into()));
        }
        if !self.zero_inflated
            && (!self.m_covariates.is_empty() || self.orders.p2 > 0 || self.orders.q2 > 0)
        {
            return Err(Error::InvalidInput(
                "a model without zero inflation takes no logit covariates or ARMA terms".into(),
            ));
        }
        for r in self.w_covariates.iter().chain(&self.m_covariates) {
            r.validate()?;
        }
        let layout = self.layout();
        for f in &self.fixed {
            if f.block == Block::K || f.lag == 0 || f.lag > layout.block_len(f.block) {
                return Err(Error::InvalidInput(alloc::format!(
                    "fixed coefficient {}[{}] is out of range",
                    f.block.name(),
                    f.lag
                )));
            }
        }
        Ok(())
    }

    /// Checks the series length against the orders and parameter count.
    pub fn validate_length(&self, n: usize) -> Result<()> {
        if self.orders.max_lag() >= n {
            return Err(Error::InvalidInput(alloc::format!(
                "ARMA order {} must be below the series length {n}",
                self.orders.max_lag()
            )));
        }
        for r in self.w_covariates.iter().chain(&self.m_covariates) {
            if let CovariateRecipe::LaggedIndicator { lag } = r {
                if *lag >= n {
                    return Err(Error::InvalidInput(alloc::format!(
                        "indicator lag {lag} must be below the series length {n}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Regressor names for `x_t` and `u_t`.
    pub fn column_names(&self) -> (Vec<String>, Vec<String>) {
        let names = |rs: &[CovariateRecipe]| rs.iter().flat_map(|r| r.column_names()).collect();
        (names(&self.w_covariates), names(&self.m_covariates))
    }

    /// Display names for every flat parameter.
    pub fn parameter_names(&self) -> Vec<String> {
        use alloc::format;
        let (xn, un) = self.column_names();
        let l = self.layout();
        let mut out = Vec::with_capacity(l.len());
        out.extend(xn.iter().map(|n| format!("beta[{n}]")));
        out.extend((1..=l.p1).map(|i| format!("phi{i}")));
        out.extend((1..=l.q1).map(|i| format!("theta{i}")));
        out.extend(un.iter().map(|n| format!("delta[{n}]")));
        out.extend((1..=l.p2).map(|i| format!("alpha{i}")));
        out.extend((1..=l.q2).map(|i| format!("gamma{i}")));
        out.push("k".into());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model3() -> ModelSpec {
        let mut s = ModelSpec::new(
            alloc::vec![
                CovariateRecipe::Intercept,
                CovariateRecipe::LinearTrend,
                CovariateRecipe::Harmonic { period: 52.0 },
            ],
            alloc::vec![CovariateRecipe::Intercept, CovariateRecipe::Harmonic { period: 52.0 }],
            Orders { p1: 0, q1: 3, p2: 0, q2: 0 },
        );
        s.fixed.push(FixedLag { block: Block::Theta, lag: 2 });
        s
    }

    #[test]
    fn model3_has_ten_free_parameters() {
        let s = model3();
        s.validate().unwrap();
        assert_eq!(s.n1(), 4);
        assert_eq!(s.n2(), 3);
        assert_eq!(s.layout().len(), 11);
        assert_eq!(s.n_free(), 10);
        assert_eq!(s.fixed_indices(), alloc::vec![5]);
        assert_eq!(s.parameter_names()[5], "theta2");
    }

    #[test]
    fn rejects_bad_recipes() {
        let mut s = model3();
        s.w_covariates.push(CovariateRecipe::Harmonic { period: 0.0 });
        assert!(s.validate().is_err());
        let mut s = model3();
        s.m_covariates.clear();
        assert!(s.validate().is_err());
        let mut s = model3();
        s.fixed.push(FixedLag { block: Block::Theta, lag: 4 });
        assert!(s.validate().is_err());
    }

    #[test]
    fn orders_must_stay_below_length() {
        let s = model3();
        assert!(s.validate_length(3).is_err());
        assert!(s.validate_length(4).is_ok());
    }
}
