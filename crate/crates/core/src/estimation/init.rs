use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{CovariateRecipe, Design, ModelSpec, ParameterSet, PREDICTOR_BOUND};
use crate::special::logit;

/// Moment-based starting values.
///
/// `beta` is the least-squares fit of `log max(y, 0.5)` on `x_t`, `k` the
/// method-of-moments value on the positive counts, and the logit intercept
/// matches the zeros the NB part cannot explain. ARMA terms start at zero.
pub fn initialize_from_design(spec: &ModelSpec, design: &Design, y: &[u64]) -> Result<ParameterSet> {
    let n = y.len();
    let layout = spec.layout();
    let needed = layout.n1 + layout.n2 + spec.orders.max_lag();
    if n <= needed {
        return Err(Error::InvalidInput(alloc::format!(
            "series length {n} must exceed {needed} for initialization"
        )));
    }
    let positives: Vec<f64> = y.iter().filter(|&&v| v > 0).map(|&v| v as f64).collect();
    if positives.is_empty() {
        return Err(Error::Degenerate("all counts are zero".into()));
    }

    let target = DVector::from_iterator(n, y.iter().map(|&v| (v as f64).max(0.5).ln()));
    let beta = least_squares(&design.x, &target)?;

    let m = positives.iter().sum::<f64>() / positives.len() as f64;
    let s2 = if positives.len() > 1 {
        positives.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (positives.len() - 1) as f64
    } else {
        0.0
    };
    let k = m * m / (s2 - m).max(0.1);

    let mut params = ParameterSet::zeros(&layout);
    params.beta = beta.iter().copied().collect();
    params.k = k;

    if spec.zero_inflated {
        let fitted = &design.x * &beta;
        let nb_zero = fitted
            .iter()
            .map(|w| {
                let lam = w.clamp(-PREDICTOR_BOUND, PREDICTOR_BOUND).exp();
                (-k * (lam / k).ln_1p()).exp()
            })
            .sum::<f64>()
            / n as f64;
        let observed = y.iter().filter(|&&v| v == 0).count() as f64 / n as f64;
        let excess = (observed - nb_zero).clamp(0.01, 0.99);
        if let Some(col) = intercept_column(&spec.m_covariates) {
            params.delta[col] = logit(excess);
        }
    }
    Ok(params)
}

fn intercept_column(recipes: &[CovariateRecipe]) -> Option<usize> {
    let mut col = 0;
    for r in recipes {
        if matches!(r, CovariateRecipe::Intercept) {
            return Some(col);
        }
        col += r.width();
    }
    None
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    svd.solve(y, 1e-12)
        .map_err(|e| Error::Numerical(alloc::format!("least-squares start failed: {e}")))
}
