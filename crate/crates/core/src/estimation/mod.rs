//! Starting values, Newton-Raphson and EM fitting, and inference.

mod inference;
mod init;
mod optimizer;

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::likelihood::{evaluate, internal_gradient, Objective};
use crate::model::{
    build_design, compute_states, Dataset, Design, Method, ModelSpec, ParameterSet,
};
use crate::special::log_add_exp;

pub use inference::{
    inference_from_covariance, invert_information, likelihood_ratio, likelihood_ratio_test,
    standard_errors, vuong_test, wald_test, wald_test_covariance, Inference, TestResult,
};
pub use init::initialize_from_design;
use optimizer::{negative_hessian, newton_maximize, NewtonControl};

/// EM decreases larger than this abort the fit.
pub const EM_MONOTONE_TOL: f64 = 1e-8;

/// Posterior probabilities that each observation came from the zero state.
#[derive(Debug, Clone, PartialEq)]
pub struct SStep {
    pub s_hat: Vec<f64>,
}

/// Output of one fit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub params: ParameterSet,
    /// `false` for coefficients held fixed.
    pub free: Vec<bool>,
    /// Standard errors in flat order, zero for fixed coefficients.
    /// Absent when the observed information could not be inverted.
    pub se: Option<Vec<f64>>,
    /// Condition number of the observed information over the free parameters.
    pub condition: Option<f64>,
    /// Inverse observed information in natural coordinates (`k` via the delta method).
    #[cfg_attr(feature = "serde", serde(with = "matrix_rows"))]
    pub cov: Option<DMatrix<f64>>,
    pub loglik: f64,
    pub n_obs: usize,
    /// Number of estimated parameters.
    pub n_params: usize,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    /// Observed partial log-likelihood after each iteration, starting value first.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Largest absolute free score coordinate at the estimate.
    pub fn score_max(&self, x: &DMatrix<f64>, u: &DMatrix<f64>, y: &[u64]) -> Result<f64> {
        let g = crate::likelihood::score(&self.params, x, u, y)?;
        Ok(g.iter()
            .zip(&self.free)
            .filter(|(_, f)| **f)
            .fold(0.0, |m, (v, _)| m.max(v.abs())))
    }
}

#[cfg(feature = "serde")]
mod matrix_rows {
    use alloc::vec::Vec;
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Option<Vec<Vec<f64>>> =
            m.as_ref().map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect());
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        Ok(rows.map(|rows| {
            let n = rows.len();
            let m = rows.first().map_or(0, Vec::len);
            DMatrix::from_fn(n, m, |i, j| rows[i][j])
        }))
    }
}

/// Moment-based starting values for `spec` on `dataset`.
pub fn initialize(dataset: &Dataset, spec: &ModelSpec) -> Result<ParameterSet> {
    let design = build_design(spec, dataset)?;
    initialize_from_design(spec, &design, &dataset.y)
}

/// Posterior zero-state probabilities at `params`.
pub fn e_step(params: &ParameterSet, x: &DMatrix<f64>, u: &DMatrix<f64>, y: &[u64]) -> Result<SStep> {
    let st = compute_states(params, x, u, y)?;
    let k = params.k;
    let s_hat = y
        .iter()
        .enumerate()
        .map(|(t, &yt)| {
            let pi = st.pi[t];
            if yt > 0 || pi == 0.0 {
                return 0.0;
            }
            let ln_nb0 = -k * (st.lambda[t] / k).ln_1p();
            let ln_zero = pi.ln();
            (ln_zero - log_add_exp(ln_zero, (-pi).ln_1p() + ln_nb0)).exp()
        })
        .collect();
    Ok(SStep { s_hat })
}

type Covariance = (Option<DMatrix<f64>>, Option<Vec<f64>>, Option<f64>);

struct Problem<'a> {
    spec: &'a ModelSpec,
    x: &'a DMatrix<f64>,
    u: &'a DMatrix<f64>,
    y: &'a [u64],
    free_idx: Vec<usize>,
    free: Vec<bool>,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a ModelSpec, design: &'a Design, y: &'a [u64]) -> Result<Self> {
        spec.validate()?;
        spec.validate_length(y.len())?;
        let free = spec.free_mask();
        let free_idx = (0..free.len()).filter(|&i| free[i]).collect();
        Ok(Problem { spec, x: &design.x, u: &design.u, y, free_idx, free })
    }

    fn start(&self, init: &ParameterSet) -> Result<Vec<f64>> {
        init.check_layout(&self.spec.layout())?;
        init.validate()?;
        let mut v = init.to_internal();
        for (i, f) in self.free.iter().enumerate() {
            if !f {
                v[i] = 0.0;
            }
        }
        Ok(v)
    }

    fn objective<'s>(
        &'s self,
        kind: Objective<'s>,
    ) -> impl FnMut(&[f64], bool) -> Result<(f64, Vec<f64>)> + 's {
        let layout = self.spec.layout();
        move |v: &[f64], want_grad: bool| {
            let p = ParameterSet::from_internal(&layout, v)?;
            let ev = evaluate(&p, self.x, self.u, self.y, kind, want_grad)?;
            let mut g = ev.grad;
            internal_gradient(&mut g, p.k);
            Ok((ev.value, g))
        }
    }

    fn params(&self, v: &[f64]) -> Result<ParameterSet> {
        ParameterSet::from_internal(&self.spec.layout(), v)
    }

    fn loglik(&self, v: &[f64]) -> Result<f64> {
        Ok(evaluate(&self.params(v)?, self.x, self.u, self.y, Objective::Observed, false)?.value)
    }

    /// Covariance and standard errors at the estimate, or a warning when the
    /// information cannot be inverted.
    fn covariance(&self, v: &[f64], warnings: &mut Vec<String>) -> Covariance {
        let mut f = self.objective(Objective::Observed);
        let info = match negative_hessian(&mut f, v, &self.free_idx) {
            Ok(i) => i,
            Err(e) => {
                warnings.push(alloc::format!("observed information unavailable: {e}"));
                return (None, None, None);
            }
        };
        let condition = Some(optimizer::condition_number(&info)).filter(|c| c.is_finite());
        match inference::invert_information(&info) {
            Ok(inv) => {
                let np = v.len();
                let k = libm::exp(v[np - 1]);
                let mut cov = DMatrix::zeros(np, np);
                for (r, &i) in self.free_idx.iter().enumerate() {
                    for (c, &j) in self.free_idx.iter().enumerate() {
                        let ji = if i == np - 1 { k } else { 1.0 };
                        let jj = if j == np - 1 { k } else { 1.0 };
                        cov[(i, j)] = ji * jj * inv[(r, c)];
                    }
                }
                let se: Vec<f64> = (0..np).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
                if (0..np).any(|i| cov[(i, i)] < 0.0) {
                    warnings.push("negative variance in the inverse information".into());
                }
                (Some(cov), Some(se), condition)
            }
            Err(e) => {
                warnings.push(alloc::format!("standard errors unavailable: {e}"));
                (None, None, condition)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        v: Vec<f64>,
        loglik: f64,
        method: Method,
        converged: bool,
        iterations: usize,
        trace: Vec<f64>,
        mut warnings: Vec<String>,
    ) -> Result<FitResult> {
        let (cov, se, condition) = self.covariance(&v, &mut warnings);
        if cov.is_none() && converged {
            warnings.push("fit converged but the information is not positive definite".into());
        }
        Ok(FitResult {
            params: self.params(&v)?,
            free: self.free.clone(),
            se,
            condition,
            cov,
            loglik,
            n_obs: self.y.len(),
            n_params: self.free_idx.len(),
            method,
            converged,
            iterations,
            trace,
            warnings,
        })
    }
}

/// Newton-Raphson maximization of the partial log-likelihood.
pub fn fit_newton_raphson_design(
    spec: &ModelSpec,
    design: &Design,
    y: &[u64],
    init: &ParameterSet,
) -> Result<FitResult> {
    let prob = Problem::new(spec, design, y)?;
    let start = prob.start(init)?;
    let o = &spec.options;
    let ctl = NewtonControl {
        max_iter: o.max_iter,
        step_tol: o.step_tol,
        value_tol: o.loglik_tol,
        grad_tol: None,
    };
    let mut f = prob.objective(Objective::Observed);
    let out = newton_maximize(&mut f, start, &prob.free_idx, ctl)?;
    prob.finish(out.point, out.value, Method::Nr, out.converged, out.iterations, out.trace, out.warnings)
}

/// EM: alternate E-step weights and a Newton-Raphson M-step on `Q`.
pub fn fit_em_design(
    spec: &ModelSpec,
    design: &Design,
    y: &[u64],
    init: &ParameterSet,
) -> Result<FitResult> {
    let prob = Problem::new(spec, design, y)?;
    let mut v = prob.start(init)?;
    let o = &spec.options;
    let inner = NewtonControl {
        max_iter: o.inner_max_iter,
        step_tol: o.step_tol,
        value_tol: o.loglik_tol,
        grad_tol: Some(o.inner_grad_tol),
    };
    let mut pl = prob.loglik(&v)?;
    if !pl.is_finite() {
        return Err(Error::Numerical("log-likelihood is not finite at the starting point".into()));
    }
    let mut trace = alloc::vec![pl];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut capped = 0usize;
    while iterations < o.em_max_iter {
        iterations += 1;
        let s = e_step(&prob.params(&v)?, prob.x, prob.u, y)?;
        let mut q = prob.objective(Objective::Complete { s_hat: &s.s_hat });
        let m = newton_maximize(&mut q, v.clone(), &prob.free_idx, inner)?;
        let new_pl = prob.loglik(&m.point)?;
        if new_pl < pl - EM_MONOTONE_TOL {
            return Err(Error::EmMonotonicity { iteration: iterations, decrease: pl - new_pl });
        }
        if !m.converged {
            capped += 1;
        }
        v = m.point;
        trace.push(new_pl);
        let rel = (new_pl - pl).abs() / pl.abs().max(1e-300);
        pl = new_pl;
        if rel < o.em_rel_tol {
            converged = true;
            break;
        }
    }
    if capped > 0 {
        warnings.push(alloc::format!("M-step hit its iteration cap in {capped} of {iterations} EM iterations"));
    }
    if !converged {
        warnings.push(alloc::format!("EM iteration cap {} reached", o.em_max_iter));
    }
    prob.finish(v, pl, Method::Em, converged, iterations, trace, warnings)
}

/// Fits with the method selected in `spec.options`.
pub fn fit_design(spec: &ModelSpec, design: &Design, y: &[u64], init: &ParameterSet) -> Result<FitResult> {
    match spec.options.method {
        Method::Nr => fit_newton_raphson_design(spec, design, y, init),
        Method::Em => fit_em_design(spec, design, y, init),
    }
}

pub fn fit_newton_raphson(dataset: &Dataset, spec: &ModelSpec, init: &ParameterSet) -> Result<FitResult> {
    let design = build_design(spec, dataset)?;
    fit_newton_raphson_design(spec, &design, &dataset.y, init)
}

pub fn fit_em(dataset: &Dataset, spec: &ModelSpec, init: &ParameterSet) -> Result<FitResult> {
    let design = build_design(spec, dataset)?;
    fit_em_design(spec, &design, &dataset.y, init)
}

/// Builds the design, initializes from moments when `init` is `None`, and fits.
pub fn fit(dataset: &Dataset, spec: &ModelSpec, init: Option<&ParameterSet>) -> Result<FitResult> {
    let design = build_design(spec, dataset)?;
    let start = match init {
        Some(p) => p.clone(),
        None => initialize_from_design(spec, &design, &dataset.y)?,
    };
    fit_design(spec, &design, &dataset.y, &start)
}
