//! Series generation from the Gamma-Poisson hierarchy and the Monte Carlo
//! parameter-recovery study.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::estimation::{fit_em_design, fit_newton_raphson_design, initialize_from_design, FitResult};
use crate::model::{
    build_design, check_polynomial_roots, CovariateRecipe, Dataset, Design, Method, ModelSpec,
    ParameterSet, PolynomialKind, StateRecursion,
};
use crate::special::{kolmogorov_sf, normal_quantile};

/// Independent generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Root checks before simulating.
///
/// An AR polynomial with a root on or inside the unit circle is an error.
/// A non-invertible MA polynomial only produces a warning: the MA part acts on
/// standardized errors through a finite sum, so the recursion stays bounded.
pub fn check_simulation_roots(params: &ParameterSet) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    for (name, coeffs, kind) in [
        ("log-mean AR", &params.phi, PolynomialKind::Ar),
        ("logit AR", &params.alpha, PolynomialKind::Ar),
        ("log-mean MA", &params.theta, PolynomialKind::Ma),
        ("logit MA", &params.gamma, PolynomialKind::Ma),
    ] {
        let r = check_polynomial_roots(coeffs, kind)?;
        if r.ok {
            continue;
        }
        if kind == PolynomialKind::Ar {
            return Err(Error::RootCondition { polynomial: name, min_modulus: r.min_root_modulus });
        }
        warnings.push(alloc::format!(
            "{name} polynomial is not invertible (min root modulus {:.4})",
            r.min_root_modulus
        ));
    }
    Ok(warnings)
}

/// Regressor column filled from the simulated counts as they are drawn.
#[derive(Debug, Clone, Copy)]
struct LaggedColumn {
    in_x: bool,
    col: usize,
    lag: usize,
}

fn lagged_columns(spec: &ModelSpec) -> Vec<LaggedColumn> {
    let mut out = Vec::new();
    for (in_x, recipes) in [(true, &spec.w_covariates), (false, &spec.m_covariates)] {
        let mut col = 0;
        for r in recipes.iter() {
            if let CovariateRecipe::LaggedIndicator { lag } = r {
                out.push(LaggedColumn { in_x, col, lag: *lag });
            }
            col += r.width();
        }
    }
    out
}

fn draw_count<R: Rng + ?Sized>(rng: &mut R, lambda: f64, pi: f64, k: f64) -> Result<u64> {
    if pi > 0.0 && rng.random::<f64>() < pi {
        return Ok(0);
    }
    let gamma = Gamma::new(k, 1.0 / k)
        .map_err(|e| Error::InvalidInput(alloc::format!("gamma mixing draw: {e}")))?;
    let w: f64 = gamma.sample(rng);
    let rate = (lambda * w).min(Poisson::<f64>::MAX_LAMBDA);
    if !(rate > 0.0) {
        return Ok(0);
    }
    let pois = Poisson::new(rate)
        .map_err(|e| Error::Numerical(alloc::format!("Poisson draw at rate {rate}: {e}")))?;
    Ok(pois.sample(rng) as u64)
}

fn simulate_core<R: Rng + ?Sized>(
    params: &ParameterSet,
    x: &mut DMatrix<f64>,
    u: &mut DMatrix<f64>,
    lagged: &[LaggedColumn],
    rng: &mut R,
) -> Result<Vec<u64>> {
    let n = x.nrows();
    let mut y: Vec<u64> = Vec::with_capacity(n);
    let mut rec = StateRecursion::new(params);
    let zi = !params.delta.is_empty();
    for t in 0..n {
        for l in lagged {
            let v = if t >= l.lag && y[t - l.lag] > 0 { 1.0 } else { 0.0 };
            if l.in_x {
                x[(t, l.col)] = v;
            } else {
                u[(t, l.col)] = v;
            }
        }
        let u_row: Vec<f64> = if zi { u.row(t).iter().copied().collect() } else { Vec::new() };
        let step = rec.predict(x.row(t).iter().copied(), u_row);
        let yt = draw_count(rng, step.lambda, step.pi, params.k)?;
        rec.observe(&step, yt as f64);
        y.push(yt);
    }
    Ok(y)
}

/// Draws one series of length `x.nrows()` with fixed regressors.
pub fn simulate_series(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<u64>> {
    let mut rng = stream_rng(seed, 0);
    simulate_series_with(params, x, u, &mut rng)
}

/// As [`simulate_series`] with a caller-supplied generator.
pub fn simulate_series_with<R: Rng + ?Sized>(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    rng: &mut R,
) -> Result<Vec<u64>> {
    check_simulation_roots(params)?;
    crate::model::check_dimensions(params, x, u, x.nrows())?;
    simulate_core(params, &mut x.clone(), &mut u.clone(), &[], rng)
}

/// Simulates a dataset of length `n` under `spec`, with external columns
/// taken from `covariates` (which may hold only the columns, any `y` is ignored).
pub fn simulate_dataset<R: Rng + ?Sized>(
    spec: &ModelSpec,
    params: &ParameterSet,
    n: usize,
    covariates: &[(String, Vec<f64>)],
    rng: &mut R,
) -> Result<(Dataset, Design)> {
    params.check_layout(&spec.layout())?;
    check_simulation_roots(params)?;
    let mut shell = Dataset::new(vec![0; n]);
    for (name, values) in covariates {
        if values.len() < n {
            return Err(Error::DimensionMismatch { what: "covariate column", expected: n, actual: values.len() });
        }
        shell.columns.push((name.clone(), values[..n].to_vec()));
    }
    let mut design = build_design(spec, &shell)?;
    let lagged = lagged_columns(spec);
    let y = simulate_core(params, &mut design.x, &mut design.u, &lagged, rng)?;
    shell.y = y;
    Ok((shell, design))
}

/// Which estimators a Monte Carlo study runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EstimatorChoice {
    #[default]
    Em,
    Nr,
    Both,
}

impl EstimatorChoice {
    pub fn methods(self) -> &'static [Method] {
        match self {
            EstimatorChoice::Em => &[Method::Em],
            EstimatorChoice::Nr => &[Method::Nr],
            EstimatorChoice::Both => &[Method::Em, Method::Nr],
        }
    }
}

/// Starting values used for each replicate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum StartChoice {
    #[default]
    Truth,
    Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McStudyConfig {
    pub spec: ModelSpec,
    pub truth: ParameterSet,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub estimator: EstimatorChoice,
    pub start: StartChoice,
    pub seed: u64,
}

/// Failure share above which a study cell is flagged invalid.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

impl McStudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.truth.check_layout(&self.spec.layout())?;
        self.truth.validate()?;
        check_simulation_roots(&self.truth)?;
        if self.replications == 0 {
            return Err(Error::InvalidInput("replication count must be at least 1".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidInput("no sample sizes given".into()));
        }
        let min = self.spec.layout().len() + 5;
        if let Some(n) = self.sizes.iter().find(|&&n| n < min) {
            return Err(Error::InvalidInput(alloc::format!(
                "sample size {n} is below the parameter count plus five ({min})"
            )));
        }
        let external = self
            .spec
            .w_covariates
            .iter()
            .chain(&self.spec.m_covariates)
            .any(|r| matches!(r, CovariateRecipe::External { .. }));
        if external {
            return Err(Error::InvalidInput(
                "Monte Carlo studies need data-free covariate recipes".into(),
            ));
        }
        Ok(())
    }

    /// Stream index of replicate `rep` at the `size_index`-th sample size.
    pub fn stream(&self, size_index: usize, rep: usize) -> u64 {
        ((size_index as u64) << 32) | rep as u64
    }
}

/// Estimates from one replicate fit, or why it was dropped.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicateFit {
    Ok { estimate: Vec<f64>, se: Option<Vec<f64>>, loglik: f64, iterations: usize },
    NotConverged,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub size_index: usize,
    pub rep: usize,
    /// One entry per method in [`EstimatorChoice::methods`] order.
    pub fits: Vec<(Method, ReplicateFit)>,
}

fn summarize_fit(result: Result<FitResult>) -> ReplicateFit {
    match result {
        Ok(f) if f.converged => ReplicateFit::Ok {
            estimate: f.params.to_vec(),
            se: f.se,
            loglik: f.loglik,
            iterations: f.iterations,
        },
        Ok(_) => ReplicateFit::NotConverged,
        Err(e) => ReplicateFit::Failed(alloc::format!("{e}")),
    }
}

/// Simulates and fits one replicate. Deterministic in `(config.seed, size_index, rep)`.
pub fn run_replicate(config: &McStudyConfig, size_index: usize, rep: usize) -> ReplicateOutcome {
    let n = config.sizes[size_index];
    let mut rng = stream_rng(config.seed, config.stream(size_index, rep));
    let mut fits = Vec::new();
    let sim = simulate_dataset(&config.spec, &config.truth, n, &[], &mut rng);
    for &method in config.estimator.methods() {
        let outcome = match &sim {
            Err(e) => ReplicateFit::Failed(alloc::format!("{e}")),
            Ok((data, design)) => {
                let start = match config.start {
                    StartChoice::Truth => Ok(config.truth.clone()),
                    StartChoice::Moments => initialize_from_design(&config.spec, design, &data.y),
                };
                summarize_fit(start.and_then(|s| match method {
                    Method::Em => fit_em_design(&config.spec, design, &data.y, &s),
                    Method::Nr => fit_newton_raphson_design(&config.spec, design, &data.y, &s),
                }))
            }
        };
        fits.push((method, outcome));
    }
    ReplicateOutcome { size_index, rep, fits }
}

/// One row of the Est. / S.E. / |Bias| / C.I. table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McParameterRow {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    /// Monte Carlo standard error of the mean; absent with one replicate.
    pub se: Option<f64>,
    pub abs_bias: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub fixed: bool,
}

/// Summary of one estimator at one sample size.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McSummary {
    pub n: usize,
    pub method: Method,
    pub replications: usize,
    pub used: usize,
    pub not_converged: usize,
    pub failed: usize,
    /// More than the allowed share of replicates was dropped.
    pub invalid: bool,
    pub rows: Vec<McParameterRow>,
    /// Mean over the regression and ARMA coefficients of `|mean - truth|`.
    pub mean_abs_bias_nu: f64,
    /// Replicate x parameter estimates, replicate order.
    pub estimates: Vec<Vec<f64>>,
    /// Matching model-based standard errors (absent where unavailable).
    pub standard_errors: Vec<Option<Vec<f64>>>,
    pub failures: Vec<String>,
}

impl McSummary {
    /// Flat indices of the estimated regression and ARMA coefficients (everything but `k`).
    pub fn nu_indices(&self) -> Vec<usize> {
        let last = self.rows.len().saturating_sub(1);
        (0..last).filter(|&i| !self.rows[i].fixed).collect()
    }
}

/// Reduces replicate outcomes (any order) into per-size, per-method summaries.
pub fn summarize_study(config: &McStudyConfig, outcomes: &[ReplicateOutcome]) -> Vec<McSummary> {
    let names = config.spec.parameter_names();
    let truth = config.truth.to_vec();
    let free = config.spec.free_mask();
    let mut sorted: Vec<&ReplicateOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| (o.size_index, o.rep));
    let mut out = Vec::new();
    for (si, &n) in config.sizes.iter().enumerate() {
        for (mi, &method) in config.estimator.methods().iter().enumerate() {
            let mut estimates = Vec::new();
            let mut ses = Vec::new();
            let mut failures = Vec::new();
            let (mut nc, mut failed, mut total) = (0, 0, 0);
            for o in sorted.iter().filter(|o| o.size_index == si) {
                total += 1;
                match &o.fits[mi].1 {
                    ReplicateFit::Ok { estimate, se, .. } => {
                        estimates.push(estimate.clone());
                        ses.push(se.clone());
                    }
                    ReplicateFit::NotConverged => nc += 1,
                    ReplicateFit::Failed(msg) => {
                        failed += 1;
                        failures.push(alloc::format!("replicate {}: {msg}", o.rep));
                    }
                }
            }
            let used = estimates.len();
            let rows: Vec<McParameterRow> = (0..truth.len())
                .map(|j| {
                    let vals: Vec<f64> = estimates.iter().map(|e| e[j]).collect();
                    let mean = if used > 0 { vals.iter().sum::<f64>() / used as f64 } else { f64::NAN };
                    let se = (used > 1).then(|| {
                        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                            / (used - 1) as f64;
                        (var / used as f64).sqrt()
                    });
                    McParameterRow {
                        name: names[j].clone(),
                        truth: truth[j],
                        mean,
                        se,
                        abs_bias: (mean - truth[j]).abs(),
                        ci_lower: se.map(|s| mean - 1.96 * s),
                        ci_upper: se.map(|s| mean + 1.96 * s),
                        fixed: !free[j],
                    }
                })
                .collect();
            let nu: Vec<f64> = rows[..rows.len() - 1]
                .iter()
                .filter(|r| !r.fixed)
                .map(|r| r.abs_bias)
                .collect();
            let mean_abs_bias_nu = nu.iter().sum::<f64>() / nu.len().max(1) as f64;
            let dropped = nc + failed;
            out.push(McSummary {
                n,
                method,
                replications: total,
                used,
                not_converged: nc,
                failed,
                invalid: used == 0 || dropped as f64 > MAX_FAILURE_SHARE * total as f64,
                rows,
                mean_abs_bias_nu,
                estimates,
                standard_errors: ses,
                failures,
            });
        }
    }
    out
}

/// Sequential Monte Carlo study.
pub fn run_mc_study(config: &McStudyConfig) -> Result<Vec<McSummary>> {
    config.validate()?;
    let mut outcomes = Vec::new();
    for si in 0..config.sizes.len() {
        for rep in 0..config.replications {
            outcomes.push(run_replicate(config, si, rep));
        }
    }
    Ok(summarize_study(config, &outcomes))
}

/// One-sample Kolmogorov-Smirnov test against `N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_test_normal(values: &[f64]) -> Result<KsResult> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidInput("KS test on an empty sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = crate::special::normal_cdf(*x);
        d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f)
    });
    // Stephens' finite-sample scaling of the asymptotic distribution
    let sn = nf.sqrt();
    let p_value = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsResult { statistic: d, p_value })
}

/// Normal QQ data for one parameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QqSeries {
    pub index: usize,
    /// `(theoretical quantile, sorted standardized estimate)`.
    pub points: Vec<(f64, f64)>,
    pub ks: KsResult,
}

/// Standardizes `(estimate - truth) / se` for each listed parameter and pairs
/// the sorted values with normal quantiles at `(i - 0.5) / n`.
pub fn estimator_qq_data(
    estimates: &[Vec<f64>],
    truth: &[f64],
    ses: &[Vec<f64>],
    indices: &[usize],
) -> Result<Vec<QqSeries>> {
    if estimates.len() < 20 {
        return Err(Error::InvalidInput(alloc::format!(
            "QQ data needs at least 20 replicates, got {}",
            estimates.len()
        )));
    }
    if ses.len() != estimates.len() {
        return Err(Error::DimensionMismatch { what: "standard errors", expected: estimates.len(), actual: ses.len() });
    }
    let mut out = Vec::with_capacity(indices.len());
    for &j in indices {
        let mut z = Vec::with_capacity(estimates.len());
        for (e, s) in estimates.iter().zip(ses) {
            if !(s[j] > 0.0) {
                return Err(Error::InvalidInput(alloc::format!("zero standard error for parameter {j}")));
            }
            z.push((e[j] - truth[j]) / s[j]);
        }
        let first = estimates[0][j];
        if estimates.iter().all(|e| e[j] == first) {
            return Err(Error::InvalidInput(alloc::format!("parameter {j} has constant estimates")));
        }
        let ks = ks_test_normal(&z)?;
        z.sort_by(f64::total_cmp);
        let n = z.len() as f64;
        let points = z
            .iter()
            .enumerate()
            .map(|(i, v)| (normal_quantile((i as f64 + 0.5) / n), *v))
            .collect();
        out.push(QqSeries { index: j, points, ks });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layout, Orders};
    use rand_distr::StandardNormal;

    fn static_params(lambda: f64, pi: f64, k: f64) -> ParameterSet {
        let mut p = ParameterSet::zeros(&Layout { n1: 1, p1: 0, q1: 0, n2: 1, p2: 0, q2: 0 });
        p.beta = vec![lambda.ln()];
        p.delta = vec![crate::special::logit(pi)];
        p.k = k;
        p
    }

    #[test]
    fn static_draws_match_moments() {
        let n = 100_000;
        let x = DMatrix::from_element(n, 1, 1.0);
        let y = simulate_series(&static_params(2.0, 0.3, 2.0), &x, &x, 42).unwrap();
        let zeros = y.iter().filter(|&&v| v == 0).count() as f64 / n as f64;
        let mean = y.iter().sum::<u64>() as f64 / n as f64;
        assert!((zeros - 0.475).abs() < 0.005, "{zeros}");
        assert!((mean - 1.4).abs() < 0.02, "{mean}");
    }

    #[test]
    fn saturated_zero_state_gives_all_zeros() {
        let mut p = static_params(5.0, 0.5, 2.0);
        p.delta = vec![40.0];
        let x = DMatrix::from_element(200, 1, 1.0);
        let y = simulate_series(&p, &x, &x, 1).unwrap();
        assert!(y.iter().all(|&v| v == 0));
    }

    #[test]
    fn same_seed_same_series() {
        let mut p = static_params(3.0, 0.2, 1.5);
        p.theta = vec![0.4];
        let x = DMatrix::from_element(300, 1, 1.0);
        let a = simulate_series(&p, &x, &x, 9).unwrap();
        let b = simulate_series(&p, &x, &x, 9).unwrap();
        let c = simulate_series(&p, &x, &x, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn explosive_ar_is_rejected() {
        let mut p = static_params(3.0, 0.2, 1.5);
        p.phi = vec![1.2];
        let x = DMatrix::from_element(10, 1, 1.0);
        assert!(matches!(simulate_series(&p, &x, &x, 0), Err(Error::RootCondition { .. })));
        p.phi = vec![];
        p.theta = vec![-3.0, 0.0, -2.0];
        assert_eq!(check_simulation_roots(&p).unwrap().len(), 1);
    }

    #[test]
    fn lagged_indicator_follows_simulated_counts() {
        let spec = ModelSpec::new(
            vec![CovariateRecipe::Intercept, CovariateRecipe::LaggedIndicator { lag: 1 }],
            vec![CovariateRecipe::Intercept],
            Orders::default(),
        );
        let mut p = ParameterSet::zeros(&spec.layout());
        p.beta = vec![0.5, 0.7];
        p.delta = vec![-0.5];
        let (data, design) = simulate_dataset(&spec, &p, 80, &[], &mut stream_rng(3, 0)).unwrap();
        let rebuilt = build_design(&spec, &data).unwrap();
        assert_eq!(design.x, rebuilt.x);
    }

    #[test]
    fn ks_accepts_normal_draws_and_qq_is_sorted() {
        let mut rng = stream_rng(11, 0);
        let est: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![rng.sample::<f64, _>(StandardNormal)])
            .collect();
        let ses = vec![vec![1.0]; 400];
        let qq = estimator_qq_data(&est, &[0.0], &ses, &[0]).unwrap();
        assert!(qq[0].ks.p_value > 0.05);
        assert!(qq[0].points.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
        let constant = vec![vec![1.0]; 30];
        assert!(estimator_qq_data(&constant, &[0.0], &vec![vec![1.0]; 30], &[0]).is_err());
    }

    #[test]
    fn ks_rejects_shifted_sample() {
        let v: Vec<f64> = (0..500).map(|i| 1.0 + (i as f64 / 500.0 - 0.5)).collect();
        assert!(ks_test_normal(&v).unwrap().p_value < 1e-6);
    }
}
