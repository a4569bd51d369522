//! Command-line entry points.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use zinbarma_core::diagnostics::{
    acf_pacf, classify_zeros, excess_zero_probability, forecast_from_params, gof_summary, ljung_box,
    quantile_residuals_from_states, ExcessZeros, Forecast, GofSummary, ResidualMode,
};
use zinbarma_core::estimation::{
    fit_em_design, fit_newton_raphson_design, initialize_from_design, likelihood_ratio_test, vuong_test, FitResult,
    TestResult,
};
use zinbarma_core::likelihood::pointwise_loglik;
use zinbarma_core::model::{
    build_design, compute_states, deterministic_regressors, CovariateRecipe, Dataset, Design, Method, ModelSpec,
};
use zinbarma_core::simulation::{ks_test_normal, simulate_dataset, stream_rng, EstimatorChoice, KsResult};
use zinbarma_core::special::normal_quantile;

use crate::config::{parse_model_config, resolve, ResolvedConfig};
use crate::data::{fmt_f64, fmt_opt, load_csv_dataset, write_csv_dataset, write_table, ColumnSelection};
use crate::error::{AppError, Result};
use crate::mc::{run_study, thread_pool, write_study};
use crate::report::{write_estimates_csv, RunReport};

#[derive(Parser, Debug)]
#[command(name = "zinbarma", version, about = "Zero-inflated negative binomial ARMA models for count time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Nr,
    Em,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Nr => Method::Nr,
            MethodArg::Em => Method::Em,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    /// Log-linear moment fit, ARMA terms at zero.
    Moments,
    /// The config's `truth` block.
    Truth,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Em,
    Nr,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a series from the config's true parameters.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `simulation.seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Series length; defaults to `simulation.n` in the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit a model and write a JSON report plus an estimates table.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `estimation.method` in the config.
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        report: PathBuf,
        /// Estimates CSV; defaults to the report path with a `.csv` extension.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "moments")]
        init: InitArg,
        /// Recorded in the report; fitting itself is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Residual, correlogram and zero-inflation diagnostics of a fitted report.
    Diagnose {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed of the randomized quantile residuals.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use interval midpoints instead of random draws for quantile residuals.
        #[arg(long)]
        midpoint: bool,
        #[arg(long, default_value_t = 10)]
        max_lag: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.4,0.5,0.6")]
        thresholds: Vec<f64>,
    },
    /// Monte Carlo parameter-recovery study.
    McStudy {
        #[arg(long)]
        config: PathBuf,
        /// Replications per sample size; overrides `study.replications`.
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated sample sizes; overrides `study.sizes`.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `study.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// Stop starting new replicates after this many seconds.
        #[arg(long)]
        max_seconds: Option<f64>,
    },
    /// Fit several models to one series and tabulate fit criteria and tests.
    Compare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { config, out, seed, n } => simulate(&config, &out, seed, n),
        Command::Fit { data, config, method, report, table, init, seed } => {
            fit_cmd(&data, &config, method, &report, table, init, seed)
        }
        Command::Diagnose { report, data, out, seed, midpoint, max_lag, thresholds } => {
            let mode = if midpoint { ResidualMode::Midpoint } else { ResidualMode::Randomized { seed } };
            diagnose(&report, &data, &out, mode, max_lag, &thresholds)
        }
        Command::McStudy { config, reps, sizes, out, seed, estimator, max_seconds } => {
            mc_study(&config, reps, sizes, &out, seed, estimator, max_seconds)
        }
        Command::Compare { data, configs, out, method } => compare(&data, &configs, &out, method),
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, n: Option<usize>) -> Result<()> {
    let cfg = parse_model_config(config)?;
    let truth = cfg
        .truth
        .clone()
        .ok_or_else(|| AppError::Usage(format!("{}: simulation needs a `truth` block", config.display())))?;
    let sim = cfg.raw.simulation.as_ref();
    let n = n.or(sim.map(|s| s.n)).ok_or_else(|| AppError::Usage("series length missing: pass --n".into()))?;
    let seed = seed.or(sim.map(|s| s.seed)).unwrap_or(0);
    let (data, _) = simulate_dataset(&cfg.spec, &truth, n, &[], &mut stream_rng(seed, 0))?;
    write_csv_dataset(out, &data)?;
    eprintln!("wrote {} observations ({} zeros) to {}", data.len(), data.zero_count(), out.display());
    Ok(())
}

fn load(cfg: &ResolvedConfig, path: &Path) -> Result<(Dataset, Design)> {
    let d = cfg.data();
    let data = load_csv_dataset(path, &ColumnSelection { y: d.y_column, covariates: d.covariates })?;
    let design = build_design(&cfg.spec, &data)?;
    Ok((data, design))
}

fn fit_with(spec: &ModelSpec, method: Method, design: &Design, y: &[u64], init: &zinbarma_core::model::ParameterSet) -> Result<FitResult> {
    Ok(match method {
        Method::Nr => fit_newton_raphson_design(spec, design, y, init)?,
        Method::Em => fit_em_design(spec, design, y, init)?,
    })
}

fn fit_cmd(
    data: &Path,
    config: &Path,
    method: Option<MethodArg>,
    report: &Path,
    table: Option<PathBuf>,
    init: InitArg,
    seed: u64,
) -> Result<()> {
    let mut cfg = parse_model_config(config)?;
    if let Some(m) = method {
        cfg.spec.options.method = m.into();
        cfg.raw.estimation.method = m.into();
    }
    let (ds, design) = load(&cfg, data)?;
    let start = match init {
        InitArg::Moments => initialize_from_design(&cfg.spec, &design, &ds.y)?,
        InitArg::Truth => cfg
            .truth
            .clone()
            .ok_or_else(|| AppError::Usage("--init truth needs a `truth` block in the config".into()))?,
    };
    let fit = fit_with(&cfg.spec, cfg.spec.options.method, &design, &ds.y, &start)?;
    let rep = RunReport::build(&cfg, &ds, &design, &fit, seed);
    rep.write(report)?;
    let table = table.unwrap_or_else(|| report.with_extension("csv"));
    write_estimates_csv(&table, &rep.estimates)?;
    eprintln!(
        "{} fit of {}: loglik {:.6}, {} iterations, converged {}",
        fit.method.name(),
        cfg.name,
        fit.loglik,
        fit.iterations,
        fit.converged
    );
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

/// Regressor rows for `t = N + 1`; `None` when a recipe needs future data.
fn next_row(recipes: &[CovariateRecipe], y: &[u64]) -> Option<Vec<f64>> {
    let n = y.len();
    let mut row = Vec::new();
    for r in recipes {
        match r {
            CovariateRecipe::External { .. } => return None,
            CovariateRecipe::LaggedIndicator { lag } => {
                row.push(if n >= *lag && y[n - lag] > 0 { 1.0 } else { 0.0 })
            }
            other => row.extend(deterministic_regressors(other, n + 1, n)),
        }
    }
    Some(row)
}

#[derive(Debug, Serialize)]
struct DiagnosticsSummary {
    model: String,
    n_obs: usize,
    gof: Option<GofSummary>,
    ljung_box_quantile_residuals: TestResult,
    ljung_box_lags: usize,
    ljung_box_fitted_df: usize,
    quantile_residual_ks: KsResult,
    excess_zeros: ExcessZeros,
    forecast: Option<Forecast>,
    notes: Vec<String>,
}

fn report_fit(rep: &RunReport, spec: &ModelSpec) -> FitResult {
    FitResult {
        params: rep.params.clone(),
        free: spec.free_mask(),
        se: None,
        condition: rep.fit.condition,
        cov: None,
        loglik: rep.fit.loglik,
        n_obs: rep.data.n_obs,
        n_params: rep.fit.n_params,
        method: rep.fit.method,
        converged: rep.fit.converged,
        iterations: rep.fit.iterations,
        trace: rep.fit.trace.clone(),
        warnings: rep.warnings.clone(),
    }
}

fn diagnose(report: &Path, data: &Path, out: &Path, mode: ResidualMode, max_lag: usize, thresholds: &[f64]) -> Result<()> {
    let rep = RunReport::read(report)?;
    let cfg = resolve(rep.config.clone(), &rep.model)
        .map_err(|message| AppError::Config { path: report.to_path_buf(), message })?;
    let (ds, design) = load(&cfg, data)?;
    if ds.len() != rep.data.n_obs {
        return Err(AppError::Usage(format!(
            "data has {} rows but the report was fitted on {}",
            ds.len(),
            rep.data.n_obs
        )));
    }
    let fit = report_fit(&rep, &cfg.spec);
    let y = &ds.y;
    let st = compute_states(&fit.params, &design.x, &design.u, y)?;
    let qres = quantile_residuals_from_states(&st, fit.params.k, y, mode)?;
    std::fs::create_dir_all(out).map_err(|e| AppError::io(out, e))?;

    write_table(
        &out.join("residuals.csv"),
        &["t", "y", "fitted_mean", "fitted_variance", "pearson", "quantile"],
        (0..y.len()).map(|t| {
            vec![
                (t + 1).to_string(),
                y[t].to_string(),
                fmt_f64(st.mean[t]),
                fmt_f64(st.var[t]),
                fmt_f64(st.e[t]),
                fmt_f64(qres[t]),
            ]
        }),
    )?;

    let raw = acf_pacf(&ds.y_f64(), max_lag).ok();
    let res = acf_pacf(&qres, max_lag)?;
    write_table(
        &out.join("acf.csv"),
        &["lag", "acf_counts", "pacf_counts", "acf_residuals", "pacf_residuals"],
        (0..=max_lag).map(|h| {
            vec![
                h.to_string(),
                fmt_opt(raw.as_ref().map(|c| c.acf[h])),
                fmt_opt(raw.as_ref().map(|c| c.pacf[h])),
                fmt_f64(res.acf[h]),
                fmt_f64(res.pacf[h]),
            ]
        }),
    )?;

    let mut sorted = qres.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    write_table(
        &out.join("qq.csv"),
        &["normal_quantile", "quantile_residual"],
        sorted
            .iter()
            .enumerate()
            .map(|(i, v)| vec![fmt_f64(normal_quantile((i as f64 + 0.5) / n)), fmt_f64(*v)]),
    )?;

    let table = classify_zeros(&st.mean, y, thresholds)?;
    write_table(
        &out.join("classification.csv"),
        &["threshold", "sensitivity", "specificity"],
        table.iter().map(|r| vec![fmt_f64(r.threshold), fmt_opt(r.sensitivity), fmt_opt(r.specificity)]),
    )?;

    let fitted_df = cfg.spec.orders.p1 + cfg.spec.orders.q1;
    let mut notes = Vec::new();
    let forecast = match (next_row(&cfg.spec.w_covariates, y), next_row(&cfg.spec.m_covariates, y)) {
        (Some(x), Some(u)) => Some(forecast_from_params(&fit.params, &design.x, &design.u, y, &x, &u)?),
        _ => {
            notes.push("no forecast: a regressor needs data beyond the series".into());
            None
        }
    };
    let summary = DiagnosticsSummary {
        model: cfg.name.clone(),
        n_obs: y.len(),
        gof: gof_summary(&fit, &design, y).ok(),
        ljung_box_quantile_residuals: ljung_box(&qres, max_lag, fitted_df)?,
        ljung_box_lags: max_lag,
        ljung_box_fitted_df: fitted_df,
        quantile_residual_ks: ks_test_normal(&qres)?,
        excess_zeros: excess_zero_probability(&fit, &design, y)?,
        forecast,
        notes,
    };
    let path = out.join("diagnostics.json");
    let text = serde_json::to_string_pretty(&summary).expect("diagnostics serialize");
    std::fs::write(&path, text + "\n").map_err(|e| AppError::io(&path, e))?;
    eprintln!(
        "Ljung-Box Q = {:.4} (p = {:.4}), excess-zero probability {:.4}",
        summary.ljung_box_quantile_residuals.statistic,
        summary.ljung_box_quantile_residuals.p_value,
        summary.excess_zeros.p0
    );
    Ok(())
}

fn mc_study(
    config: &Path,
    reps: Option<usize>,
    sizes: Option<Vec<usize>>,
    out: &Path,
    seed: Option<u64>,
    estimator: Option<EstimatorArg>,
    max_seconds: Option<f64>,
) -> Result<()> {
    let cfg = parse_model_config(config)?;
    let mut study = cfg.study().map_err(|m| AppError::Config { path: config.to_path_buf(), message: m })?;
    if let Some(r) = reps {
        study.replications = r;
    }
    if let Some(s) = sizes {
        study.sizes = s;
    }
    if let Some(s) = seed {
        study.seed = s;
    }
    if let Some(e) = estimator {
        study.estimator = match e {
            EstimatorArg::Em => EstimatorChoice::Em,
            EstimatorArg::Nr => EstimatorChoice::Nr,
            EstimatorArg::Both => EstimatorChoice::Both,
        };
    }
    let budget = match max_seconds {
        Some(s) if !(s > 0.0) || !s.is_finite() => {
            return Err(AppError::Usage("--max-seconds must be positive".into()))
        }
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let run = run_study(&study, budget)?;
    write_study(out, &run, &cfg.spec.parameter_names())?;
    for s in &run.summaries {
        eprintln!(
            "N = {:>4} {}: {} of {} replicates used ({} not converged, {} failed){}; mean |bias| of nu {:.4}",
            s.n,
            s.method.name(),
            s.used,
            s.replications,
            s.not_converged,
            s.failed,
            if s.invalid { ", INVALID" } else { "" },
            s.mean_abs_bias_nu
        );
    }
    if run.timed_out {
        eprintln!("time budget reached after {:.1} s; completed {:?}", run.elapsed_seconds, run.completed);
    }
    Ok(())
}

struct Fitted {
    cfg: ResolvedConfig,
    fit: FitResult,
    gof: GofSummary,
    pointwise: Vec<f64>,
}

fn nested(small: &Fitted, big: &Fitted) -> bool {
    let names = big.cfg.spec.parameter_names();
    small.cfg.spec.zero_inflated == big.cfg.spec.zero_inflated
        && small.fit.n_params < big.fit.n_params
        && small.cfg.spec.parameter_names().iter().all(|n| names.contains(n))
}

fn same_log_mean(a: &ModelSpec, b: &ModelSpec) -> bool {
    use zinbarma_core::model::Block;
    let fixed = |s: &ModelSpec| -> Vec<(usize, usize)> {
        let mut v: Vec<_> = s
            .fixed
            .iter()
            .filter(|f| matches!(f.block, Block::Phi | Block::Theta))
            .map(|f| (f.block as usize, f.lag))
            .collect();
        v.sort_unstable();
        v
    };
    a.w_covariates == b.w_covariates
        && a.orders.p1 == b.orders.p1
        && a.orders.q1 == b.orders.q1
        && fixed(a) == fixed(b)
}

fn fit_one(cfg: ResolvedConfig, data: &Path) -> Result<Fitted> {
    let (ds, design) = load(&cfg, data)?;
    let start = initialize_from_design(&cfg.spec, &design, &ds.y)?;
    let fit = fit_with(&cfg.spec, cfg.spec.options.method, &design, &ds.y, &start)?;
    let gof = gof_summary(&fit, &design, &ds.y)?;
    let pointwise = pointwise_loglik(&fit.params, &design.x, &design.u, &ds.y)?;
    Ok(Fitted { cfg, fit, gof, pointwise })
}

fn compare(data: &Path, configs: &[PathBuf], out: &Path, method: Option<MethodArg>) -> Result<()> {
    let mut cfgs = Vec::with_capacity(configs.len());
    for c in configs {
        let mut cfg = parse_model_config(c)?;
        if let Some(m) = method {
            cfg.spec.options.method = m.into();
        }
        cfgs.push(cfg);
    }
    // collected in input order whatever the thread count
    let fits: Vec<Fitted> = thread_pool()?
        .install(|| cfgs.into_par_iter().map(|cfg| fit_one(cfg, data)).collect::<Result<Vec<_>>>())?;
    if fits.iter().any(|f| f.fit.n_obs != fits[0].fit.n_obs) {
        return Err(AppError::Usage("configs select series of different lengths".into()));
    }
    for f in &fits {
        eprintln!("{}: loglik {:.4}, AIC {:.4}", f.cfg.name, f.fit.loglik, f.gof.aic);
    }
    write_table(
        out,
        &["model", "method", "converged", "n_params", "loglik", "aic", "bic", "mse", "mad", "pearson_chi2", "deviance", "df"],
        fits.iter().map(|f| {
            vec![
                f.cfg.name.clone(),
                f.fit.method.name().into(),
                f.fit.converged.to_string(),
                f.fit.n_params.to_string(),
                fmt_f64(f.fit.loglik),
                fmt_f64(f.gof.aic),
                fmt_f64(f.gof.bic),
                fmt_f64(f.gof.mse),
                fmt_f64(f.gof.mad),
                fmt_f64(f.gof.pearson_chi2),
                fmt_f64(f.gof.deviance),
                fmt_f64(f.gof.df),
            ]
        }),
    )?;

    let mut rows = Vec::new();
    for i in 0..fits.len() {
        for j in 0..fits.len() {
            if i == j {
                continue;
            }
            let (a, b) = (&fits[i], &fits[j]);
            if nested(a, b) {
                let row = match likelihood_ratio_test(&a.fit, &b.fit) {
                    Ok(t) => vec![fmt_f64(t.statistic), fmt_opt(t.df), fmt_f64(t.p_value), String::new()],
                    Err(e) => vec![String::new(), String::new(), String::new(), e.to_string()],
                };
                rows.push([vec!["lrt".into(), a.cfg.name.clone(), b.cfg.name.clone()], row].concat());
            }
            if a.cfg.spec.zero_inflated && !b.cfg.spec.zero_inflated && same_log_mean(&a.cfg.spec, &b.cfg.spec) {
                let row = match vuong_test(&a.pointwise, &b.pointwise) {
                    Ok(t) => vec![fmt_f64(t.statistic), String::new(), fmt_f64(t.p_value), String::new()],
                    Err(e) => vec![String::new(), String::new(), String::new(), e.to_string()],
                };
                rows.push([vec!["vuong".into(), a.cfg.name.clone(), b.cfg.name.clone()], row].concat());
            }
        }
    }
    let stem = out.file_stem().map_or_else(|| "compare".into(), |s| s.to_string_lossy().into_owned());
    let tests = out.with_file_name(format!("{stem}_tests.csv"));
    write_table(&tests, &["test", "first", "second", "statistic", "df", "p_value", "note"], rows)?;
    Ok(())
}
