//! Parallel Monte Carlo driver. Replicates run on a rayon pool and are reduced
//! in replicate order, so results do not depend on the thread count.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use zinbarma_core::simulation::{
    estimator_qq_data, run_replicate, summarize_study, McStudyConfig, McSummary, QqSeries, ReplicateOutcome,
};

use crate::data::{fmt_f64, fmt_opt, write_table};
use crate::error::{AppError, Result};

pub const THREADS_ENV: &str = "ZINBARMA_THREADS";

/// Thread cap from `ZINBARMA_THREADS`, if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = configured_threads() {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| AppError::Usage(format!("cannot start worker threads: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyRun {
    pub summaries: Vec<McSummary>,
    /// Replicates finished at each sample size.
    pub completed: Vec<usize>,
    pub requested: usize,
    pub elapsed_seconds: f64,
    /// The time budget ran out before every replicate was run.
    pub timed_out: bool,
}

/// Runs the study, optionally stopping once `budget` has elapsed (replicates
/// already started are finished; the study is then marked timed out).
pub fn run_study(config: &McStudyConfig, budget: Option<Duration>) -> Result<StudyRun> {
    config.validate()?;
    let pool = thread_pool()?;
    let start = Instant::now();
    let chunk = pool.current_num_threads().max(1);
    let mut outcomes: Vec<ReplicateOutcome> = Vec::new();
    let mut completed = vec![0; config.sizes.len()];
    let mut timed_out = false;
    'sizes: for si in 0..config.sizes.len() {
        let mut rep = 0;
        while rep < config.replications {
            if budget.is_some_and(|b| start.elapsed() >= b) {
                timed_out = true;
                break 'sizes;
            }
            let hi = (rep + chunk).min(config.replications);
            let batch: Vec<ReplicateOutcome> =
                pool.install(|| (rep..hi).into_par_iter().map(|r| run_replicate(config, si, r)).collect());
            outcomes.extend(batch);
            completed[si] = hi;
            rep = hi;
        }
    }
    let mut summaries = summarize_study(config, &outcomes);
    // sizes never reached have no replicates at all
    summaries.retain(|s| s.replications > 0);
    Ok(StudyRun {
        summaries,
        completed,
        requested: config.replications,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        timed_out,
    })
}

/// Standardized estimates of the non-`k` coefficients, from replicates that
/// carry model-based standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct NormalityCheck {
    pub used: usize,
    pub missing_se: usize,
    pub names: Vec<String>,
    pub series: Vec<QqSeries>,
}

pub fn normality_check(summary: &McSummary) -> std::result::Result<NormalityCheck, String> {
    let idx = summary.nu_indices();
    let truth: Vec<f64> = summary.rows.iter().map(|r| r.truth).collect();
    let mut est = Vec::new();
    let mut ses = Vec::new();
    for (e, s) in summary.estimates.iter().zip(&summary.standard_errors) {
        if let Some(s) = s.as_ref().filter(|s| idx.iter().all(|&i| s[i] > 0.0 && s[i].is_finite())) {
            est.push(e.clone());
            ses.push(s.clone());
        }
    }
    let missing_se = summary.estimates.len() - est.len();
    let series = estimator_qq_data(&est, &truth, &ses, &idx).map_err(|e| {
        format!("{e} ({} of {} converged replicates lacked standard errors)", missing_se, summary.estimates.len())
    })?;
    Ok(NormalityCheck {
        used: est.len(),
        missing_se,
        names: idx.iter().map(|&i| summary.rows[i].name.clone()).collect(),
        series,
    })
}

fn stem(s: &McSummary) -> String {
    format!("{}_n{}", s.method.name().to_lowercase(), s.n)
}

/// Writes per-cell tables (`Est., S.E., |Bias|, C.I.`), replicate estimates,
/// QQ points where available, and a JSON summary.
pub fn write_study(dir: &Path, run: &StudyRun, names: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    for s in &run.summaries {
        write_table(
            &dir.join(format!("table_{}.csv", stem(s))),
            &["parameter", "true", "est", "se", "abs_bias", "ci_lower", "ci_upper", "fixed"],
            s.rows.iter().map(|r| {
                vec![
                    r.name.clone(),
                    fmt_f64(r.truth),
                    fmt_f64(r.mean),
                    fmt_opt(r.se),
                    fmt_f64(r.abs_bias),
                    fmt_opt(r.ci_lower),
                    fmt_opt(r.ci_upper),
                    r.fixed.to_string(),
                ]
            }),
        )?;
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        write_table(
            &dir.join(format!("estimates_{}.csv", stem(s))),
            &header,
            s.estimates.iter().map(|e| e.iter().copied().map(fmt_f64).collect()),
        )?;
        if let Ok(nc) = normality_check(s) {
            let mut rows = Vec::new();
            for (q, name) in nc.series.iter().zip(&nc.names) {
                for (th, v) in &q.points {
                    rows.push(vec![name.clone(), fmt_f64(*th), fmt_f64(*v)]);
                }
            }
            write_table(&dir.join(format!("qq_{}.csv", stem(s))), &["parameter", "normal_quantile", "standardized"], rows)?;
        }
    }
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(run).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(|e| AppError::io(&path, e))
}
