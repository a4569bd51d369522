//! Acceptance run: one PASS / FAIL / SKIP line per criterion.
//!
//! The Model 3 Monte Carlo criteria (4-6) run under a wall-clock budget,
//! `ZINBARMA_ACCEPTANCE_SECONDS` (default 360), shared across N = 30, 100, 500;
//! `ZINBARMA_THREADS` caps the worker pool. Set `ZINBARMA_ACCEPTANCE_STRICT=1`
//! to exit non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use zinbarma::config::parse_model_config;
use zinbarma::data::{load_csv_dataset, ColumnSelection};
use zinbarma::mc::{normality_check, run_study, StudyRun};
use zinbarma::core::diagnostics::{excess_zero_from_aggregates, information_criteria};
use zinbarma::core::estimation::{fit_em_design, fit_newton_raphson_design, standard_errors};
use zinbarma::core::likelihood::{partial_loglik, score};
use zinbarma::core::model::{
    build_design, conditional_moments, CovariateRecipe, Design, ModelSpec, Orders, ParameterSet, ZinbDistribution,
};
use zinbarma::core::simulation::{simulate_dataset, stream_rng, McStudyConfig, McSummary};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::*;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn model(name: &str) -> (ModelSpec, ParameterSet) {
    let c = parse_model_config(&configs().join(name)).expect("bundled config");
    (c.spec, c.truth.expect("truth block"))
}

// Richardson-extrapolated central difference of the partial log-likelihood.
fn richardson_gradient(p: &ParameterSet, d: &Design, y: &[u64]) -> Vec<f64> {
    let layout = p.layout();
    let base = p.to_vec();
    let at = |v: &[f64]| partial_loglik(&ParameterSet::from_slice(&layout, v).unwrap(), &d.x, &d.u, y).unwrap();
    let central = |i: usize, h: f64| {
        let mut a = base.clone();
        let mut b = base.clone();
        a[i] += h;
        b[i] -= h;
        (at(&a) - at(&b)) / (2.0 * h)
    };
    (0..base.len())
        .map(|i| {
            let h = 1e-3 * base[i].abs().max(1.0);
            (4.0 * central(i, h / 2.0) - central(i, h)) / 3.0
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = stream_rng(20_240_601, 0);
    let h = |period| vec![CovariateRecipe::Intercept, CovariateRecipe::Harmonic { period }];
    let (mut worst, mut checked, mut configs) = (0.0f64, 0usize, 0usize);
    let mut draws = 0;
    while configs < 100 {
        draws += 1;
        let orders = Orders {
            p1: rng.random_range(0..=2),
            q1: rng.random_range(0..=2),
            p2: rng.random_range(0..=2),
            q2: rng.random_range(0..=2),
        };
        let spec = ModelSpec::new(h(12.0), h(8.0), orders);
        let mut c = |n: usize, s: f64| (0..n).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
        let mut beta = c(3, 0.5);
        beta[0] += 1.2;
        let p = ParameterSet {
            beta,
            phi: c(orders.p1, 0.3),
            theta: c(orders.q1, 0.3),
            delta: c(3, 0.6),
            alpha: c(orders.p2, 0.3),
            gamma: c(orders.q2, 0.3),
            k: rng.random_range(0.5..5.0),
        };
        let Ok((data, design)) = simulate_dataset(&spec, &p, 50, &[], &mut rng) else { continue };
        let analytic = score(&p, &design.x, &design.u, &data.y).unwrap();
        let numeric = richardson_gradient(&p, &design, &data.y);
        for (a, n) in analytic.iter().zip(&numeric) {
            if n.abs() > 1e-8 {
                worst = worst.max((a - n).abs() / n.abs());
                checked += 1;
            }
        }
        configs += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-6 && secs < 60.0,
        format!("max relative error {worst:.2e} over {checked} coordinates, {configs} configs ({draws} draws), {secs:.1} s"),
    )
}

fn criterion_2() -> Verdict {
    let (mut sum_err, mut mom_err) = (0.0f64, 0.0f64);
    for lambda in [0.1, 3.0, 40.0] {
        for pi in [0.0, 0.4, 0.9] {
            for k in [0.3, 2.0, 50.0] {
                let d = ZinbDistribution::new(lambda, pi, k).unwrap();
                let top = d.truncation_point(1e-14).max(10);
                let (mut s, mut m1, mut m2) = (0.0, 0.0, 0.0);
                for y in 0..=top {
                    let p = d.pmf(y);
                    s += p;
                    m1 += p * y as f64;
                    m2 += p * (y as f64) * (y as f64);
                }
                let (mean, var) = conditional_moments(lambda, pi, k).unwrap();
                let bvar = m2 - m1 * m1;
                sum_err = sum_err.max((s - 1.0).abs());
                mom_err = mom_err.max(((m1 - mean) / mean).abs()).max(((bvar - var) / var).abs());
            }
        }
    }
    verdict(
        sum_err <= 1e-8 && mom_err <= 1e-6,
        format!("27 grid points: max |sum - 1| {sum_err:.2e}, max moment relative error {mom_err:.2e}"),
    )
}

fn criterion_3() -> Verdict {
    let mut worst = f64::INFINITY;
    let mut runs = 0;
    let mut failures = Vec::new();
    for (name, n, count, cap) in [("model1.json", 200, 7, None), ("model2.json", 200, 7, None), ("model3.json", 100, 6, Some(60))] {
        let (mut spec, truth) = model(name);
        if let Some(c) = cap {
            spec.options.em_max_iter = c;
        }
        for s in 0..count {
            let (data, design) = simulate_dataset(&spec, &truth, n, &[], &mut stream_rng(303, s)).unwrap();
            match fit_em_design(&spec, &design, &data.y, &truth) {
                Ok(f) => {
                    runs += 1;
                    for w in f.trace.windows(2) {
                        worst = worst.min(w[1] - w[0]);
                    }
                }
                Err(e) => failures.push(format!("{name} #{s}: {e}")),
            }
        }
    }
    verdict(
        failures.is_empty() && worst >= -1e-10,
        format!("{runs} EM runs over Models 1-3, smallest step change {worst:.2e}{}", failures.first().map_or(String::new(), |f| format!("; {f}"))),
    )
}

struct Model3Study {
    runs: Vec<(usize, StudyRun)>,
    requested: usize,
    budget: f64,
}

impl Model3Study {
    fn at(&self, n: usize) -> Option<&McSummary> {
        self.runs.iter().find(|(m, _)| *m == n).and_then(|(_, r)| r.summaries.first())
    }

    fn completed(&self, n: usize) -> usize {
        self.runs.iter().find(|(m, _)| *m == n).map_or(0, |(_, r)| r.completed[0])
    }
}

fn model3_study() -> Model3Study {
    let budget: f64 = std::env::var("ZINBARMA_ACCEPTANCE_SECONDS").ok().and_then(|s| s.parse().ok()).unwrap_or(360.0);
    let cfg = parse_model_config(&configs().join("model3.json")).unwrap();
    let base: McStudyConfig = cfg.study().unwrap();
    let mut runs = Vec::new();
    // larger samples cost far more per replicate
    for (n, share) in [(30, 0.15), (100, 0.25), (500, 0.60)] {
        let mut c = base.clone();
        c.sizes = vec![n];
        c.seed = base.seed.wrapping_add(n as u64);
        let run = run_study(&c, Some(Duration::from_secs_f64(budget * share))).unwrap();
        runs.push((n, run));
    }
    Model3Study { runs, requested: base.replications, budget }
}

fn describe(s: &McSummary) -> String {
    format!("{} used / {} run ({} not converged, {} failed)", s.used, s.replications, s.not_converged, s.failed)
}

fn criterion_4(st: &Model3Study) -> Verdict {
    let Some(s) = st.at(500) else {
        return Fail(format!("no N=500 replicate finished within {:.0} s", st.budget));
    };
    let nu = s.nu_indices();
    let worst = nu.iter().map(|&i| s.rows[i].abs_bias).fold(0.0f64, f64::max);
    let k_mean = s.rows.last().unwrap().mean;
    let enough = s.used >= st.requested && st.completed(500) >= st.requested;
    verdict(
        enough && worst <= 0.03 && k_mean > 2.0,
        format!(
            "N=500 EM: {}; need {} replicates; max |mean - truth| over nu {worst:.4}, mean k {k_mean:.4}",
            describe(s),
            st.requested
        ),
    )
}

fn criterion_5(st: &Model3Study) -> Verdict {
    let cells: Vec<Option<&McSummary>> = [30, 100, 500].iter().map(|&n| st.at(n)).collect();
    let text: Vec<String> = [30, 100, 500]
        .iter()
        .zip(&cells)
        .map(|(n, c)| match c {
            Some(s) if s.used > 0 => format!("N={n}: {:.4} ({})", s.mean_abs_bias_nu, describe(s)),
            Some(s) => format!("N={n}: no converged fit ({})", describe(s)),
            None => format!("N={n}: not reached"),
        })
        .collect();
    let biases: Option<Vec<f64>> = cells.iter().map(|c| c.filter(|s| s.used > 0).map(|s| s.mean_abs_bias_nu)).collect();
    let decreasing = biases.as_ref().is_some_and(|b| b[0] > b[1] && b[1] > b[2]);
    let invalid = cells.iter().any(|c| c.is_none_or(|s| s.invalid));
    verdict(
        decreasing && !invalid,
        format!("mean |bias| of nu: {}{}", text.join("; "), if invalid { "; a cell lost over 20% of replicates" } else { "" }),
    )
}

fn ks_line(st: &Model3Study, n: usize) -> (bool, String) {
    let Some(s) = st.at(n) else {
        return (false, format!("N={n}: not reached"));
    };
    match normality_check(s) {
        Ok(nc) => {
            let passed = nc.series.iter().filter(|q| q.ks.p_value > 0.01).count();
            let enough = nc.used >= st.requested;
            (
                enough && passed >= 7,
                format!("N={n}: {passed}/{} pass KS at 0.01 on {} standardized replicates (need {})", nc.series.len(), nc.used, st.requested),
            )
        }
        Err(e) => (false, format!("N={n}: {e}")),
    }
}

fn criterion_6(st: &Model3Study) -> Verdict {
    let (ok500, t500) = ks_line(st, 500);
    let (_, t100) = ks_line(st, 100);
    verdict(ok500, format!("{t500}; {t100}"))
}

fn criterion_7() -> Verdict {
    let mut worst = 0.0f64;
    let mut notes = Vec::new();
    for name in ["model1.json", "model2.json"] {
        let (spec, truth) = model(name);
        for s in 0..5 {
            let (data, design) = simulate_dataset(&spec, &truth, 500, &[], &mut stream_rng(s, 0)).unwrap();
            match (
                fit_em_design(&spec, &design, &data.y, &truth),
                fit_newton_raphson_design(&spec, &design, &data.y, &truth),
            ) {
                (Ok(em), Ok(nr)) => worst = worst.max((em.loglik - nr.loglik).abs()),
                (a, b) => notes.push(format!("{name} #{s}: {:?} {:?}", a.err(), b.err())),
            }
        }
    }
    verdict(
        notes.is_empty() && worst <= 1e-3,
        format!("10 datasets (Models 1 and 2, N=500): max |PL(EM) - PL(NR)| {worst:.2e}{}", notes.join("; ")),
    )
}

fn criterion_8() -> Verdict {
    let (aic, bic) = information_criteria(-500.0, 10, 149);
    let d = bic - aic;
    verdict((d - 30.039).abs() <= 1e-3, format!("BIC - AIC = {d:.4} for p=10, N=149"))
}

fn criterion_9() -> Verdict {
    let z = excess_zero_from_aggregates(66, 0.2833 * 149.0, 149);
    verdict((z.p0 - 0.1597).abs() <= 1e-3, format!("p0 = {:.4}", z.p0))
}

fn criterion_10() -> Verdict {
    let path = std::env::var_os("ZINBARMA_SYPHILIS_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/syphilis.csv"));
    if !path.exists() {
        return Skip(format!("no data at {} (set ZINBARMA_SYPHILIS_CSV)", path.display()));
    }
    let cfg = parse_model_config(&configs().join("syphilis_trend.json")).unwrap();
    let data = load_csv_dataset(&path, &ColumnSelection { y: "y".into(), covariates: Some(vec![]) }).unwrap();
    let design = build_design(&cfg.spec, &data).unwrap();
    let start = zinbarma::core::estimation::initialize_from_design(&cfg.spec, &design, &data.y).unwrap();
    let fit = match fit_em_design(&cfg.spec, &design, &data.y, &start) {
        Ok(f) => f,
        Err(e) => return Fail(format!("EM failed: {e}")),
    };
    // order: intercept, trend, MA1, MA2, pi intercept, pi trend, k
    let table = [
        (1.6134, 0.0949),
        (0.3775, 0.1564),
        (-0.1509, 0.0608),
        (-0.0724, 0.0562),
        (-1.3091, 0.3724),
        (0.2122, 0.6121),
        (3.0981, 0.6864),
    ];
    let est = fit.params.to_vec();
    let outside: Vec<String> = cfg
        .spec
        .parameter_names()
        .iter()
        .zip(est.iter().zip(table))
        .filter(|(_, (e, (m, s)))| (*e - m).abs() > 1.96 * s)
        .map(|(n, (e, _))| format!("{n}={e:.4}"))
        .collect();
    let se = standard_errors(&fit).map(|i| i.se[0]).unwrap_or(f64::NAN);
    verdict(
        outside.is_empty(),
        format!("N={}, {} zeros, intercept {:.4} (se {se:.4}); outside the 95% intervals: {:?}", data.len(), data.zero_count(), est[0], outside),
    )
}

fn run(i: usize, f: impl FnOnce() -> Verdict) -> bool {
    let t = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Fail(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = t.elapsed().as_secs_f64();
    let (tag, detail, ok) = match v {
        Pass(d) => ("PASS", d, true),
        Fail(d) => ("FAIL", d, false),
        Skip(d) => ("SKIP", d, true),
    };
    println!("criterion {i:>2}: {tag} [{secs:.1} s] {detail}");
    ok
}

fn main() {
    println!("acceptance run");
    let mut ok = true;
    ok &= run(1, criterion_1);
    ok &= run(2, criterion_2);
    ok &= run(3, criterion_3);
    let study = catch_unwind(model3_study).ok();
    match &study {
        Some(st) => {
            ok &= run(4, || criterion_4(st));
            ok &= run(5, || criterion_5(st));
            ok &= run(6, || criterion_6(st));
        }
        None => {
            for i in 4..=6 {
                ok &= run(i, || Fail("Model 3 study panicked".into()));
            }
        }
    }
    ok &= run(7, criterion_7);
    ok &= run(8, criterion_8);
    ok &= run(9, criterion_9);
    ok &= run(10, criterion_10);
    println!("acceptance: {}", if ok { "all criteria pass or skip" } else { "some criteria FAIL" });
    if !ok && std::env::var_os("ZINBARMA_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
