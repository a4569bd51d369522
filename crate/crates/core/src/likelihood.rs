//! Partial log-likelihood, its analytic score and the observed information.
//!
//! Derivatives are propagated forward in time alongside the state
//! recursions: `dZ_t`, `dV_t` and `de_t` depend on the parameters through the
//! lagged states and through the standardized errors, whose own derivatives
//! follow from `Lambda_t` and `Psi_t`. One pass costs `O(N p (p1+q1+p2+q2))`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{check_dimensions, Block, Layout, ParameterSet, StepValues};
use crate::special::{digamma_diff, ln_factorial, ln_gamma, ln_gamma_ratio, log_add_exp};

/// Which per-observation objective a pass accumulates.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective<'a> {
    /// The observed partial log-likelihood.
    Observed,
    /// The EM surrogate `Q` with E-step weights `s_hat`.
    Complete { s_hat: &'a [f64] },
}

/// Result of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value: f64,
    /// Gradient in natural coordinates (`k`, not `ln k`); empty when not requested.
    pub grad: Vec<f64>,
    pub pointwise: Vec<f64>,
}

/// Partials of one objective term with respect to `W_t`, `M_t` and the
/// explicit dependence on `k`.
#[derive(Debug, Clone, Copy)]
struct TermPartials {
    value: f64,
    d_w: f64,
    d_m: f64,
    d_k: f64,
}

fn observed_term(y: u64, step: &StepValues, k: f64, lgk: f64) -> TermPartials {
    let lam = step.lambda;
    let pi = step.pi;
    let ratio = lam / k;
    let ln_p = -ratio.ln_1p();
    let one_minus_p = ratio / (1.0 + ratio);
    if y == 0 {
        let ln_q0 = k * ln_p;
        let q0 = ln_q0.exp();
        if pi == 0.0 {
            return TermPartials {
                value: ln_q0,
                d_w: -k * one_minus_p,
                d_m: 0.0,
                d_k: ln_p + one_minus_p,
            };
        }
        let ln_p0 = log_add_exp(pi.ln(), (-pi).ln_1p() + ln_q0);
        // (1 - pi) q0 / p0 computed in log space
        let keep = ((-pi).ln_1p() + ln_q0 - ln_p0).exp();
        TermPartials {
            value: ln_p0,
            d_w: -keep * k * one_minus_p,
            d_m: pi * (1.0 - pi) * (1.0 - q0) / ln_p0.exp(),
            d_k: keep * (ln_p + one_minus_p),
        }
    } else {
        let yf = y as f64;
        let nb = ln_gamma_ratio(k, y, lgk) - ln_factorial(y)
            + k * ln_p
            + yf * (ratio.ln() - ratio.ln_1p());
        TermPartials {
            value: (-pi).ln_1p() + nb,
            d_w: yf * (1.0 - one_minus_p) - k * one_minus_p,
            d_m: -pi,
            d_k: digamma_diff(k, y) + ln_p + one_minus_p - yf / (k + lam),
        }
    }
}

fn complete_term(y: u64, s: f64, step: &StepValues, k: f64, lgk: f64) -> TermPartials {
    let lam = step.lambda;
    let pi = step.pi;
    let ratio = lam / k;
    let ln_p = -ratio.ln_1p();
    let one_minus_p = ratio / (1.0 + ratio);
    let yf = y as f64;
    let mut nb = k * ln_p;
    if y > 0 {
        nb += ln_gamma_ratio(k, y, lgk) - ln_factorial(y) + yf * (ratio.ln() - ratio.ln_1p());
    }
    let w = 1.0 - s;
    let mut value = w * ((-pi).ln_1p() + nb);
    if s > 0.0 {
        value += s * pi.ln();
    }
    TermPartials {
        value,
        d_w: w * (yf * (1.0 - one_minus_p) - k * one_minus_p),
        d_m: if step.m.is_finite() { s - pi } else { 0.0 },
        d_k: w * (digamma_diff(k, y) + ln_p + one_minus_p - yf / (k + lam)),
    }
}

/// Forward-mode derivative state of one time step, over all `p` parameters
/// in natural coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    /// `dW_t / dTheta` (zero where `W_t` was clamped).
    pub d_w: Vec<f64>,
    /// `dM_t / dTheta`
    pub d_m: Vec<f64>,
    /// `de_t / dTheta`
    pub d_e: Vec<f64>,
    /// `d lambda_t / dTheta`
    pub d_lambda: Vec<f64>,
    /// `d pi_t / dTheta`
    pub d_pi: Vec<f64>,
    /// `d p~_t / dTheta`, including the explicit `k` dependence in the last slot.
    pub d_p_tilde: Vec<f64>,
    pub lambda: f64,
    pub pi: f64,
    pub p_tilde: f64,
}

struct Pass<'a> {
    params: &'a ParameterSet,
    layout: Layout,
    x: &'a DMatrix<f64>,
    u: &'a DMatrix<f64>,
    y: &'a [u64],
}

impl<'a> Pass<'a> {
    fn run(
        &self,
        objective: Objective<'_>,
        with_grad: bool,
        mut accumulators: Option<&mut Vec<GradientAccumulator>>,
    ) -> Result<Evaluation> {
        let p = self.params;
        let l = &self.layout;
        let n = self.y.len();
        let np = l.len();
        let k = p.k;
        let lgk = ln_gamma(k);
        let zi = !p.delta.is_empty();
        let k_idx = l.k_index();
        let (o_beta, o_phi, o_theta) = (0, l.offset(Block::Phi), l.offset(Block::Theta));
        let (o_delta, o_alpha, o_gamma) =
            (l.offset(Block::Delta), l.offset(Block::Alpha), l.offset(Block::Gamma));

        let mut z = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut e = vec![0.0; n];
        let track = with_grad || accumulators.is_some();
        let width = if track { np } else { 0 };
        let mut dz = vec![0.0; n * width];
        let mut dv = vec![0.0; n * width];
        let mut de = vec![0.0; n * width];
        let mut dw = vec![0.0; width];
        let mut dm = vec![0.0; width];
        let mut grad = vec![0.0; width];
        let mut pointwise = Vec::with_capacity(n);
        let mut value = 0.0;

        for t in 0..n {
            let zt = crate::model::arma_state(&p.phi, &p.theta, &z, &e, t);
            let vt = crate::model::arma_state(&p.alpha, &p.gamma, &v, &e, t);
            z[t] = zt;
            v[t] = vt;
            let xt = self.x.row(t);
            let w_raw = xt.iter().zip(&p.beta).map(|(a, b)| a * b).sum::<f64>() + zt;
            let m_raw = if zi {
                let ut = self.u.row(t);
                Some(ut.iter().zip(&p.delta).map(|(a, b)| a * b).sum::<f64>() + vt)
            } else {
                None
            };
            let step = StepValues::from_predictors(w_raw, m_raw, k);
            let (et, floored) = step.standardized_error(self.y[t] as f64);
            e[t] = et;

            let term = match objective {
                Objective::Observed => observed_term(self.y[t], &step, k, lgk),
                Objective::Complete { s_hat } => complete_term(self.y[t], s_hat[t], &step, k, lgk),
            };
            if !term.value.is_finite() {
                return Err(Error::NonFinite { t: t + 1, what: "log-likelihood term" });
            }
            value += term.value;
            pointwise.push(term.value);

            if !track {
                continue;
            }

            // dZ_t and dV_t from the lagged derivative history
            let row = t * np;
            for (block_off, ar, ma, state, dstate) in [
                (o_phi, &p.phi, &p.theta, &z, &mut dz),
                (o_alpha, &p.alpha, &p.gamma, &v, &mut dv),
            ] {
                let ma_off = if block_off == o_phi { o_theta } else { o_gamma };
                for (i, c) in ar.iter().enumerate().take(t) {
                    let lag = t - i - 1;
                    dstate[row + block_off + i] += state[lag] + e[lag];
                    let src = lag * np;
                    for j in 0..np {
                        dstate[row + j] += c * (dstate[src + j] + de[src + j]);
                    }
                }
                for (i, c) in ma.iter().enumerate().take(t) {
                    let lag = t - i - 1;
                    dstate[row + ma_off + i] += e[lag];
                    let src = lag * np;
                    for j in 0..np {
                        dstate[row + j] += c * de[src + j];
                    }
                }
            }

            if step.w_clamped {
                dw.iter_mut().for_each(|d| *d = 0.0);
            } else {
                dw.copy_from_slice(&dz[row..row + np]);
                for (j, xv) in xt.iter().enumerate() {
                    dw[o_beta + j] += xv;
                }
            }
            if !zi || step.m_clamped {
                dm.iter_mut().for_each(|d| *d = 0.0);
            } else {
                dm.copy_from_slice(&dv[row..row + np]);
                for (j, uv) in self.u.row(t).iter().enumerate() {
                    dm[o_delta + j] += uv;
                }
            }

            if with_grad {
                for j in 0..np {
                    grad[j] += term.d_w * dw[j] + term.d_m * dm[j];
                }
                grad[k_idx] += term.d_k;
            }

            // de_t = cw dW_t + cm dM_t + ck e_k
            if !floored {
                let lam = step.lambda;
                let pi = step.pi;
                let mean = step.mean;
                let var = step.var;
                let g = 1.0 + lam * pi + lam / k;
                let (lw, lm) = (lam * (1.0 - pi), -lam * pi * (1.0 - pi));
                let (gw, gm, gk) = (lam * pi + lam / k, lam * pi * (1.0 - pi), -lam / (k * k));
                let (pw, pm, pk) = (g * lw + mean * gw, g * lm + mean * gm, mean * gk);
                let sd = var.sqrt();
                let half = et / (2.0 * var);
                let cw = -lw / sd - half * pw;
                let cm = -lm / sd - half * pm;
                let ck = -half * pk;
                for j in 0..np {
                    de[row + j] = cw * dw[j] + cm * dm[j];
                }
                de[row + k_idx] += ck;
            }

            if let Some(accs) = accumulators.as_deref_mut() {
                let lam = step.lambda;
                let pi = step.pi;
                let pt = k / (k + lam);
                let d_lambda: Vec<f64> = dw.iter().map(|d| lam * d).collect();
                let d_pi: Vec<f64> = dm.iter().map(|d| pi * (1.0 - pi) * d).collect();
                let mut d_p_tilde: Vec<f64> = dw.iter().map(|d| -pt * (1.0 - pt) * d).collect();
                d_p_tilde[k_idx] += pt * (1.0 - pt) / k;
                accs.push(GradientAccumulator {
                    d_w: dw.clone(),
                    d_m: dm.clone(),
                    d_e: de[row..row + np].to_vec(),
                    d_lambda,
                    d_pi,
                    d_p_tilde,
                    lambda: lam,
                    pi,
                    p_tilde: pt,
                });
            }
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { t: n, what: "log-likelihood" });
        }
        Ok(Evaluation { value, grad, pointwise })
    }
}

pub(crate) fn evaluate(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
    objective: Objective<'_>,
    with_grad: bool,
) -> Result<Evaluation> {
    check_dimensions(params, x, u, y.len())?;
    if let Objective::Complete { s_hat } = objective {
        if s_hat.len() != y.len() {
            return Err(Error::DimensionMismatch {
                what: "E-step weights",
                expected: y.len(),
                actual: s_hat.len(),
            });
        }
    }
    Pass { params, layout: params.layout(), x, u, y }.run(objective, with_grad, None)
}

/// Partial log-likelihood `sum_t log f(y_t | H_t)`.
pub fn partial_loglik(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<f64> {
    Ok(evaluate(params, x, u, y, Objective::Observed, false)?.value)
}

/// Per-observation log-likelihood contributions.
pub fn pointwise_loglik(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<Vec<f64>> {
    Ok(evaluate(params, x, u, y, Objective::Observed, false)?.pointwise)
}

/// Analytic score in the flattened order `(beta, phi, theta, delta, alpha, gamma, k)`.
pub fn score(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<Vec<f64>> {
    Ok(evaluate(params, x, u, y, Objective::Observed, true)?.grad)
}

/// Derivative accumulators for every time step.
pub fn gradient_accumulators(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<Vec<GradientAccumulator>> {
    check_dimensions(params, x, u, y.len())?;
    let mut accs = Vec::with_capacity(y.len());
    Pass { params, layout: params.layout(), x, u, y }.run(
        Objective::Observed,
        false,
        Some(&mut accs),
    )?;
    Ok(accs)
}

/// Score assembled term by term from the mixture partials `d pi_t` and
/// `d p~_t`, in the form of the classical zero-inflated score equations.
///
/// Mathematically identical to [`score`]; kept as an independent route.
pub fn score_from_accumulators(accs: &[GradientAccumulator], y: &[u64], k: f64) -> Vec<f64> {
    let np = accs.first().map_or(0, |a| a.d_pi.len());
    let k_idx = np.saturating_sub(1);
    let mut s = vec![0.0; np];
    for (a, &yt) in accs.iter().zip(y) {
        let pt = a.p_tilde;
        let pi = a.pi;
        let qk = pt.powf(k);
        if yt == 0 {
            let p0 = pi + (1.0 - pi) * qk;
            for j in 0..np {
                let mut term = a.d_pi[j] + (1.0 - pi) * k * pt.powf(k - 1.0) * a.d_p_tilde[j]
                    - qk * a.d_pi[j];
                if j == k_idx {
                    term = a.d_pi[j]
                        + (1.0 - pi) * qk * (k / pt * a.d_p_tilde[j] + pt.ln())
                        - qk * a.d_pi[j];
                }
                s[j] += term / p0;
            }
        } else {
            let yf = yt as f64;
            for j in 0..np {
                s[j] += -a.d_pi[j] / (1.0 - pi) + k / pt * a.d_p_tilde[j]
                    - yf / (1.0 - pt) * a.d_p_tilde[j];
            }
            s[k_idx] += digamma_diff(k, yt) + pt.ln();
        }
    }
    s
}

/// Finite-difference step for coordinate value `v`.
#[inline]
pub(crate) fn fd_step(v: f64) -> f64 {
    (1e-7 * v.abs()).max(1e-7)
}

/// Central differences of an analytic gradient, symmetrized.
pub(crate) fn fd_jacobian_of<F>(point: &[f64], mut grad: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let p = point.len();
    let mut h = DMatrix::zeros(p, p);
    let mut work = point.to_vec();
    for i in 0..p {
        let step = fd_step(point[i]);
        work[i] = point[i] + step;
        let gp = grad(&work)?;
        work[i] = point[i] - step;
        let gm = grad(&work)?;
        work[i] = point[i];
        for j in 0..p {
            h[(j, i)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in the information matrix".into()));
    }
    Ok(sym)
}

/// Observed information `-d^2 PL / dTheta dTheta'` in natural coordinates,
/// by central differences of the analytic score.
pub fn observed_information(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<DMatrix<f64>> {
    let layout = params.layout();
    let hess = fd_jacobian_of(&params.to_vec(), |v| {
        let p = ParameterSet::from_slice(&layout, v)?;
        score(&p, x, u, y)
    })?;
    Ok(-hess)
}

/// Score in optimizer coordinates (`ln k` in the last slot).
pub(crate) fn internal_gradient(grad: &mut [f64], k: f64) {
    if let Some(last) = grad.last_mut() {
        *last *= k;
    }
}

/// Observed information in optimizer coordinates (`ln k` in the last slot).
pub fn observed_information_internal(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<DMatrix<f64>> {
    let layout = params.layout();
    let hess = fd_jacobian_of(&params.to_internal(), |v| {
        let p = ParameterSet::from_internal(&layout, v)?;
        let mut g = score(&p, x, u, y)?;
        internal_gradient(&mut g, p.k);
        Ok(g)
    })?;
    Ok(-hess)
}

/// Convenience: score as an `nalgebra` vector.
pub fn score_vector(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(score(params, x, u, y)?))
}
