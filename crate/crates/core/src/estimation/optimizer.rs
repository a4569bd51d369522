use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::fd_step;

/// Stopping rules for one Newton-Raphson run.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonControl {
    pub max_iter: usize,
    pub step_tol: f64,
    pub value_tol: f64,
    /// Stop once every free gradient coordinate is below this.
    pub grad_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}

const RIDGE_START: f64 = 1e-6;
const RIDGE_CAP: f64 = 1e2;
const MAX_HALVINGS: usize = 40;

/// Objective and gradient at a point; `want_grad = false` may skip the gradient.
pub(crate) trait Smooth {
    fn eval(&mut self, point: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)>;
}

impl<F> Smooth for F
where
    F: FnMut(&[f64], bool) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, point: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
        self(point, want_grad)
    }
}

/// Negative Hessian over the free coordinates, by central differences of the gradient.
pub(crate) fn negative_hessian<S: Smooth>(
    f: &mut S,
    point: &[f64],
    free: &[usize],
) -> Result<DMatrix<f64>> {
    let m = free.len();
    let mut h = DMatrix::zeros(m, m);
    let mut work = point.to_vec();
    for (c, &i) in free.iter().enumerate() {
        let step = fd_step(point[i]);
        work[i] = point[i] + step;
        let (_, gp) = f.eval(&work, true)?;
        work[i] = point[i] - step;
        let (_, gm) = f.eval(&work, true)?;
        work[i] = point[i];
        for (r, &j) in free.iter().enumerate() {
            h[(r, c)] = -(gp[j] - gm[j]) / (2.0 * step);
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite entry in the information matrix".into()));
    }
    Ok(sym)
}

/// Condition number from the symmetric eigenvalues (`inf` when singular).
pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `(A + tau s I) d = g` with `A` the negative Hessian, escalating the
/// ridge until a Cholesky factor exists. `s` is the mean absolute diagonal of `A`.
pub(crate) fn ridge_solve(a: &DMatrix<f64>, g: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok((ch.solve(g), 0.0));
    }
    let n = a.nrows();
    let scale = (a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64).max(1.0);
    let mut tau = RIDGE_START;
    while tau <= RIDGE_CAP * (1.0 + 1e-12) {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += tau * scale;
        }
        if let Some(ch) = shifted.cholesky() {
            return Ok((ch.solve(g), tau));
        }
        tau *= 10.0;
    }
    Err(Error::SingularInformation { condition: condition_number(a) })
}

/// Damped Newton-Raphson ascent over the `free` coordinates of `start`.
///
/// Each step solves with the finite-difference negative Hessian (ridged if
/// needed), then halves the step until the objective increases.
pub(crate) fn newton_maximize<S: Smooth>(
    f: &mut S,
    start: Vec<f64>,
    free: &[usize],
    ctl: NewtonControl,
) -> Result<NewtonOutcome> {
    let mut x = start;
    let (mut value, mut grad) = f.eval(&x, true)?;
    if !value.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut trace = alloc::vec![value];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut ridged, mut max_tau) = (0usize, 0.0f64);

    while iterations < ctl.max_iter {
        let g = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
        if let Some(tol) = ctl.grad_tol {
            if g.amax() < tol {
                converged = true;
                break;
            }
        }
        iterations += 1;
        let a = negative_hessian(f, &x, free)?;
        let (dir, tau) = ridge_solve(&a, &g)?;
        if tau > 0.0 {
            ridged += 1;
            max_tau = max_tau.max(tau);
        }

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut cand = x.clone();
            for (c, &i) in free.iter().enumerate() {
                cand[i] += scale * dir[c];
            }
            if let Ok((v, _)) = f.eval(&cand, false) {
                if v.is_finite() && v > value {
                    accepted = Some((cand, v));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((cand, new_value)) = accepted else {
            // no ascent left along a positive-definite direction: rounding level
            converged = true;
            break;
        };
        let step = scale * dir.amax();
        let gain = new_value - value;
        x = cand;
        value = new_value;
        trace.push(value);
        if step < ctl.step_tol || gain < ctl.value_tol {
            converged = true;
            break;
        }
        grad = f.eval(&x, true)?.1;
    }
    if ridged > 0 {
        warnings.push(alloc::format!("ridge added to the Hessian at {ridged} of {iterations} iterations (largest {max_tau:e})"));
    }
    if !converged {
        warnings.push(alloc::format!("iteration cap {} reached", ctl.max_iter));
    }
    Ok(NewtonOutcome { point: x, value, iterations, converged, trace, warnings })
}
