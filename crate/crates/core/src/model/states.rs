use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::distribution::{moments_unchecked, ZinbDistribution};
use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::special::logistic;
#[allow(unused_imports)]
use num_traits::Float;

/// Linear predictors are clamped to `[-BOUND, BOUND]` before the links.
pub const PREDICTOR_BOUND: f64 = 30.0;
/// Below this conditional variance the standardized error is set to zero.
pub const PSI_FLOOR: f64 = 1e-12;

/// Link-scale quantities at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepValues {
    /// Clamped log-mean predictor `W_t`.
    pub w: f64,
    /// Clamped logit predictor `M_t` (`-inf` without zero inflation).
    pub m: f64,
    pub lambda: f64,
    pub pi: f64,
    /// `Lambda_t`
    pub mean: f64,
    /// `Psi_t`
    pub var: f64,
    pub w_clamped: bool,
    pub m_clamped: bool,
}

impl StepValues {
    pub(crate) fn from_predictors(w_raw: f64, m_raw: Option<f64>, k: f64) -> Self {
        let w = w_raw.clamp(-PREDICTOR_BOUND, PREDICTOR_BOUND);
        let w_clamped = w != w_raw;
        let (m, pi, m_clamped) = match m_raw {
            Some(raw) => {
                let m = raw.clamp(-PREDICTOR_BOUND, PREDICTOR_BOUND);
                (m, logistic(m), m != raw)
            }
            None => (f64::NEG_INFINITY, 0.0, false),
        };
        let lambda = w.exp();
        let (mean, var) = moments_unchecked(lambda, pi, k);
        StepValues { w, m, lambda, pi, mean, var, w_clamped, m_clamped }
    }

    pub fn distribution(&self, k: f64) -> ZinbDistribution {
        ZinbDistribution { lambda: self.lambda, pi: self.pi, k }
    }

    /// Standardized error for the realized count, and whether the variance floor applied.
    pub fn standardized_error(&self, y: f64) -> (f64, bool) {
        if self.var < PSI_FLOOR {
            (0.0, true)
        } else {
            ((y - self.mean) / self.var.sqrt(), false)
        }
    }
}

/// `sum_i ar_i (S_{t-i} + e_{t-i}) + sum_j ma_j e_{t-j}` at zero-based time `t`,
/// with every state and error before time zero equal to zero.
#[inline]
pub(crate) fn arma_state(ar: &[f64], ma: &[f64], state: &[f64], e: &[f64], t: usize) -> f64 {
    let mut s = 0.0;
    for (i, c) in ar.iter().enumerate().take(t) {
        let lag = t - i - 1;
        s += c * (state[lag] + e[lag]);
    }
    for (j, c) in ma.iter().enumerate().take(t) {
        s += c * e[t - j - 1];
    }
    s
}

/// Incremental evaluation of the state recursions, one observation at a time.
///
/// Used where the next count is not known in advance (simulation, forecasting).
#[derive(Debug, Clone)]
pub struct StateRecursion<'a> {
    params: &'a ParameterSet,
    z: Vec<f64>,
    v: Vec<f64>,
    e: Vec<f64>,
}

impl<'a> StateRecursion<'a> {
    pub fn new(params: &'a ParameterSet) -> Self {
        StateRecursion { params, z: Vec::new(), v: Vec::new(), e: Vec::new() }
    }

    /// Number of observations consumed so far.
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// ARMA states `(Z_t, V_t)` for the next time step.
    pub fn next_states(&self) -> (f64, f64) {
        let t = self.e.len();
        let p = self.params;
        (
            arma_state(&p.phi, &p.theta, &self.z, &self.e, t),
            arma_state(&p.alpha, &p.gamma, &self.v, &self.e, t),
        )
    }

    /// Link-scale values of the next step given its regressor rows.
    pub fn predict<X, U>(&self, x_row: X, u_row: U) -> StepValues
    where
        X: IntoIterator<Item = f64>,
        U: IntoIterator<Item = f64>,
    {
        let p = self.params;
        let (z, v) = self.next_states();
        let w_lin: f64 = x_row.into_iter().zip(&p.beta).map(|(a, b)| a * b).sum();
        let m_raw = if p.delta.is_empty() {
            None
        } else {
            let lin: f64 = u_row.into_iter().zip(&p.delta).map(|(a, b)| a * b).sum();
            Some(lin + v)
        };
        StepValues::from_predictors(w_lin + z, m_raw, p.k)
    }

    /// Records the realized count of the step just predicted; returns `(e_t, floored)`.
    pub fn observe(&mut self, step: &StepValues, y: f64) -> (f64, bool) {
        let (z, v) = self.next_states();
        let (e, floored) = step.standardized_error(y);
        self.z.push(z);
        self.v.push(v);
        self.e.push(e);
        (e, floored)
    }
}

/// Per-step trajectory of predictors, states, and conditional moments.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateTrajectory {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub e: Vec<f64>,
    pub lambda: Vec<f64>,
    pub pi: Vec<f64>,
    /// `Lambda_t`
    pub mean: Vec<f64>,
    /// `Psi_t`
    pub var: Vec<f64>,
    /// Zero-based steps where a linear predictor hit the clamp.
    pub clamped: Vec<usize>,
    /// Zero-based steps where `Psi_t` fell below the floor and `e_t` was zeroed.
    pub psi_floored: Vec<usize>,
}

impl StateTrajectory {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn distribution(&self, t: usize, k: f64) -> ZinbDistribution {
        ZinbDistribution { lambda: self.lambda[t], pi: self.pi[t], k }
    }
}

/// Checks parameter, design and series dimensions against each other.
pub fn check_dimensions(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    n: usize,
) -> Result<()> {
    params.validate()?;
    if x.ncols() != params.beta.len() {
        return Err(Error::DimensionMismatch {
            what: "x_t width",
            expected: params.beta.len(),
            actual: x.ncols(),
        });
    }
    if u.ncols() != params.delta.len() {
        return Err(Error::DimensionMismatch {
            what: "u_t width",
            expected: params.delta.len(),
            actual: u.ncols(),
        });
    }
    if x.nrows() != n {
        return Err(Error::DimensionMismatch { what: "x rows", expected: n, actual: x.nrows() });
    }
    if !params.delta.is_empty() && u.nrows() != n {
        return Err(Error::DimensionMismatch { what: "u rows", expected: n, actual: u.nrows() });
    }
    Ok(())
}

/// Runs the state recursions forward over the observed series.
pub fn compute_states(
    params: &ParameterSet,
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    y: &[u64],
) -> Result<StateTrajectory> {
    let n = y.len();
    check_dimensions(params, x, u, n)?;
    let mut rec = StateRecursion::new(params);
    let mut out = StateTrajectory {
        w: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        pi: Vec::with_capacity(n),
        mean: Vec::with_capacity(n),
        var: Vec::with_capacity(n),
        ..Default::default()
    };
    for (t, &yt) in y.iter().enumerate() {
        let (z, v) = rec.next_states();
        let u_row: Vec<f64> = if params.delta.is_empty() {
            Vec::new()
        } else {
            u.row(t).iter().copied().collect()
        };
        let step = rec.predict(x.row(t).iter().copied(), u_row);
        if step.w_clamped || step.m_clamped {
            out.clamped.push(t);
        }
        let (e, floored) = rec.observe(&step, yt as f64);
        if floored {
            out.psi_floored.push(t);
        }
        if !e.is_finite() || !step.mean.is_finite() {
            return Err(Error::NonFinite { t: t + 1, what: "standardized error" });
        }
        out.w.push(step.w);
        out.m.push(step.m);
        out.z.push(z);
        out.v.push(v);
        out.e.push(e);
        out.lambda.push(step.lambda);
        out.pi.push(step.pi);
        out.mean.push(step.mean);
        out.var.push(step.var);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Layout;

    fn design(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(n, 2, |t, j| if j == 0 { 1.0 } else { t as f64 / 10.0 });
        let u = DMatrix::from_element(n, 1, 1.0);
        (x, u)
    }

    #[test]
    fn no_arma_means_static_predictors() {
        let (x, u) = design(6);
        let mut p = ParameterSet::zeros(&Layout { n1: 2, p1: 0, q1: 0, n2: 1, p2: 0, q2: 0 });
        p.beta = alloc::vec![0.4, -0.3];
        p.delta = alloc::vec![-0.2];
        let s = compute_states(&p, &x, &u, &[0, 3, 1, 0, 7, 2]).unwrap();
        for t in 0..6 {
            assert_eq!(s.w[t], 0.4 - 0.3 * t as f64 / 10.0);
            assert_eq!(s.m[t], -0.2);
            assert_eq!(s.z[t], 0.0);
        }
    }

    #[test]
    fn ma1_hand_unrolled() {
        // independent unrolling for N = 3
        let (x, u) = design(3);
        let mut p = ParameterSet::zeros(&Layout { n1: 2, p1: 0, q1: 1, n2: 1, p2: 0, q2: 0 });
        p.beta = alloc::vec![0.5, 0.2];
        p.theta = alloc::vec![0.7];
        p.delta = alloc::vec![-1.0];
        p.k = 1.5;
        let y = [4u64, 0, 2];
        let s = compute_states(&p, &x, &u, &y).unwrap();

        let pi = 1.0 / (1.0 + libm::exp(1.0));
        let mut e_prev = 0.0;
        for t in 0..3 {
            let z = if t == 0 { 0.0 } else { 0.7 * e_prev };
            let lam = libm::exp(0.5 + 0.2 * t as f64 / 10.0 + z);
            let mean = lam * (1.0 - pi);
            let var = mean * (1.0 + lam * pi + lam / 1.5);
            let e = (y[t] as f64 - mean) / libm::sqrt(var);
            assert!((s.z[t] - z).abs() < 1e-14);
            assert!((s.e[t] - e).abs() < 1e-12);
            e_prev = e;
        }
        assert_eq!(s.z[0], 0.0);
    }

    #[test]
    fn clamping_and_floor_are_flagged() {
        let (x, u) = design(2);
        let mut p = ParameterSet::zeros(&Layout { n1: 2, p1: 0, q1: 0, n2: 1, p2: 0, q2: 0 });
        p.beta = alloc::vec![50.0, 0.0];
        p.delta = alloc::vec![40.0];
        let s = compute_states(&p, &x, &u, &[0, 0]).unwrap();
        assert_eq!(s.clamped, alloc::vec![0, 1]);
        assert_eq!(s.w[0], PREDICTOR_BOUND);
        assert_eq!(s.m[0], PREDICTOR_BOUND);
        // pi = logistic(30) leaves Psi well above the floor here
        assert!(s.var[0] > PSI_FLOOR);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (x, u) = design(3);
        let p = ParameterSet::zeros(&Layout { n1: 3, p1: 0, q1: 0, n2: 1, p2: 0, q2: 0 });
        let mut p = p;
        p.k = 1.0;
        assert!(matches!(
            compute_states(&p, &x, &u, &[1, 2, 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
