use alloc::vec::Vec;

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolynomialKind {
    /// `1 - sum phi_i z^i`
    Ar,
    /// `1 + sum theta_i z^i`
    Ma,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootCheck {
    /// All roots lie strictly outside the unit circle.
    pub ok: bool,
    /// Smallest root modulus, `+inf` for a constant polynomial.
    pub min_root_modulus: f64,
}

/// Locates the zeros of the AR or MA characteristic polynomial.
pub fn check_polynomial_roots(coeffs: &[f64], kind: PolynomialKind) -> Result<RootCheck> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite polynomial coefficient".into()));
    }
    let sign = match kind {
        PolynomialKind::Ar => -1.0,
        PolynomialKind::Ma => 1.0,
    };
    // c[0] = 1, c[i] = sign * coeff_i, trailing zeros dropped
    let mut c: Vec<f64> = core::iter::once(1.0)
        .chain(coeffs.iter().map(|v| sign * v))
        .collect();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    let degree = c.len() - 1;
    if degree == 0 {
        return Ok(RootCheck { ok: true, min_root_modulus: f64::INFINITY });
    }
    let min_root_modulus = if degree == 1 {
        (c[0] / c[1]).abs()
    } else {
        // Companion matrix of the monic polynomial z^d + (c[d-1]/c[d]) z^(d-1) + ... + c[0]/c[d].
        let lead = c[degree];
        let mut m = DMatrix::<f64>::zeros(degree, degree);
        for i in 1..degree {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..degree {
            m[(i, degree - 1)] = -c[i] / lead;
        }
        m.complex_eigenvalues()
            .iter()
            .map(|z| z.modulus())
            .fold(f64::INFINITY, f64::min)
    };
    Ok(RootCheck { ok: min_root_modulus > 1.0, min_root_modulus })
}

/// `sum_j theta_j^2`, the stationary variance of a pure-MA state driven by
/// unit-variance standardized errors.
pub fn ma_infinity_variance(ar_coeffs: &[f64], ma_coeffs: &[f64]) -> Result<f64> {
    if ar_coeffs.iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidInput(
            "closed-form state variance is only available for pure MA predictors".into(),
        ));
    }
    Ok(ma_coeffs.iter().map(|t| t * t).sum())
}
