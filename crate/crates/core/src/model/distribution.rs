
use crate::error::{Error, Result};
use crate::special::{ln_factorial, ln_gamma, log_add_exp};
#[allow(unused_imports)]
use num_traits::Float;

/// Conditional mean `Lambda = lambda (1 - pi)` and variance
/// `Psi = lambda (1 - pi) (1 + lambda pi + lambda / k)` of the mixture.
pub fn conditional_moments(lambda: f64, pi: f64, k: f64) -> Result<(f64, f64)> {
    if !lambda.is_finite() || !pi.is_finite() || !k.is_finite() {
        return Err(Error::InvalidInput("non-finite moment inputs".into()));
    }
    if !(lambda > 0.0) || !(0.0..=1.0).contains(&pi) || !(k > 0.0) {
        return Err(Error::InvalidInput(alloc::format!(
            "moments need lambda > 0, 0 <= pi <= 1, k > 0 (got {lambda}, {pi}, {k})"
        )));
    }
    Ok(moments_unchecked(lambda, pi, k))
}

#[inline]
pub(crate) fn moments_unchecked(lambda: f64, pi: f64, k: f64) -> (f64, f64) {
    let mean = lambda * (1.0 - pi);
    (mean, mean * (1.0 + lambda * pi + lambda / k))
}

/// Zero-inflated negative binomial law: zero with probability `pi`, otherwise
/// `NB(k, p~)` with `p~ = k / (k + lambda)` and mean `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZinbDistribution {
    pub lambda: f64,
    pub pi: f64,
    pub k: f64,
}

impl ZinbDistribution {
    pub fn new(lambda: f64, pi: f64, k: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("lambda must be positive, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&pi) {
            return Err(Error::InvalidInput(alloc::format!("pi must lie in [0, 1], got {pi}")));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("k must be positive, got {k}")));
        }
        Ok(ZinbDistribution { lambda, pi, k })
    }

    pub fn p_tilde(&self) -> f64 {
        self.k / (self.k + self.lambda)
    }

    /// `ln p~`
    pub fn ln_p_tilde(&self) -> f64 {
        -(self.lambda / self.k).ln_1p()
    }

    /// `ln (1 - p~)`
    pub fn ln_one_minus_p_tilde(&self) -> f64 {
        (self.lambda / self.k).ln() - (self.lambda / self.k).ln_1p()
    }

    pub fn moments(&self) -> (f64, f64) {
        moments_unchecked(self.lambda, self.pi, self.k)
    }

    /// Log pmf of the NB component alone.
    pub fn ln_nb_pmf(&self, y: u64) -> f64 {
        let yf = y as f64;
        let mut v = self.k * self.ln_p_tilde();
        if y > 0 {
            v += ln_gamma(yf + self.k) - ln_gamma(self.k) - ln_factorial(y)
                + yf * self.ln_one_minus_p_tilde();
        }
        v
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        let nb = self.ln_nb_pmf(y);
        let ln_keep = (-self.pi).ln_1p();
        if y == 0 {
            if self.pi == 0.0 {
                nb
            } else {
                log_add_exp(self.pi.ln(), ln_keep + nb)
            }
        } else {
            ln_keep + nb
        }
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.ln_pmf(y).exp()
    }

    /// `F(y) = sum_{j <= y} pmf(j)`, capped at 1.
    pub fn cdf(&self, y: u64) -> f64 {
        let mut acc = 0.0;
        let mean = self.lambda;
        for j in 0..=y {
            let p = self.pmf(j);
            acc += p;
            // past the bulk of the mass the remaining terms no longer move the sum
            if j as f64 > mean && p < acc * 1e-18 {
                break;
            }
        }
        acc.min(1.0)
    }

    /// Largest count worth enumerating: the NB tail beyond it is below `tail`.
    pub fn truncation_point(&self, tail: f64) -> u64 {
        let (_, var) = moments_unchecked(self.lambda, 0.0, self.k);
        let sd = var.sqrt();
        let mut y = (self.lambda + 20.0 * sd + 50.0).ceil() as u64;
        while self.ln_nb_pmf(y) > tail.ln() - 10.0 {
            y *= 2;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moment_examples() {
        assert_eq!(conditional_moments(2.0, 1.0, 5.0).unwrap(), (0.0, 0.0));
        assert_eq!(conditional_moments(2.0, 0.5, 2.0).unwrap(), (1.0, 3.0));
        assert_eq!(conditional_moments(3.0, 0.0, 3.0).unwrap(), (3.0, 6.0));
        assert!(conditional_moments(f64::NAN, 0.1, 1.0).is_err());
        assert!(conditional_moments(1.0, 1.1, 1.0).is_err());
    }

    #[test]
    fn pmf_examples() {
        let full_zero = ZinbDistribution::new(2.0, 1.0, 2.0).unwrap();
        assert_eq!(full_zero.pmf(0), 1.0);
        assert_eq!(full_zero.pmf(3), 0.0);
        let d = ZinbDistribution::new(2.0, 0.3, 2.0).unwrap();
        assert_relative_eq!(d.p_tilde(), 0.5);
        assert_relative_eq!(d.pmf(0), 0.475, max_relative = 1e-14);
        assert_relative_eq!(d.pmf(1), 0.175, max_relative = 1e-14);
        assert_relative_eq!(d.cdf(0), d.pmf(0));
        assert_relative_eq!(d.cdf(1), 0.65, max_relative = 1e-14);
        assert!((d.cdf(10_000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ZinbDistribution::new(0.0, 0.1, 1.0).is_err());
        assert!(ZinbDistribution::new(1.0, -0.1, 1.0).is_err());
        assert!(ZinbDistribution::new(1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn large_counts_stay_finite() {
        let d = ZinbDistribution::new(1e6, 0.2, 50.0).unwrap();
        let p = d.pmf(1_000_000);
        assert!(p > 0.0 && p.is_finite());
    }
}
