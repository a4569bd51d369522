use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dimensions of every parameter block, in flattening order
/// `beta, phi, theta, delta, alpha, gamma, k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layout {
    pub n1: usize,
    pub p1: usize,
    pub q1: usize,
    pub n2: usize,
    pub p2: usize,
    pub q2: usize,
}

/// A named parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Block {
    Beta,
    Phi,
    Theta,
    Delta,
    Alpha,
    Gamma,
    K,
}

impl Block {
    pub const ALL: [Block; 7] = [
        Block::Beta,
        Block::Phi,
        Block::Theta,
        Block::Delta,
        Block::Alpha,
        Block::Gamma,
        Block::K,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Beta => "beta",
            Block::Phi => "phi",
            Block::Theta => "theta",
            Block::Delta => "delta",
            Block::Alpha => "alpha",
            Block::Gamma => "gamma",
            Block::K => "k",
        }
    }
}

impl Layout {
    /// Total parameter count `n1 + p1 + q1 + n2 + p2 + q2 + 1`.
    pub fn len(&self) -> usize {
        self.n1 + self.p1 + self.q1 + self.n2 + self.p2 + self.q2 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of parameters entering the two linear predictors (everything but `k`).
    pub fn n_predictor(&self) -> usize {
        self.len() - 1
    }

    pub fn block_len(&self, block: Block) -> usize {
        match block {
            Block::Beta => self.n1,
            Block::Phi => self.p1,
            Block::Theta => self.q1,
            Block::Delta => self.n2,
            Block::Alpha => self.p2,
            Block::Gamma => self.q2,
            Block::K => 1,
        }
    }

    /// Offset of the first entry of `block` in the flattened vector.
    pub fn offset(&self, block: Block) -> usize {
        Block::ALL
            .iter()
            .take_while(|b| **b != block)
            .map(|b| self.block_len(*b))
            .sum()
    }

    pub fn k_index(&self) -> usize {
        self.len() - 1
    }

    /// Block and zero-based position within the block of flat index `i`.
    pub fn locate(&self, i: usize) -> Option<(Block, usize)> {
        let mut start = 0;
        for b in Block::ALL {
            let len = self.block_len(b);
            if i < start + len {
                return Some((b, i - start));
            }
            start += len;
        }
        None
    }

    pub fn zero_inflated(&self) -> bool {
        self.n2 > 0
    }
}

/// All parameters of a ZINB-ARMA model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParameterSet {
    /// Log-mean regression coefficients.
    pub beta: Vec<f64>,
    /// AR coefficients of the log-mean state.
    pub phi: Vec<f64>,
    /// MA coefficients of the log-mean state.
    pub theta: Vec<f64>,
    /// Logit regression coefficients. Empty for a plain NB-ARMA model.
    pub delta: Vec<f64>,
    /// AR coefficients of the logit state.
    pub alpha: Vec<f64>,
    /// MA coefficients of the logit state.
    pub gamma: Vec<f64>,
    /// Overdispersion, `k > 0`.
    pub k: f64,
}

impl ParameterSet {
    /// All-zero coefficients with `k = 1`.
    pub fn zeros(layout: &Layout) -> Self {
        ParameterSet {
            beta: alloc::vec![0.0; layout.n1],
            phi: alloc::vec![0.0; layout.p1],
            theta: alloc::vec![0.0; layout.q1],
            delta: alloc::vec![0.0; layout.n2],
            alpha: alloc::vec![0.0; layout.p2],
            gamma: alloc::vec![0.0; layout.q2],
            k: 1.0,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout {
            n1: self.beta.len(),
            p1: self.phi.len(),
            q1: self.theta.len(),
            n2: self.delta.len(),
            p2: self.alpha.len(),
            q2: self.gamma.len(),
        }
    }

    pub fn block(&self, block: Block) -> &[f64] {
        match block {
            Block::Beta => &self.beta,
            Block::Phi => &self.phi,
            Block::Theta => &self.theta,
            Block::Delta => &self.delta,
            Block::Alpha => &self.alpha,
            Block::Gamma => &self.gamma,
            Block::K => core::slice::from_ref(&self.k),
        }
    }

    /// Flattened vector `(beta, phi, theta, delta, alpha, gamma, k)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().len());
        for b in Block::ALL {
            out.extend_from_slice(self.block(b));
        }
        out
    }

    pub fn from_slice(layout: &Layout, values: &[f64]) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: layout.len(),
                actual: values.len(),
            });
        }
        let take = |b: Block| {
            let o = layout.offset(b);
            values[o..o + layout.block_len(b)].to_vec()
        };
        let p = ParameterSet {
            beta: take(Block::Beta),
            phi: take(Block::Phi),
            theta: take(Block::Theta),
            delta: take(Block::Delta),
            alpha: take(Block::Alpha),
            gamma: take(Block::Gamma),
            k: values[layout.k_index()],
        };
        p.validate()?;
        Ok(p)
    }

    /// Flattened vector with `k` replaced by `ln k`, the coordinates the optimizers use.
    pub fn to_internal(&self) -> Vec<f64> {
        let mut v = self.to_vec();
        let last = v.len() - 1;
        v[last] = libm::log(self.k);
        v
    }

    pub fn from_internal(layout: &Layout, values: &[f64]) -> Result<Self> {
        let mut v = values.to_vec();
        if let Some(last) = v.last_mut() {
            *last = libm::exp(*last);
        }
        Self::from_slice(layout, &v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "overdispersion k must be positive and finite, got {}",
                self.k
            )));
        }
        if self.to_vec().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter value".into()));
        }
        if self.delta.is_empty() && !(self.alpha.is_empty() && self.gamma.is_empty()) {
            return Err(Error::InvalidInput(
                "logit ARMA terms require at least one logit regressor".into(),
            ));
        }
        Ok(())
    }

    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        let mine = self.layout();
        if mine != *layout {
            return Err(Error::DimensionMismatch {
                what: "parameter layout",
                expected: layout.len(),
                actual: mine.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model3_layout() -> Layout {
        Layout { n1: 4, p1: 0, q1: 3, n2: 3, p2: 0, q2: 0 }
    }

    #[test]
    fn offsets_follow_block_order() {
        let l = Layout { n1: 2, p1: 1, q1: 2, n2: 2, p2: 1, q2: 1 };
        assert_eq!(l.len(), 10);
        assert_eq!(l.offset(Block::Theta), 3);
        assert_eq!(l.offset(Block::Gamma), 8);
        assert_eq!(l.k_index(), 9);
        assert_eq!(l.locate(5), Some((Block::Delta, 0)));
        assert_eq!(l.locate(10), None);
    }

    #[test]
    fn flatten_round_trip() {
        let l = model3_layout();
        let v: Vec<f64> = (0..l.len()).map(|i| i as f64 * 0.1 + 0.05).collect();
        let p = ParameterSet::from_slice(&l, &v).unwrap();
        assert_eq!(p.to_vec(), v);
        let back = ParameterSet::from_internal(&l, &p.to_internal()).unwrap();
        assert!((back.k - p.k).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_positive_k() {
        let l = model3_layout();
        let mut v = alloc::vec![0.0; l.len()];
        assert!(ParameterSet::from_slice(&l, &v).is_err());
        v[l.k_index()] = 2.0;
        assert!(ParameterSet::from_slice(&l, &v).is_ok());
        assert!(ParameterSet::from_slice(&l, &v[1..]).is_err());
    }
}
