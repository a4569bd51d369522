//! The ZINB-ARMA probability model: parameters, regressors, state recursions
//! and the mixture distribution.

mod design;
mod distribution;
mod params;
mod roots;
mod spec;
mod states;

pub use design::{build_design, deterministic_regressors, Dataset, Design};
pub use distribution::{conditional_moments, ZinbDistribution};
pub use params::{Block, Layout, ParameterSet};
pub use roots::{check_polynomial_roots, ma_infinity_variance, PolynomialKind, RootCheck};
pub use spec::{CovariateRecipe, EstimationOptions, FixedLag, Method, ModelSpec, Orders};
pub use states::{
    compute_states, StateRecursion, StateTrajectory, StepValues, PREDICTOR_BOUND, PSI_FLOOR,
};

pub(crate) use states::arma_state;
pub use states::check_dimensions;
