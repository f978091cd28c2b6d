//! Executable numerics for the finite-sample theory: the `γ_jk` metric, the
//! cross-derivative stencil and its step rule, and the bound calculators.

pub mod bounds;
pub mod gamma;
pub mod stencil;

pub use bounds::{
    alpha_bound, generalization_gap_bound, rademacher_bound, rsc_constant, recovery_bound, BoundInputs, BoundReport,
};
pub use gamma::{gamma_via_inverse, jacobian, jacobian_permutation_score, GammaPoint, GammaReport, PairGamma};
pub use stencil::{cross_derivative_stencil, floored_step, optimal_step};
