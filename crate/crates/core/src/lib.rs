//! Certification and finite-difference experiments for the regularized
//! generalized p-parabolic equation
//! `u_t = (|Du|² + ε)^{γ/2} (Δu + (p - 2) Δ∞u / (|Du|² + ε))` in the plane.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod diff_ops;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod io;
pub mod params;
pub mod presets;
pub mod solver;
pub mod structure;

pub use error::{Error, Result};
pub use estimator::{
    cylinder_integral, hessian_estimate_report, nonlinear_gradient_estimate_report, time_derivative_check,
    EstimateReport, Integrand, TimeDerivativeMode, TimeDerivativeReport,
};
pub use solver::{rhs, solve, stable_dt, Problem, ProblemConfig, Solution, SpaceTimeField};
pub use structure::{identity_check, IdentityKind, ResidualReport};
pub use grid::{Grid2D, ParabolicCylinder, ScalarField, SymMatrixField2, VectorField2};
pub use presets::Preset;
pub use params::{validate_params, ParamSet, Purpose, SweepPoint, WeightRecipe};
