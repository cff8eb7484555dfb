//! Structure-preserving finite differences for fourth-order diffusion equations
//! on the torus.
//!
//! The equations treated here have the form
//!
//! ```text
//!     du/dt = -dJ/dx,   J = u^beta u_xxx + a u^(beta-1) u_xx u_x + b u^(beta-2) u_x^3
//! ```
//!
//! on the one-dimensional torus (and a beta-family analogue in two dimensions).
//! The schemes discretize a reformulation of the flux in terms of an entropy
//! variable, chosen so that a discrete entropy functional is a Lyapunov
//! function of the semi-discrete dynamics whenever an algebraic admissibility
//! condition on the coefficients holds.
//!
//! Modules:
//! * [`coeffs`]: flux-splitting coefficients, admissibility, coercivity.
//! * [`grid`]: periodic grids and difference operators.
//! * [`scheme1d`]: the one-dimensional semi-discrete schemes.
//! * [`scheme2d`]: the two-dimensional scheme for the beta-family.
//! * [`integrator`]: stiff time integration (implicit Euler, BDF2, RK45).
//! * [`diagnostics`]: entropy/mass functionals, decay fits, grid errors.

pub mod coeffs;
pub mod diagnostics;
pub mod grid;
pub mod integrator;
pub mod scheme1d;
pub mod scheme2d;

pub use coeffs::{EntropyKind, EntropySpec, LambdaSet, ModelParams, PolySpec, PolyVariant};
pub use diagnostics::{DiagnosticsError, TrajectoryRecord, TrajectoryRow};
pub use grid::{ScalarField, TorusGrid, VectorField};
pub use integrator::{
    IntegrateError, JacobianKind, Method, OdeSystem, Scheme1DSystem, Scheme2DSystem, Solution,
    SolverConfig, StepResult,
};
pub use scheme1d::{AverageRule, SchemeConfig, SchemeError, SchemeVariant};
pub use scheme2d::Scheme2DConfig;
