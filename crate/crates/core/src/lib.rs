//! Numerical laboratory for the radial semilinear biharmonic heat equation
//! `u_t + bilap u = |u|^p + f(r)` on the exterior of the unit ball.

pub mod banded;
pub mod boundary;
pub mod closed_forms;
pub mod error;
pub mod experiments;
pub mod radial;
pub mod scalar;
pub mod solver;
pub mod testfn;
pub mod verify;

pub use boundary::{BoundaryCondition, NormalConvention};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RadialGridF64 = radial::RadialGrid<f64>;
pub type RadialGridF32 = radial::RadialGrid<f32>;
pub type ExponentsF64 = closed_forms::Exponents<f64>;
pub type SupersolutionF64 = closed_forms::Supersolution<f64>;
pub type ProblemSpecF64 = solver::ProblemSpec<f64>;
pub type ProblemSpecF32 = solver::ProblemSpec<f32>;
pub type SimOutcomeF64 = solver::SimOutcome<f64>;
pub type TestFunctionSpecF64 = testfn::TestFunctionSpec<f64>;
pub type FitResultF64 = radial::FitResult<f64>;
