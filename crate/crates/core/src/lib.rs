//! Boundary null controls for the semilinear wave equation
//! `y_tt - y_xx + f(y) = 0` on `(0, 1) x (0, T)` with `y(0, t) = 0` and the
//! Neumann control `y_x(1, t) = v(t)`.
//!
//! Each linear problem is solved through its dual formulation, discretized
//! with C¹ Hermite space-time finite elements. The semilinear problem is
//! handled by a damped Newton least-squares iteration, with Newton and two
//! fixed-point iterations available for comparison. An independent
//! finite-difference solver replays computed controls.

pub mod c1fem;
pub mod config;
pub mod control;
pub mod error;
pub mod geometry;
pub mod iterate;
pub mod linalg;
pub mod nonlinear;
pub mod replay;
pub mod report;

pub use config::{load_config, parse_config, Config};
pub use control::{ControlProblem, ControlSolution, InitialData, NullControlSolver};
pub use error::{Error, Result};
pub use iterate::{run, run_ls, run_newton, run_pf, Algorithm, PfVariant, RunConfig, RunReport, Status};
pub use nonlinear::{ControlWeight, Nonlinearity};
