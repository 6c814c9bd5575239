//! Radial semilinear wave equations `u_tt - Δu = zeta |u|^{p-1} u` in
//! dimensions 3 to 6: finite-difference and characteristic solvers,
//! radiation-field extraction and inversion, and a-priori estimate checks.

// `!(x > y)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod history;
pub mod io;
pub mod par;
pub mod params;
pub mod plot;
pub mod radiation;
pub mod scenario;
pub mod solver_char;
pub mod solver_fd;

pub use error::{Error, Result};
pub use grid::{FieldState, RadialGrid, ReducedState};
pub use history::ReducedHistory;
pub use params::{DerivedConstants, ModelParams, ParamViolation};
