//! Numerical toolkit for the closed boundary value problem
//!
//! ```text
//! ε K u_xx + u_yy + ε A u_x + ε B u_y = f   on {|x| < 1, |y| < 1}, 2-periodic in x
//! u(x, 1) = 0,   (α u_x + u_y)(x, -1) = 0
//! ```
//!
//! together with the multiplier (a-b-c) energy certificates that make it
//! well posed, discrete anisotropic Sobolev and negative norms, and a damped
//! frozen-coefficient iteration for the prescribed Gaussian curvature and
//! Darboux equations built on top of the linear solver.

pub mod coeffs;
pub mod error;
pub mod grid;
pub mod multiplier;
pub mod nonlinear;
pub mod norms;
pub mod operators;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{make_grid, Axis, Field, GridSpec, Side};
pub use norms::NormOrder;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
