//! Numerical laboratory for the graphical spacelike mean curvature flow
//! `du/dt = g^ij(sigma, grad u) (sigma-Hessian of u)_ij` over conformally
//! flat, asymptotically flat metrics.

pub mod barriers;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod geometry;
pub mod initial_data;
pub mod io;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
