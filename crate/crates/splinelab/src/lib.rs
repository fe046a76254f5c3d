//! Smoothing-spline estimation on the order-m Sobolev space over [0, 1].
//!
//! The crate provides four layers:
//!
//! - [`rkhs`]: closed-form reproducing kernels, representers, Gram matrices
//!   and the span algebra used for truths, fits and functionals.
//! - [`model`]: synthetic observation sampling (random designs, centered
//!   noise), bounded linear functionals, and the population objective with
//!   its directional derivatives.
//! - [`solver`]: the penalized least-squares fit through a bordered
//!   symmetric system, with a brute-force oracle solver.
//! - [`spectral`] and [`study`]: spectral diagnostics of the empirical
//!   operators and batch Monte Carlo experiments over the regularization
//!   scaling `lambda_n = scale * n^-p`.

pub mod error;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod rkhs;
pub mod seed;
pub mod solver;
pub mod spectral;
pub mod study;

pub use error::{Result, SplineError};
