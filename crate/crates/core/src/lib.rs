//! Tensor-Train (TT) and functional Tensor-Train (FTT) approximation of
//! multivariate Gaussian densities.
//!
//! - [`linalg`]: dense matrix kernel (Jacobi SVD, symmetric eigensolver, QR, LU).
//! - [`tt`]: discrete TT tensors, TT-SVD, rounding, Hadamard products, norms.
//! - [`cross`]: rank-adaptive TT-cross for black-box entry oracles.
//! - [`ftt`]: Gauss–Legendre grids and the Lagrange interpolant of a TT of node values.
//! - [`gaussian`]: precision matrices, subdiagonal spectra, a-priori rank bounds.
//! - [`filtering`]: extended Kalman filter for a chain of coupled pendulums.

pub mod cross;
pub mod filtering;
pub mod ftt;
pub mod gaussian;
pub mod linalg;
pub mod ode;
pub mod tt;

pub use linalg::{LinalgError, Matrix};
pub use tt::TtTensor;
