//! Numerical primitives: matrices, moments, symmetric eigendecomposition,
//! Cholesky solves, the standard normal distribution and random rotations.

mod eig;
mod linalg;
mod matrix;
pub mod normal;
mod rng;
pub mod stats;

pub use eig::symmetric_eig;
pub use linalg::{random_rotation, solve_spd, Cholesky};
pub use matrix::{dot, DataMatrix, SquareMatrix};
pub use normal::{inverse_normal_cdf, normal_cdf, standard_normal_log_pdf};
pub use rng::RngState;
pub use stats::mean_and_covariance;
