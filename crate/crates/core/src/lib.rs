//! Rotation-based iterative Gaussianization (RBIG) for multivariate density
//! estimation, with anomaly and change detectors built on top of it.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: matrices, moments, eigendecomposition, Cholesky, normal CDF.
//! - [`marginal`]: per-dimension histogram maps to the standard normal.
//! - [`model`]: the layered Gaussianization model, its log-density and sampler.
//! - [`detectors`]: RX, kernel RX, KDE, RBIG and hybrid scorers.
//! - [`evaluation`]: ROC, precision-recall, partial AUC and bootstrap.
//! - [`raster`]: multiband raster, mask and CSV I/O.
//! - [`toy`]: synthetic datasets.
//!
//! Row-wise work runs on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise; both builds give bit-identical output.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod marginal;
pub mod model;
pub mod numerics;
pub mod par;
pub mod raster;
pub mod toy;

mod codec;

pub use detectors::{Detector, DetectorKind, FitOptions, ScoreVector};
pub use error::{Error, FormatError, Result};
pub use marginal::MarginalMap;
pub use model::{GaussianizationModel, LogDensityResult, RbigConfig, RotationKind};
pub use numerics::{DataMatrix, RngState, SquareMatrix};
