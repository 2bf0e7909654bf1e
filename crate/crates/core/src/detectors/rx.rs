//! Reed–Xiaoli detector: Mahalanobis distance to the background mean.

use log::warn;

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::numerics::{mean_and_covariance, Cholesky, DataMatrix, SquareMatrix};
use crate::par;

/// Default ridge, relative to the mean eigenvalue `trace(Σ)/d`.
pub const DEFAULT_RX_LAMBDA: f64 = 1e-6;
/// Ridge used when there are no more samples than dimensions.
const UNDERDETERMINED_LAMBDA: f64 = 1e-3;
/// Jitter escalations tried when the regularized covariance still fails to
/// factor.
const MAX_JITTER_STEPS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct RxModel {
    mean: Vec<f64>,
    precision: SquareMatrix,
    reg_lambda: f64,
}

impl RxModel {
    pub fn fit(x: &DataMatrix) -> Result<Self> {
        Self::fit_with_lambda(x, DEFAULT_RX_LAMBDA)
    }

    /// Fits with `Σ + λ·trace(Σ)/d·I`. `λ = 0` gives the plain inverse when
    /// `Σ` is positive definite.
    pub fn fit_with_lambda(x: &DataMatrix, reg_lambda: f64) -> Result<Self> {
        if !(reg_lambda >= 0.0) || !reg_lambda.is_finite() {
            return Err(Error::Domain(format!(
                "reg_lambda {reg_lambda} must be ≥ 0"
            )));
        }
        let (mean, cov) = mean_and_covariance(x)?;
        let d = x.cols();
        let scale = cov.trace() / d as f64;
        if !(scale > 0.0) {
            return Err(Error::Unfittable("every column is constant".into()));
        }
        let mut lambda = reg_lambda;
        if x.rows() <= d {
            warn!(
                "RX fit on {} samples in {d} dimensions; raising ridge to {UNDERDETERMINED_LAMBDA}",
                x.rows()
            );
            lambda = lambda.max(UNDERDETERMINED_LAMBDA);
        }
        let mut steps = 0;
        let chol = loop {
            let mut reg = cov.clone();
            reg.add_diagonal(lambda * scale);
            match Cholesky::new(&reg) {
                Ok(c) => break c,
                Err(Error::NotPositiveDefinite { .. }) if steps < MAX_JITTER_STEPS => {
                    lambda = if lambda == 0.0 { 1e-12 } else { lambda * 10.0 };
                    steps += 1;
                }
                Err(e) => return Err(e),
            }
        };
        if lambda != reg_lambda {
            warn!("RX covariance needed ridge λ = {lambda:e}");
        }
        Ok(Self {
            mean,
            precision: chol.inverse(),
            reg_lambda: lambda,
        })
    }

    pub fn from_parts(mean: Vec<f64>, precision: SquareMatrix, reg_lambda: f64) -> Result<Self> {
        if mean.len() != precision.dim() {
            return Err(Error::DimensionMismatch {
                expected: precision.dim(),
                got: mean.len(),
            });
        }
        if precision.asymmetry() > 1e-9 * precision.max_abs().max(1.0) {
            return Err(Error::Domain("RX precision is not symmetric".into()));
        }
        if !(reg_lambda >= 0.0) {
            return Err(Error::Domain("negative reg_lambda".into()));
        }
        Ok(Self {
            mean,
            precision,
            reg_lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn precision(&self) -> &SquareMatrix {
        &self.precision
    }

    /// Ridge actually applied, after any escalation.
    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    /// `(x − μ)ᵀ·Σ⁻¹·(x − μ)` for one row.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        let d = self.dim();
        let p = self.precision.as_slice();
        let mut q = 0.0;
        for i in 0..d {
            let di = row[i] - self.mean[i];
            let mut s = 0.0;
            for j in 0..d {
                s += p[i * d + j] * (row[j] - self.mean[j]);
            }
            q += di * s;
        }
        q.max(0.0)
    }

    pub fn score(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.cols(),
            });
        }
        Ok(par::map_rows(x.as_slice(), x.cols(), |row| {
            self.score_row(row)
        }))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.f64s(&self.mean);
        w.raw_f64s(self.precision.as_slice());
        w.f64(self.reg_lambda);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let mean = r.f64s()?;
        let d = mean.len();
        let n = d
            .checked_mul(d)
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{d}×{d} precision")))?;
        let precision = SquareMatrix::new(d, r.raw_f64s(n)?)
            .map_err(|e| FormatError::InvalidField(e.to_string()))?;
        let reg_lambda = r.f64()?;
        Self::from_parts(mean, precision, reg_lambda)
            .map_err(|e| FormatError::InvalidField(e.to_string()).into())
    }
}
