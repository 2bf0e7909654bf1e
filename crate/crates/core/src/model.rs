//! Rotation-based iterative Gaussianization.
//!
//! Each layer applies one [`MarginalMap`] per dimension followed by an
//! orthogonal rotation: `x[i+1] = R[i]·Ψ[i](x[i])`. After enough layers the
//! training data is approximately `N(0, I)`, and the density of any point
//! follows from the change of variables
//!
//! ```text
//! log p_X(x) = log N(G(x); 0, I) + log |det J_G(x)|
//! ```
//!
//! Rotations have unit determinant, so the log-Jacobian is the sum of the
//! marginal log-derivatives accumulated along the point's path through the
//! layers.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::marginal::{default_bins, marginal_non_gaussianity, MarginalMap, MIN_SAMPLES};
use crate::numerics::{
    mean_and_covariance, random_rotation, standard_normal_log_pdf, symmetric_eig, DataMatrix,
    RngState, SquareMatrix,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationKind {
    /// Eigenvectors of the current representation's covariance.
    Pca,
    /// Haar-random orthogonal matrix drawn from the configured seed.
    Random,
}

impl RotationKind {
    fn tag(self) -> u8 {
        match self {
            RotationKind::Pca => 0,
            RotationKind::Random => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, FormatError> {
        match tag {
            0 => Ok(RotationKind::Pca),
            1 => Ok(RotationKind::Random),
            t => Err(FormatError::InvalidField(format!("rotation tag {t}"))),
        }
    }
}

/// Consecutive layers that must fall below the tolerance before the fit
/// stops. A single quiet layer is not enough: a rotation can make the
/// marginals look Gaussian while the joint distribution is still far off,
/// and the next rotation undoes it. Once a run is confirmed, the model is
/// cut back to the run's first layer.
pub const STOP_PATIENCE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbigConfig {
    pub max_layers: usize,
    /// Histogram bins per marginal; `None` uses `clamp(⌈√ℓ⌉, 16, 1024)`.
    pub bins: Option<usize>,
    pub rotation: RotationKind,
    /// Per-dimension stopping threshold on summed marginal non-Gaussianity.
    pub tol_negentropy: f64,
    pub seed: u64,
}

impl Default for RbigConfig {
    fn default() -> Self {
        Self {
            max_layers: 100,
            bins: None,
            rotation: RotationKind::Pca,
            tol_negentropy: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbigLayer {
    marginals: Vec<MarginalMap>,
    rotation: SquareMatrix,
}

impl RbigLayer {
    pub fn new(marginals: Vec<MarginalMap>, rotation: SquareMatrix) -> Result<Self> {
        if marginals.len() != rotation.dim() {
            return Err(Error::DimensionMismatch {
                expected: rotation.dim(),
                got: marginals.len(),
            });
        }
        if rotation.orthogonality_error() > 1e-8 {
            return Err(Error::Domain("layer rotation is not orthogonal".into()));
        }
        Ok(Self {
            marginals,
            rotation,
        })
    }

    pub fn marginals(&self) -> &[MarginalMap] {
        &self.marginals
    }

    pub fn rotation(&self) -> &SquareMatrix {
        &self.rotation
    }

    /// Maps `z` in place and returns the summed marginal log-derivative.
    #[inline]
    fn forward_in_place(&self, z: &mut [f64], scratch: &mut [f64]) -> f64 {
        let mut log_det = 0.0;
        for ((s, m), &x) in scratch.iter_mut().zip(&self.marginals).zip(z.iter()) {
            let (y, ld) = m.forward(x);
            *s = y;
            log_det += ld;
        }
        self.rotation.mul_vec_into(scratch, z);
        log_det
    }

    #[inline]
    fn inverse_in_place(&self, z: &mut [f64], scratch: &mut [f64]) {
        self.rotation.mul_transpose_vec_into(z, scratch);
        for ((out, m), &y) in z.iter_mut().zip(&self.marginals).zip(scratch.iter()) {
            *out = m.inverse(y);
        }
    }
}

/// Provenance and convergence diagnostics recorded at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub bins: usize,
    pub rotation: RotationKind,
    pub seed: u64,
    pub tol_negentropy: f64,
    pub max_layers: usize,
    pub samples: usize,
    /// Summed marginal divergence from `N(0, 1)` of each layer's output.
    pub negentropy_trace: Vec<f64>,
}

/// Per-sample pieces of the change-of-variables formula.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityResult {
    pub log_p: Vec<f64>,
    pub log_p_gauss: Vec<f64>,
    pub log_det_j: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianizationModel {
    input_dim: usize,
    kept: Vec<usize>,
    /// `(column index, constant value)` for zero-variance input columns.
    dropped: Vec<(usize, f64)>,
    layers: Vec<RbigLayer>,
    meta: FitMetadata,
}

impl GaussianizationModel {
    pub fn fit(x: &DataMatrix, config: &RbigConfig) -> Result<Self> {
        let n = x.rows();
        if n < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                needed: MIN_SAMPLES,
                got: n,
            });
        }
        if config.max_layers == 0 {
            return Err(Error::Domain("max_layers must be at least 1".into()));
        }
        let ranges = x.column_ranges();
        let (kept, dropped): (Vec<usize>, Vec<usize>) =
            (0..x.cols()).partition(|&j| ranges[j].1 > ranges[j].0);
        if kept.is_empty() {
            return Err(Error::Unfittable("every column is constant".into()));
        }
        let dropped: Vec<(usize, f64)> = dropped.into_iter().map(|j| (j, x.get(0, j))).collect();
        if !dropped.is_empty() {
            warn!("dropping {} constant band(s)", dropped.len());
        }
        let d = kept.len();
        if n < 10 * d {
            warn!("only {n} samples for {d} dimensions; density estimate will be poor");
        }

        let bins = config.bins.unwrap_or_else(|| default_bins(n));
        let mut data = if dropped.is_empty() {
            x.as_slice().to_vec()
        } else {
            x.select_columns(&kept)?.into_values()
        };
        let mut rng = RngState::new(config.seed);
        let mut layers = Vec::new();
        let mut trace = Vec::new();

        for _ in 0..config.max_layers {
            let marginals = par::map_range(d, |j| {
                let col: Vec<f64> = data.iter().skip(j).step_by(d).copied().collect();
                MarginalMap::fit(&col, bins)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

            par::for_each_row_mut(&mut data, d, |_, row| {
                for (v, m) in row.iter_mut().zip(&marginals) {
                    *v = m.forward(*v).0;
                }
            });

            let rotation = match config.rotation {
                RotationKind::Pca => {
                    let current = DataMatrix::from_parts_unchecked(n, d, std::mem::take(&mut data));
                    let (_, cov) = mean_and_covariance(&current)?;
                    data = current.into_values();
                    symmetric_eig(&cov)?.1.transpose()
                }
                RotationKind::Random => random_rotation(d, &mut rng),
            };

            par::for_each_row_mut(&mut data, d, |_, row| {
                let z = row.to_vec();
                rotation.mul_vec_into(&z, row);
            });

            let negentropy: f64 = par::map_range(d, |j| {
                let col: Vec<f64> = data.iter().skip(j).step_by(d).copied().collect();
                marginal_non_gaussianity(&col, bins)
            })
            .into_iter()
            .sum();
            trace.push(negentropy);
            layers.push(RbigLayer {
                marginals,
                rotation,
            });
            let threshold = config.tol_negentropy * d as f64;
            if trace.len() >= STOP_PATIENCE
                && trace[trace.len() - STOP_PATIENCE..]
                    .iter()
                    .all(|&v| v < threshold)
            {
                // the quiet run confirmed convergence at its first layer; the
                // rest are near-identity maps that only add histogram noise
                let keep = trace.len() - (STOP_PATIENCE - 1);
                trace.truncate(keep);
                layers.truncate(keep);
                break;
            }
        }

        Ok(Self {
            input_dim: x.cols(),
            kept,
            dropped,
            layers,
            meta: FitMetadata {
                bins,
                rotation: config.rotation,
                seed: config.seed,
                tol_negentropy: config.tol_negentropy,
                max_layers: config.max_layers,
                samples: n,
                negentropy_trace: trace,
            },
        })
    }

    /// Assembles a model from parts; used by the loader and by tests that
    /// need hand-built layers.
    pub fn from_layers(
        input_dim: usize,
        dropped: Vec<(usize, f64)>,
        layers: Vec<RbigLayer>,
        meta: FitMetadata,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Domain("model needs at least one layer".into()));
        }
        let dropped_idx: Vec<usize> = dropped.iter().map(|d| d.0).collect();
        if dropped_idx.iter().any(|&j| j >= input_dim)
            || !dropped_idx.windows(2).all(|w| w[0] < w[1])
        {
            return Err(Error::Domain("invalid dropped band indices".into()));
        }
        let kept: Vec<usize> = (0..input_dim)
            .filter(|j| !dropped_idx.contains(j))
            .collect();
        let d = kept.len();
        if d == 0 || layers.iter().any(|l| l.marginals.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: layers[0].marginals.len(),
            });
        }
        Ok(Self {
            input_dim,
            kept,
            dropped,
            layers,
            meta,
        })
    }

    /// Dimensionality of the Gaussianized space (input bands minus dropped ones).
    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    /// Number of columns expected in input data.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[RbigLayer] {
        &self.layers
    }

    pub fn dropped_bands(&self) -> Vec<usize> {
        self.dropped.iter().map(|d| d.0).collect()
    }

    pub fn metadata(&self) -> &FitMetadata {
        &self.meta
    }

    pub fn negentropy_trace(&self) -> Result<&[f64]> {
        if self.meta.negentropy_trace.is_empty() {
            return Err(Error::NotRecorded);
        }
        Ok(&self.meta.negentropy_trace)
    }

    fn check_input(&self, x: &DataMatrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Runs one input row through every layer, writing the Gaussianized
    /// point into `out` and returning its log-Jacobian.
    #[inline]
    fn forward_row(&self, row: &[f64], out: &mut [f64], scratch: &mut [f64]) -> f64 {
        for (o, &j) in out.iter_mut().zip(&self.kept) {
            *o = row[j];
        }
        self.layers
            .iter()
            .map(|layer| layer.forward_in_place(out, scratch))
            .sum()
    }

    /// Gaussianizes `x` and returns the per-sample log-determinant of the
    /// Jacobian of the full transform.
    pub fn transform(&self, x: &DataMatrix) -> Result<(DataMatrix, Vec<f64>)> {
        self.check_input(x)?;
        let d = self.dim();
        let n = x.rows();
        // each output row carries its log-det in the trailing slot
        let width = d + 1;
        let mut buf = vec![0.0; n * width];
        par::for_each_row_mut(&mut buf, width, |i, out| {
            let mut scratch = vec![0.0; d];
            let (y, ld) = out.split_at_mut(d);
            ld[0] = self.forward_row(x.row(i), y, &mut scratch);
        });
        let mut values = Vec::with_capacity(n * d);
        let mut log_det = Vec::with_capacity(n);
        for row in buf.chunks(width) {
            values.extend_from_slice(&row[..d]);
            log_det.push(row[d]);
        }
        Ok((DataMatrix::from_parts_unchecked(n, d, values), log_det))
    }

    /// Maps Gaussian-domain points back to the input space. Dropped constant
    /// bands are re-inserted with their training value.
    pub fn inverse_transform(&self, y: &DataMatrix) -> Result<DataMatrix> {
        let d = self.dim();
        if y.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: y.cols(),
            });
        }
        let n = y.rows();
        let width = self.input_dim;
        let mut out = vec![0.0; n * width];
        par::for_each_row_mut(&mut out, width, |i, row| {
            let mut z = y.row(i).to_vec();
            let mut scratch = vec![0.0; d];
            for layer in self.layers.iter().rev() {
                layer.inverse_in_place(&mut z, &mut scratch);
            }
            for (&j, &v) in self.kept.iter().zip(&z) {
                row[j] = v;
            }
            for &(j, v) in &self.dropped {
                row[j] = v;
            }
        });
        Ok(DataMatrix::from_parts_unchecked(n, width, out))
    }

    pub fn log_density(&self, x: &DataMatrix) -> Result<LogDensityResult> {
        let (y, log_det_j) = self.transform(x)?;
        let log_p_gauss: Vec<f64> = y.iter_rows().map(standard_normal_log_pdf).collect();
        let log_p = log_p_gauss
            .iter()
            .zip(&log_det_j)
            .map(|(g, j)| g + j)
            .collect();
        Ok(LogDensityResult {
            log_p,
            log_p_gauss,
            log_det_j,
        })
    }

    /// Draws `n` standard-normal points and maps them back to input space.
    pub fn sample(&self, n: usize, rng: &mut RngState) -> Result<DataMatrix> {
        let d = self.dim();
        let y = DataMatrix::from_parts_unchecked(n, d, rng.standard_normal_vec(n * d));
        self.inverse_transform(&y)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        let meta = &self.meta;
        w.usize(self.input_dim);
        w.usize(self.dropped.len());
        for &(j, v) in &self.dropped {
            w.usize(j);
            w.f64(v);
        }
        w.usize(meta.bins);
        w.u8(meta.rotation.tag());
        w.u64(meta.seed);
        w.f64(meta.tol_negentropy);
        w.usize(meta.max_layers);
        w.usize(meta.samples);
        w.f64s(&meta.negentropy_trace);
        w.usize(self.layers.len());
        for layer in &self.layers {
            for m in &layer.marginals {
                w.f64s(m.edges());
                w.f64s(m.densities());
                w.f64s(m.cdf_at_edges());
            }
            w.raw_f64s(layer.rotation.as_slice());
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let input_dim = r.usize()?;
        let n_dropped = r.usize()?;
        if n_dropped >= input_dim.max(1) {
            return Err(FormatError::InvalidField("dropped band count".into()).into());
        }
        let mut dropped = Vec::with_capacity(n_dropped);
        for _ in 0..n_dropped {
            dropped.push((r.usize()?, r.f64()?));
        }
        let d = input_dim - n_dropped;
        let bins = r.usize()?;
        let rotation = RotationKind::from_tag(r.u8()?)?;
        let seed = r.u64()?;
        let tol_negentropy = r.f64()?;
        let max_layers = r.usize()?;
        let samples = r.usize()?;
        let negentropy_trace = r.f64s()?;
        let n_layers = r.usize()?;
        let mut layers = Vec::with_capacity(n_layers.min(4096));
        for _ in 0..n_layers {
            let mut marginals = Vec::with_capacity(d);
            for _ in 0..d {
                let edges = r.f64s()?;
                let densities = r.f64s()?;
                let cdf = r.f64s()?;
                marginals.push(
                    MarginalMap::from_parts(edges, densities, cdf)
                        .map_err(|e| FormatError::InvalidField(e.to_string()))?,
                );
            }
            let rot = SquareMatrix::new(d, r.raw_f64s(d * d)?)
                .map_err(|e| FormatError::InvalidField(e.to_string()))?;
            layers.push(
                RbigLayer::new(marginals, rot)
                    .map_err(|e| FormatError::InvalidField(e.to_string()))?,
            );
        }
        let meta = FitMetadata {
            bins,
            rotation,
            seed,
            tol_negentropy,
            max_layers,
            samples,
            negentropy_trace,
        };
        Self::from_layers(input_dim, dropped, layers, meta)
            .map_err(|e| FormatError::InvalidField(e.to_string()).into())
    }
}
