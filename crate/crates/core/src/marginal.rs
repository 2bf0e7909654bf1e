//! Per-dimension monotone maps from an empirical marginal to the standard normal.
//!
//! A [`MarginalMap`] is a histogram density on an extended support, its
//! piecewise-linear CDF `F`, and the composition `y = Φ⁻¹(F(x))`. The
//! log-derivative of the map is `ln f(x) − ln φ(y)`, which is this dimension's
//! contribution to the log-determinant of the Jacobian.

use crate::error::{Error, Result};
use crate::numerics::normal::{normal_cdf, normal_log_pdf, ppf, HALF_LN_2PI};

/// Fraction of the data range added on each side of the histogram support.
pub const SUPPORT_EXTENSION: f64 = 0.1;
/// Density floor numerator; the floor is `DENSITY_FLOOR / range`.
pub const DENSITY_FLOOR: f64 = 1e-10;
/// Minimum samples needed to fit a marginal.
pub const MIN_SAMPLES: usize = 10;

/// `clamp(⌈√ℓ⌉, 16, 1024)`.
pub fn default_bins(samples: usize) -> usize {
    ((samples as f64).sqrt().ceil() as usize).clamp(16, 1024)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalMap {
    edges: Vec<f64>,
    densities: Vec<f64>,
    cdf: Vec<f64>,
    log_densities: Vec<f64>,
}

impl MarginalMap {
    /// Fits a histogram map with `bins` equal-width bins over
    /// `[min − 0.1·range, max + 0.1·range]`.
    ///
    /// Empty bins get the floor density `1e-10/range`; occupied bins are scaled
    /// so the total mass is `1 − 2ε` with `ε = 1/(4ℓ)`, and the CDF starts at
    /// `ε`. Every CDF value therefore lies in `[ε, 1 − ε]`.
    pub fn fit(column: &[f64], bins: usize) -> Result<Self> {
        let n = column.len();
        if n < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                needed: MIN_SAMPLES,
                got: n,
            });
        }
        if bins < 2 {
            return Err(Error::Domain(format!("need at least 2 bins, got {bins}")));
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in column {
            if !v.is_finite() {
                return Err(Error::Domain("non-finite value in column".into()));
            }
            min = min.min(v);
            max = max.max(v);
        }
        let range = max - min;
        if !(range > 0.0) || !range.is_finite() {
            return Err(Error::DegenerateColumn);
        }

        let lo = min - SUPPORT_EXTENSION * range;
        let hi = max + SUPPORT_EXTENSION * range;
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
        edges[bins] = hi;

        let mut counts = vec![0usize; bins];
        for &v in column {
            counts[bin_of(&edges, v)] += 1;
        }

        let eps_cdf = 1.0 / (4.0 * n as f64);
        let floor = DENSITY_FLOOR / range;
        let empty_mass: f64 = counts
            .iter()
            .zip(edges.windows(2))
            .filter(|(&c, _)| c == 0)
            .map(|(_, e)| floor * (e[1] - e[0]))
            .sum();
        let scale = 1.0 - 2.0 * eps_cdf - empty_mass;
        let densities: Vec<f64> = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(&c, e)| {
                if c == 0 {
                    floor
                } else {
                    (scale * c as f64 / (n as f64 * (e[1] - e[0]))).max(floor)
                }
            })
            .collect();

        let mut cdf = Vec::with_capacity(bins + 1);
        cdf.push(eps_cdf);
        for (k, &f) in densities.iter().enumerate() {
            let next = cdf[k] + f * (edges[k + 1] - edges[k]);
            cdf.push(next);
        }
        let last = cdf[bins].min(1.0 - eps_cdf);
        cdf[bins] = last;

        Self::from_parts(edges, densities, cdf)
    }

    /// Rebuilds a map from stored arrays, validating the invariants.
    pub fn from_parts(edges: Vec<f64>, densities: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        let bins = densities.len();
        if bins < 1 || edges.len() != bins + 1 || cdf.len() != bins + 1 {
            return Err(Error::Domain(
                "inconsistent marginal map array lengths".into(),
            ));
        }
        if edges
            .iter()
            .chain(&densities)
            .chain(&cdf)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain("non-finite marginal map entry".into()));
        }
        if !edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain(
                "bin edges must be strictly increasing".into(),
            ));
        }
        if !cdf.windows(2).all(|w| w[0] < w[1]) || cdf[0] <= 0.0 || cdf[bins] >= 1.0 {
            return Err(Error::Domain(
                "cdf must be strictly increasing inside (0, 1)".into(),
            ));
        }
        if densities.iter().any(|&f| f <= 0.0) {
            return Err(Error::Domain("densities must be positive".into()));
        }
        let log_densities = densities.iter().map(|f| f.ln()).collect();
        Ok(Self {
            edges,
            densities,
            cdf,
            log_densities,
        })
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn cdf_at_edges(&self) -> &[f64] {
        &self.cdf
    }

    pub fn support(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.bins()])
    }

    /// Piecewise-linear CDF at `x` (clamped to the support).
    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        let xc = x.clamp(lo, hi);
        let k = bin_of(&self.edges, xc);
        self.cdf_in_bin(k, xc)
    }

    #[inline]
    fn cdf_in_bin(&self, k: usize, xc: f64) -> f64 {
        (self.cdf[k] + self.densities[k] * (xc - self.edges[k])).clamp(self.cdf[k], self.cdf[k + 1])
    }

    /// `(Φ⁻¹(F(x)), ln f(x) − ln φ(y))`, with `x` clamped to the support.
    #[inline]
    pub fn forward(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.support();
        let xc = x.clamp(lo, hi);
        let k = bin_of(&self.edges, xc);
        let y = ppf(self.cdf_in_bin(k, xc));
        (y, self.log_densities[k] - normal_log_pdf(y))
    }

    /// Inverse map: `F⁻¹(Φ(y))`, clamped to the support.
    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        let bins = self.bins();
        let p = normal_cdf(y);
        if p <= self.cdf[0] {
            return self.edges[0];
        }
        if p >= self.cdf[bins] {
            return self.edges[bins];
        }
        let k = self.cdf.partition_point(|&c| c <= p).clamp(1, bins) - 1;
        let x = self.edges[k] + (p - self.cdf[k]) / self.densities[k];
        x.clamp(self.edges[k], self.edges[k + 1])
    }

    /// The point mapped to `y = 0`.
    pub fn median_point(&self) -> f64 {
        self.inverse(0.0)
    }
}

/// Index of the bin containing `x` (binary search; out-of-range values go to
/// the first or last bin).
#[inline]
fn bin_of(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    edges.partition_point(|&e| e <= x).clamp(1, bins) - 1
}

/// Histogram estimate of marginal negentropy: Gaussian entropy at the sample
/// variance minus the Miller–Madow-corrected histogram entropy, floored at 0.
///
/// Used only as a convergence diagnostic; a constant column reports 0.
pub fn marginal_negentropy(column: &[f64], bins: usize) -> f64 {
    negentropy_and_moments(column, bins).map_or(0.0, |(j, _, _)| j)
}

/// Divergence of a column's distribution from `N(0, 1)`: the marginal
/// negentropy plus `KL(N(μ, σ²) ‖ N(0, 1)) = ½(σ² + μ² − 1 − ln σ²)`.
///
/// Negentropy alone is blind to location and scale, so a layer whose output
/// is Gaussian-shaped but not standardized would pass for converged.
pub fn marginal_non_gaussianity(column: &[f64], bins: usize) -> f64 {
    match negentropy_and_moments(column, bins) {
        Some((j, mean, var)) => j + 0.5 * (var + mean * mean - 1.0 - var.ln()),
        None => 0.0,
    }
}

/// `(negentropy, mean, variance)`; `None` for constant or tiny columns.
fn negentropy_and_moments(column: &[f64], bins: usize) -> Option<(f64, f64, f64)> {
    let n = column.len();
    if n < 2 || bins < 1 {
        return None;
    }
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut sum = 0.0;
    for &v in column {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    let range = max - min;
    if !(range > 0.0) {
        return None;
    }
    let mean = sum / n as f64;
    let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;

    let width = range / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in column {
        let k = (((v - min) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let nf = n as f64;
    let mut entropy = 0.0;
    let mut occupied = 0usize;
    for &c in &counts {
        if c > 0 {
            occupied += 1;
            let p = c as f64 / nf;
            entropy -= p * (p / width).ln();
        }
    }
    entropy += (occupied as f64 - 1.0) / (2.0 * nf);
    let gaussian = HALF_LN_2PI + 0.5 + 0.5 * var.ln();
    Some(((gaussian - entropy).max(0.0), mean, var))
}
