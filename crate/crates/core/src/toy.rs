//! Synthetic datasets with known anomalies and changes.
//!
//! All generators are deterministic given the [`RngState`]. Anomalous rows
//! are shuffled in among the background rows.

use crate::error::{Error, Result};
use crate::evaluation::LabelMask;
use crate::numerics::{DataMatrix, RngState};
use crate::raster::RasterImage;

pub const RING_RADIUS: f64 = 1.0;
pub const RING_NOISE: f64 = 0.05;
/// Spread of the compact anomaly clusters in [`ring`] and [`gaussian`].
pub const ANOMALY_SPREAD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub x: DataMatrix,
    pub labels: LabelMask,
}

fn anomaly_count(n: usize, rate: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("anomaly rate {rate} outside [0, 1)")));
    }
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    Ok((n as f64 * rate).round() as usize)
}

/// Builds `n` 2-D rows: `n − m` from `background`, `m` from a
/// `N(center, spread²I)` cluster, then shuffles.
fn assemble(
    n: usize,
    rate: f64,
    center: [f64; 2],
    spread: f64,
    rng: &mut RngState,
    mut background: impl FnMut(&mut RngState) -> [f64; 2],
) -> Result<ToyData> {
    let m = anomaly_count(n, rate)?;
    let mut rows: Vec<([f64; 2], bool)> = Vec::with_capacity(n);
    for _ in 0..n - m {
        rows.push((background(rng), false));
    }
    for _ in 0..m {
        let p = [
            center[0] + spread * rng.standard_normal(),
            center[1] + spread * rng.standard_normal(),
        ];
        rows.push((p, true));
    }
    rng.shuffle(&mut rows);
    let labels = LabelMask::new(rows.iter().map(|r| r.1).collect());
    let x = DataMatrix::new(n, 2, rows.iter().flat_map(|r| r.0).collect())?;
    Ok(ToyData { x, labels })
}

/// Unit circle with radial noise 0.05; anomalies sit at the center.
pub fn ring(n: usize, rate: f64, rng: &mut RngState) -> Result<ToyData> {
    assemble(n, rate, [0.0, 0.0], ANOMALY_SPREAD, rng, |rng| {
        let theta = std::f64::consts::TAU * rng.uniform();
        let r = RING_RADIUS + RING_NOISE * rng.standard_normal();
        [r * theta.cos(), r * theta.sin()]
    })
}

/// Covariance of the [`gaussian`] background.
pub const GAUSSIAN_COV: [[f64; 2]; 2] = [[1.0, 0.6], [0.6, 0.5]];

/// Correlated Gaussian background with anomalies off the main axis at
/// `(2, −1)`, where RX is the right model.
pub fn gaussian(n: usize, rate: f64, rng: &mut RngState) -> Result<ToyData> {
    let [[a, b], [_, c]] = GAUSSIAN_COV;
    // Cholesky factor of the covariance
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (c - l21 * l21).sqrt();
    assemble(n, rate, [2.0, -1.0], ANOMALY_SPREAD, rng, |rng| {
        let (u, v) = (rng.standard_normal(), rng.standard_normal());
        [l11 * u, l21 * u + l22 * v]
    })
}

pub const MIXTURE_CENTERS: [[f64; 2]; 3] = [[-2.0, 0.0], [2.0, 0.0], [0.0, 2.5]];
pub const MIXTURE_SPREAD: f64 = 0.4;
/// Wide enough that the anomalies are sparser than any blob.
pub const MIXTURE_ANOMALY_SPREAD: f64 = 0.5;

/// Three isotropic blobs; anomalies scatter around their centroid, in the
/// empty space between them.
pub fn mixture(n: usize, rate: f64, rng: &mut RngState) -> Result<ToyData> {
    assemble(n, rate, [0.0, 0.8], MIXTURE_ANOMALY_SPREAD, rng, |rng| {
        let c = MIXTURE_CENTERS[rng.index(3)];
        [
            c[0] + MIXTURE_SPREAD * rng.standard_normal(),
            c[1] + MIXTURE_SPREAD * rng.standard_normal(),
        ]
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangePair {
    pub before: RasterImage,
    pub after: RasterImage,
    /// Row-major over pixels; `true` inside the changed patch.
    pub mask: LabelMask,
}

pub const CD_CLASSES: usize = 4;
const CD_SIGNATURE_SCALE: f64 = 3.0;
const CD_NOISE: f64 = 0.5;
const CD_GAIN_SPREAD: f64 = 0.05;
/// Per-band offset of changed pixels, in units of the noise spread.
pub const CD_SHIFT: f64 = 2.0 * CD_NOISE;

/// Bitemporal scene of `CD_CLASSES` land-cover classes.
///
/// Classes form Voronoi regions around random seeds. Each class has a random
/// spectral signature; a pixel is `gain·signature + noise`, with the gain
/// drawn per pixel so class clusters are elongated rather than Gaussian. The
/// after-image redraws gain and noise everywhere, and inside one square-ish
/// patch of exactly `round(fraction·w·h)` pixels adds a fixed offset of
/// `±CD_SHIFT` per band (random signs) to whatever class lies underneath.
pub fn change_pair(
    width: usize,
    height: usize,
    bands: usize,
    fraction: f64,
    rng: &mut RngState,
) -> Result<ChangePair> {
    if width == 0 || height == 0 || bands == 0 {
        return Err(Error::Domain("scene dimensions must be positive".into()));
    }
    if !(fraction > 0.0 && fraction < 0.5) {
        return Err(Error::Domain(format!(
            "changed fraction {fraction} outside (0, 0.5)"
        )));
    }
    let pixels = width * height;
    let changed = ((fraction * pixels as f64).round() as usize).max(1);

    let seeds: Vec<(f64, f64)> = (0..CD_CLASSES)
        .map(|_| (rng.uniform() * height as f64, rng.uniform() * width as f64))
        .collect();
    let class_of = |r: usize, c: usize| -> usize {
        let d2 = |&(sr, sc): &(f64, f64)| (r as f64 - sr).powi(2) + (c as f64 - sc).powi(2);
        (0..CD_CLASSES)
            .min_by(|&a, &b| d2(&seeds[a]).total_cmp(&d2(&seeds[b])))
            .unwrap()
    };
    let signatures: Vec<Vec<f64>> = (0..CD_CLASSES)
        .map(|_| {
            (0..bands)
                .map(|_| CD_SIGNATURE_SCALE * rng.standard_normal())
                .collect()
        })
        .collect();
    let shift: Vec<f64> = (0..bands)
        .map(|_| {
            if rng.uniform() < 0.5 {
                -CD_SHIFT
            } else {
                CD_SHIFT
            }
        })
        .collect();

    // square block holding the patch, filled in scan order
    let side_w = ((changed as f64).sqrt().ceil() as usize).min(width);
    let side_h = changed.div_ceil(side_w);
    if side_h > height {
        return Err(Error::Domain(
            "changed patch does not fit in the scene".into(),
        ));
    }
    let top = rng.index(height - side_h + 1);
    let left = rng.index(width - side_w + 1);
    let mut mask = vec![false; pixels];
    for k in 0..changed {
        mask[(top + k / side_w) * width + left + k % side_w] = true;
    }

    let mut draw = |signature: &[f64], offset: Option<&[f64]>, out: &mut [f64], p: usize| {
        let gain = 1.0 + CD_GAIN_SPREAD * rng.standard_normal();
        for (b, s) in signature.iter().enumerate() {
            let o = offset.map_or(0.0, |o| o[b]);
            out[b * pixels + p] = gain * s + o + CD_NOISE * rng.standard_normal();
        }
    };
    let mut before = vec![0.0; pixels * bands];
    let mut after = vec![0.0; pixels * bands];
    for r in 0..height {
        for c in 0..width {
            let p = r * width + c;
            let sig = &signatures[class_of(r, c)];
            draw(sig, None, &mut before, p);
            draw(sig, mask[p].then_some(&shift[..]), &mut after, p);
        }
    }
    Ok(ChangePair {
        before: RasterImage::new(width, height, bands, before, None)?,
        after: RasterImage::new(width, height, bands, after, None)?,
        mask: LabelMask::new(mask),
    })
}
