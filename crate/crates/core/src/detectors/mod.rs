//! Anomaly and change detectors. Every score is "higher = more anomalous".
//!
//! Change detection uses the same machinery: fit on the before-image pixels,
//! score the after-image pixels.
//!
//! Fitted detectors persist in one binary container (all integers and doubles
//! little-endian):
//!
//! ```text
//! "RBIG"  u32 version=1  u32 kind (0 rbig, 1 rx, 2 krx, 3 kde, 4 hybrid)  payload
//! ```
//!
//! with a human-readable JSON summary alongside at `<path>.json`. Loading
//! needs only the binary file.

mod kernel;
mod rx;

use std::fs;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::model::{GaussianizationModel, RbigConfig};
use crate::numerics::DataMatrix;
use crate::raster::sidecar_path;

pub use kernel::{
    KernelConfig, KernelKind, KernelModel, SigmaRule, DEFAULT_KRX_REG, DEFAULT_MAX_SUPPORT,
};
pub use rx::{RxModel, DEFAULT_RX_LAMBDA};

pub const MODEL_MAGIC: [u8; 4] = *b"RBIG";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_RETAIN_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Rbig,
    Rx,
    Krx,
    Kde,
    Hybrid,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::Rbig,
        DetectorKind::Rx,
        DetectorKind::Krx,
        DetectorKind::Kde,
        DetectorKind::Hybrid,
    ];

    pub fn tag(self) -> u32 {
        match self {
            DetectorKind::Rbig => 0,
            DetectorKind::Rx => 1,
            DetectorKind::Krx => 2,
            DetectorKind::Kde => 3,
            DetectorKind::Hybrid => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self, FormatError> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or(FormatError::UnknownKind(tag))
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Rbig => "rbig",
            DetectorKind::Rx => "rx",
            DetectorKind::Krx => "krx",
            DetectorKind::Kde => "kde",
            DetectorKind::Hybrid => "hybrid",
        }
    }

    pub fn monotone_of(self) -> MonotoneOf {
        match self {
            DetectorKind::Rbig | DetectorKind::Kde | DetectorKind::Hybrid => {
                MonotoneOf::NegativeLogDensity
            }
            DetectorKind::Rx => MonotoneOf::Mahalanobis,
            DetectorKind::Krx => MonotoneOf::KernelQuadratic,
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown detector '{s}'")))
    }
}

/// What quantity a score is monotone in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotoneOf {
    NegativeLogDensity,
    Mahalanobis,
    KernelQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub detector: DetectorKind,
    pub monotone_of: MonotoneOf,
}

impl ScoreVector {
    fn new(scores: Vec<f64>, detector: DetectorKind) -> Self {
        Self {
            scores,
            detector,
            monotone_of: detector.monotone_of(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// `−log p(x)` under a fitted Gaussianization model.
pub fn score_rbig(model: &GaussianizationModel, x: &DataMatrix) -> Result<Vec<f64>> {
    Ok(model
        .log_density(x)?
        .log_p
        .into_iter()
        .map(|l| -l)
        .collect())
}

/// RX pre-filter followed by RBIG on the retained background.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    rx: RxModel,
    rbig: GaussianizationModel,
    retain_fraction: f64,
    retained: usize,
}

impl HybridModel {
    pub fn fit(x: &DataMatrix, retain_fraction: f64, config: &RbigConfig) -> Result<Self> {
        let rx = RxModel::fit(x)?;
        let keep = Self::retained_rows(&rx.score(x)?, retain_fraction)?;
        let needed = 10 * x.cols();
        if keep.len() < needed {
            return Err(Error::InsufficientSamples {
                needed,
                got: keep.len(),
            });
        }
        info!("hybrid: RBIG on {} of {} rows", keep.len(), x.rows());
        let rbig = GaussianizationModel::fit(&x.select_rows(&keep), config)?;
        Ok(Self {
            rx,
            rbig,
            retain_fraction,
            retained: keep.len(),
        })
    }

    /// Indices of the `round(ρ·ℓ)` lowest RX scores, ties broken by row
    /// index, returned in ascending row order.
    pub fn retained_rows(rx_scores: &[f64], retain_fraction: f64) -> Result<Vec<usize>> {
        if !(0.5..1.0).contains(&retain_fraction) {
            return Err(Error::Domain(format!(
                "retain fraction {retain_fraction} outside [0.5, 1)"
            )));
        }
        let m = (retain_fraction * rx_scores.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..rx_scores.len()).collect();
        order.sort_by(|&a, &b| rx_scores[a].total_cmp(&rx_scores[b]).then(a.cmp(&b)));
        order.truncate(m);
        order.sort_unstable();
        Ok(order)
    }

    pub fn rx(&self) -> &RxModel {
        &self.rx
    }

    pub fn rbig(&self) -> &GaussianizationModel {
        &self.rbig
    }

    pub fn retain_fraction(&self) -> f64 {
        self.retain_fraction
    }

    pub fn retained(&self) -> usize {
        self.retained
    }
}

/// Everything needed to fit any detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub kind: DetectorKind,
    pub rbig: RbigConfig,
    pub kernel: KernelConfig,
    pub rx_lambda: f64,
    pub retain_fraction: f64,
}

impl FitOptions {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            rbig: RbigConfig::default(),
            kernel: KernelConfig::default(),
            rx_lambda: DEFAULT_RX_LAMBDA,
            retain_fraction: DEFAULT_RETAIN_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Rbig(GaussianizationModel),
    Rx(RxModel),
    Krx(KernelModel),
    Kde(KernelModel),
    Hybrid(HybridModel),
}

impl Detector {
    pub fn fit(x: &DataMatrix, opts: &FitOptions) -> Result<Self> {
        Ok(match opts.kind {
            DetectorKind::Rbig => Detector::Rbig(GaussianizationModel::fit(x, &opts.rbig)?),
            DetectorKind::Rx => Detector::Rx(RxModel::fit_with_lambda(x, opts.rx_lambda)?),
            DetectorKind::Krx => Detector::Krx(KernelModel::fit(x, KernelKind::Krx, &opts.kernel)?),
            DetectorKind::Kde => Detector::Kde(KernelModel::fit(x, KernelKind::Kde, &opts.kernel)?),
            DetectorKind::Hybrid => {
                Detector::Hybrid(HybridModel::fit(x, opts.retain_fraction, &opts.rbig)?)
            }
        })
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Detector::Rbig(_) => DetectorKind::Rbig,
            Detector::Rx(_) => DetectorKind::Rx,
            Detector::Krx(_) => DetectorKind::Krx,
            Detector::Kde(_) => DetectorKind::Kde,
            Detector::Hybrid(_) => DetectorKind::Hybrid,
        }
    }

    /// Number of columns expected in scored data.
    pub fn input_dim(&self) -> usize {
        match self {
            Detector::Rbig(m) => m.input_dim(),
            Detector::Rx(m) => m.dim(),
            Detector::Krx(m) | Detector::Kde(m) => m.dim(),
            Detector::Hybrid(h) => h.rbig.input_dim(),
        }
    }

    pub fn score(&self, x: &DataMatrix) -> Result<ScoreVector> {
        let scores = match self {
            Detector::Rbig(m) => score_rbig(m, x)?,
            Detector::Rx(m) => m.score(x)?,
            Detector::Krx(m) => m.score_krx(x)?,
            Detector::Kde(m) => m.score_kde(x)?,
            Detector::Hybrid(h) => score_rbig(&h.rbig, x)?,
        };
        Ok(ScoreVector::new(scores, self.kind()))
    }

    /// Scores the after-image pixels `x2` under a model fitted on the
    /// before-image.
    pub fn score_change(&self, x2: &DataMatrix) -> Result<ScoreVector> {
        self.score(x2)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.u32(self.kind().tag());
        match self {
            Detector::Rbig(m) => m.encode(&mut w),
            Detector::Rx(m) => m.encode(&mut w),
            Detector::Krx(m) | Detector::Kde(m) => m.encode(&mut w),
            Detector::Hybrid(h) => {
                w.f64(h.retain_fraction);
                w.usize(h.retained);
                h.rx.encode(&mut w);
                h.rbig.encode(&mut w);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(MODEL_MAGIC)?;
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let kind = DetectorKind::from_tag(r.u32()?)?;
        let det = match kind {
            DetectorKind::Rbig => Detector::Rbig(GaussianizationModel::decode(&mut r)?),
            DetectorKind::Rx => Detector::Rx(RxModel::decode(&mut r)?),
            DetectorKind::Krx | DetectorKind::Kde => {
                let m = KernelModel::decode(&mut r)?;
                match (kind, m.kind()) {
                    (DetectorKind::Krx, KernelKind::Krx) => Detector::Krx(m),
                    (DetectorKind::Kde, KernelKind::Kde) => Detector::Kde(m),
                    _ => {
                        return Err(FormatError::InvalidField(
                            "kernel kind disagrees with header".into(),
                        )
                        .into())
                    }
                }
            }
            DetectorKind::Hybrid => {
                let retain_fraction = r.f64()?;
                let retained = r.usize()?;
                let rx = RxModel::decode(&mut r)?;
                let rbig = GaussianizationModel::decode(&mut r)?;
                if rx.dim() != rbig.input_dim() {
                    return Err(FormatError::InvalidField("hybrid stage dimensions".into()).into());
                }
                Detector::Hybrid(HybridModel {
                    rx,
                    rbig,
                    retain_fraction,
                    retained,
                })
            }
        };
        r.finish()?;
        Ok(det)
    }

    /// Human-readable summary written next to the binary model.
    pub fn summary(&self) -> serde_json::Value {
        let details = match self {
            Detector::Rbig(m) => rbig_summary(m),
            Detector::Rx(m) => json!({ "reg_lambda": m.reg_lambda() }),
            Detector::Krx(m) | Detector::Kde(m) => json!({
                "sigma": m.sigma(),
                "reg_lambda": m.reg_lambda(),
                "support_rows": m.support().rows(),
            }),
            Detector::Hybrid(h) => json!({
                "retain_fraction": h.retain_fraction,
                "retained_rows": h.retained,
                "rx_reg_lambda": h.rx.reg_lambda(),
                "rbig": rbig_summary(&h.rbig),
            }),
        };
        json!({
            "format_version": MODEL_VERSION,
            "method": self.kind().name(),
            "input_dim": self.input_dim(),
            "details": details,
        })
    }

    /// Writes the binary model to `path` and its JSON summary to `<path>.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes())?;
        let mut text = serde_json::to_string_pretty(&self.summary())?;
        text.push('\n');
        fs::write(sidecar_path(path), text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn rbig_summary(m: &GaussianizationModel) -> serde_json::Value {
    json!({
        "layers": m.layers().len(),
        "dim": m.dim(),
        "dropped_bands": m.dropped_bands(),
        "fit": m.metadata(),
    })
}

impl GaussianizationModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Detector::Rbig(self.clone()).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        match Detector::load(path)? {
            Detector::Rbig(m) => Ok(m),
            other => Err(Error::KindMismatch {
                expected: "rbig",
                got: other.kind().name(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn gaussian(n: usize, seed: u64) -> DataMatrix {
        let mut rng = RngState::new(seed);
        DataMatrix::new(n, 2, rng.standard_normal_vec(2 * n)).unwrap()
    }

    #[test]
    fn retention_count_and_ties() {
        let scores: Vec<f64> = (0..1000).map(|i| (i % 10) as f64).collect();
        let keep = HybridModel::retained_rows(&scores, 0.95).unwrap();
        assert_eq!(keep.len(), 950);
        // all 0..8 scores (900 rows) plus the first 50 rows scoring 9
        let nines: Vec<usize> = keep.iter().copied().filter(|&i| i % 10 == 9).collect();
        assert_eq!(nines.len(), 50);
        assert_eq!(nines, (0..50).map(|k| 10 * k + 9).collect::<Vec<_>>());
    }

    #[test]
    fn retain_fraction_bounds() {
        assert!(HybridModel::retained_rows(&[1.0; 10], 0.4).is_err());
        assert!(HybridModel::retained_rows(&[1.0; 10], 1.0).is_err());
    }

    #[test]
    fn hybrid_with_too_few_rows() {
        let x = gaussian(30, 1);
        let err = HybridModel::fit(&x, 0.5, &RbigConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                needed: 20,
                got: 15
            }
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(DetectorKind::from_tag(k.tag()).unwrap(), k);
        }
        assert_eq!(DetectorKind::from_tag(9), Err(FormatError::UnknownKind(9)));
    }

    #[test]
    fn every_detector_round_trips_bit_exactly() {
        let x = gaussian(300, 2);
        for kind in DetectorKind::ALL {
            let mut opts = FitOptions::new(kind);
            opts.rbig.max_layers = 5;
            let det = Detector::fit(&x, &opts).unwrap();
            let bytes = det.to_bytes();
            let back = Detector::from_bytes(&bytes).unwrap();
            assert_eq!(back, det, "{kind:?}");
            assert_eq!(back.to_bytes(), bytes);
            assert_eq!(back.score(&x).unwrap(), det.score(&x).unwrap());
        }
    }

    #[test]
    fn header_errors_are_typed() {
        let det = Detector::fit(&gaussian(100, 3), &FitOptions::new(DetectorKind::Rx)).unwrap();
        let good = det.to_bytes();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(
            Detector::from_bytes(&bad),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));

        let mut bad = good.clone();
        bad[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Detector::from_bytes(&bad),
            Err(Error::Format(FormatError::UnsupportedVersion(2)))
        ));

        let mut bad = good.clone();
        bad[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Detector::from_bytes(&bad),
            Err(Error::Format(FormatError::UnknownKind(7)))
        ));

        assert!(matches!(
            Detector::from_bytes(&good[..good.len() - 3]),
            Err(Error::Format(FormatError::TruncatedPayload { .. }))
        ));
    }

    #[test]
    fn change_scores_on_identical_images_equal_anomaly_scores() {
        let x = gaussian(400, 4);
        let mut opts = FitOptions::new(DetectorKind::Rbig);
        opts.rbig.max_layers = 10;
        let det = Detector::fit(&x, &opts).unwrap();
        assert_eq!(det.score_change(&x).unwrap(), det.score(&x).unwrap());
    }
}
