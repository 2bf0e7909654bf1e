//! Kernel detectors sharing a Gaussian-kernel background model: kernel RX
//! and kernel density estimation.

use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};
use crate::numerics::normal::HALF_LN_2PI;
use crate::numerics::stats::median;
use crate::numerics::{Cholesky, DataMatrix, RngState, SquareMatrix};
use crate::par;

pub const DEFAULT_MAX_SUPPORT: usize = 2000;
/// KRX ridge relative to the mean eigenvalue `trace(K_c)/n`.
pub const DEFAULT_KRX_REG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Krx,
    Kde,
}

/// Statistic of the pairwise support distances used as lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaRule {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma_rule: SigmaRule,
    /// Background rows kept; larger inputs are subsampled uniformly.
    pub max_support: usize,
    /// KRX ridge; `None` uses `1e-3·trace(K_c)/n`. Ignored by KDE.
    pub reg_lambda: Option<f64>,
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            sigma_rule: SigmaRule::Median,
            max_support: DEFAULT_MAX_SUPPORT,
            reg_lambda: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    kind: KernelKind,
    support: DataMatrix,
    sigma: f64,
    reg_lambda: f64,
    /// KRX only: row means of the support kernel matrix (`k̄`).
    mean_kernel: Vec<f64>,
    /// KRX only: factor of `K_c + reg·I`.
    factor: Option<Cholesky>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All `n(n−1)/2` pairwise Euclidean distances, in `(i, j>i)` order.
fn pairwise_distances(x: &DataMatrix) -> Vec<f64> {
    let n = x.rows();
    par::map_range(n, |i| {
        let a = x.row(i);
        ((i + 1)..n)
            .map(|j| sq_dist(a, x.row(j)).sqrt())
            .collect::<Vec<_>>()
    })
    .concat()
}

impl KernelModel {
    pub fn fit(x: &DataMatrix, kind: KernelKind, config: &KernelConfig) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        if config.max_support < 2 {
            return Err(Error::Domain("max_support must be at least 2".into()));
        }
        let support = if n > config.max_support {
            let idx = RngState::new(config.seed).sample_indices(n, config.max_support);
            x.select_rows(&idx)
        } else {
            x.clone()
        };

        let mut dists = pairwise_distances(&support);
        let stat = match config.sigma_rule {
            SigmaRule::Median => median(&mut dists),
            SigmaRule::Mean => dists.iter().sum::<f64>() / dists.len() as f64,
        };
        if !(stat > 0.0) {
            return Err(Error::Degenerate(
                "pairwise distance statistic is zero; support points coincide".into(),
            ));
        }

        match kind {
            KernelKind::Kde => Ok(Self {
                kind,
                sigma: stat / (support.cols() as f64).sqrt(),
                support,
                reg_lambda: 0.0,
                mean_kernel: Vec::new(),
                factor: None,
            }),
            KernelKind::Krx => Self::fit_krx(support, stat, config.reg_lambda),
        }
    }

    fn fit_krx(support: DataMatrix, sigma: f64, reg: Option<f64>) -> Result<Self> {
        let m = support.rows();
        let gamma = 1.0 / (2.0 * sigma * sigma);
        let rows = par::map_range(m, |i| {
            (0..m)
                .map(|j| (-gamma * sq_dist(support.row(i), support.row(j))).exp())
                .collect::<Vec<_>>()
        });
        let k = SquareMatrix::new(m, rows.concat())?;

        // K_c = H·K·H with H = I − 11ᵀ/m
        let mean_kernel: Vec<f64> = (0..m)
            .map(|i| k.row(i).iter().sum::<f64>() / m as f64)
            .collect();
        let grand = mean_kernel.iter().sum::<f64>() / m as f64;
        let mut kc = SquareMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                kc.set(i, j, k.get(i, j) - mean_kernel[i] - mean_kernel[j] + grand);
            }
        }
        kc.symmetrize();

        let reg_lambda = match reg {
            Some(r) if r > 0.0 && r.is_finite() => r,
            Some(r) => return Err(Error::Domain(format!("KRX reg_lambda {r} must be > 0"))),
            None => DEFAULT_KRX_REG * kc.trace() / m as f64,
        };
        if !(reg_lambda > 0.0) {
            return Err(Error::Degenerate(
                "centered kernel matrix has zero trace".into(),
            ));
        }
        kc.add_diagonal(reg_lambda);
        let factor = Cholesky::new(&kc)?;
        Ok(Self {
            kind: KernelKind::Krx,
            support,
            sigma,
            reg_lambda,
            mean_kernel,
            factor: Some(factor),
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn support(&self) -> &DataMatrix {
        &self.support
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn reg_lambda(&self) -> f64 {
        self.reg_lambda
    }

    pub fn dim(&self) -> usize {
        self.support.cols()
    }

    fn check(&self, x: &DataMatrix, kind: KernelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind_name(kind),
                got: kind_name(self.kind),
            });
        }
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// `(k_x − k̄)ᵀ·(K_c + reg·I)⁻¹·(k_x − k̄)`, clipped at 0.
    pub fn score_krx(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        self.check(x, KernelKind::Krx)?;
        let factor = self.factor.as_ref().expect("KRX model carries a factor");
        let gamma = 1.0 / (2.0 * self.sigma * self.sigma);
        Ok(par::map_rows(x.as_slice(), x.cols(), |row| {
            let centered: Vec<f64> = self
                .support
                .iter_rows()
                .zip(&self.mean_kernel)
                .map(|(s, kbar)| (-gamma * sq_dist(row, s)).exp() - kbar)
                .collect();
            factor.quadratic_form(&centered).max(0.0)
        }))
    }

    /// `−log[(1/n)·Σᵢ N(x; xᵢ, σ²I)]` via log-sum-exp.
    pub fn score_kde(&self, x: &DataMatrix) -> Result<Vec<f64>> {
        self.check(x, KernelKind::Kde)?;
        let n = self.support.rows() as f64;
        let d = self.dim() as f64;
        let s2 = self.sigma * self.sigma;
        let log_norm = d * (HALF_LN_2PI + self.sigma.ln());
        Ok(par::map_rows(x.as_slice(), x.cols(), |row| {
            let exps: Vec<f64> = self
                .support
                .iter_rows()
                .map(|s| -sq_dist(row, s) / (2.0 * s2))
                .collect();
            let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
            -(max + sum.ln() - n.ln() - log_norm)
        }))
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u8(match self.kind {
            KernelKind::Krx => 0,
            KernelKind::Kde => 1,
        });
        w.usize(self.support.rows());
        w.usize(self.support.cols());
        w.raw_f64s(self.support.as_slice());
        w.f64(self.sigma);
        w.f64(self.reg_lambda);
        if let Some(f) = &self.factor {
            w.f64s(&self.mean_kernel);
            w.raw_f64s(f.factor().as_slice());
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let kind = match r.u8()? {
            0 => KernelKind::Krx,
            1 => KernelKind::Kde,
            t => return Err(FormatError::InvalidField(format!("kernel kind {t}")).into()),
        };
        let rows = r.usize()?;
        let cols = r.usize()?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{rows}×{cols} support")))?;
        let invalid = |e: Error| Error::from(FormatError::InvalidField(e.to_string()));
        let support = DataMatrix::new(rows, cols, r.raw_f64s(count)?).map_err(invalid)?;
        if rows < 2 {
            return Err(FormatError::InvalidField("kernel support needs 2 rows".into()).into());
        }
        let sigma = r.f64()?;
        let reg_lambda = r.f64()?;
        if !(sigma > 0.0) {
            return Err(FormatError::InvalidField(format!("kernel sigma {sigma}")).into());
        }
        let (mean_kernel, factor) = match kind {
            KernelKind::Kde => (Vec::new(), None),
            KernelKind::Krx => {
                let mean_kernel = r.f64s()?;
                if mean_kernel.len() != rows {
                    return Err(FormatError::InvalidField("mean kernel length".into()).into());
                }
                let l = SquareMatrix::new(rows, r.raw_f64s(rows * rows)?).map_err(invalid)?;
                (
                    mean_kernel,
                    Some(Cholesky::from_factor(l).map_err(invalid)?),
                )
            }
        };
        Ok(Self {
            kind,
            support,
            sigma,
            reg_lambda,
            mean_kernel,
            factor,
        })
    }
}

pub(crate) fn kind_name(kind: KernelKind) -> &'static str {
    match kind {
        KernelKind::Krx => "krx",
        KernelKind::Kde => "kde",
    }
}
