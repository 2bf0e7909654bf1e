//! Detection-quality metrics: ROC, precision-recall, partial AUC and
//! bootstrap AUC distributions.
//!
//! Everything here depends on the ordering of the scores only. Samples with
//! equal scores always move together across a threshold, which makes the ROC
//! area equal to the tie-corrected Mann–Whitney statistic and invariant under
//! any strictly increasing transform of the scores.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::stats::quantile_sorted;
use crate::numerics::RngState;
use crate::par;

/// Binary ground truth, `true` = anomaly / change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    labels: Vec<bool>,
}

impl LabelMask {
    pub fn new(labels: Vec<bool>) -> Self {
        Self { labels }
    }

    /// Nonzero values are positives.
    pub fn from_values(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| v != 0.0).collect())
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negative_count(&self) -> usize {
        self.len() - self.positive_count()
    }

    /// Keeps the labels at `indices`.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::new(indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// Descending; the first entry is `+∞` (nothing flagged).
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub average_precision: f64,
}

/// `(threshold, true positives, false positives)` per tie group, plus the
/// class totals.
type Sweep = (Vec<(f64, usize, usize)>, usize, usize);

/// Cumulative counts after each group of tied scores, sweeping from the
/// highest score down.
fn sweep(scores: &[f64], mask: &LabelMask) -> Result<Sweep> {
    if scores.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            expected: mask.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("scores contain NaN".into()));
    }
    let pos = mask.positive_count();
    let neg = mask.negative_count();
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedCurve(format!(
            "need both classes, found {pos} positive and {neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let labels = mask.labels();
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((s, tp, fp));
    }
    Ok((points, pos, neg))
}

pub fn roc(scores: &[f64], mask: &LabelMask) -> Result<RocCurve> {
    let (points, pos, neg) = sweep(scores, mask)?;
    let (p, n) = (pos as f64, neg as f64);
    let mut thresholds = Vec::with_capacity(points.len() + 1);
    let mut fpr = Vec::with_capacity(points.len() + 1);
    let mut tpr = Vec::with_capacity(points.len() + 1);
    thresholds.push(f64::INFINITY);
    fpr.push(0.0);
    tpr.push(0.0);
    for (s, tp, fp) in points {
        thresholds.push(s);
        fpr.push(fp as f64 / n);
        tpr.push(tp as f64 / p);
    }
    let auc = trapezoid(&fpr, &tpr);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}

/// Convenience: ROC area only.
pub fn auc(scores: &[f64], mask: &LabelMask) -> Result<f64> {
    Ok(roc(scores, mask)?.auc)
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (xw[1] - xw[0]) * (yw[0] + yw[1]) * 0.5)
        .sum()
}

pub fn precision_recall(scores: &[f64], mask: &LabelMask) -> Result<PrCurve> {
    let (points, pos, _) = sweep(scores, mask)?;
    let p = pos as f64;
    let mut curve = PrCurve {
        thresholds: Vec::with_capacity(points.len()),
        recall: Vec::with_capacity(points.len()),
        precision: Vec::with_capacity(points.len()),
        average_precision: 0.0,
    };
    let mut prev_recall = 0.0;
    for (s, tp, fp) in points {
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        curve.average_precision += (recall - prev_recall) * precision;
        prev_recall = recall;
        curve.thresholds.push(s);
        curve.recall.push(recall);
        curve.precision.push(precision);
    }
    Ok(curve)
}

/// Area of the ROC over `fpr ∈ [0, cap]`, under each reporting convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialAuc {
    pub fpr_cap: f64,
    /// Unnormalised area; at most `cap`.
    pub raw: f64,
    /// `raw / cap`: 1 for a perfect detector, `cap / 2` for a random one.
    pub normalized: f64,
    /// McClish standardisation: 1 for a perfect detector, 0.5 for a random one.
    pub standardized: f64,
}

fn check_cap(fpr_cap: f64) -> Result<()> {
    if !(fpr_cap > 0.0 && fpr_cap <= 1.0) {
        return Err(Error::Domain(format!("fpr cap {fpr_cap} outside (0, 1]")));
    }
    Ok(())
}

/// Trapezoid area of the ROC restricted to `fpr ≤ cap`, divided by `cap`.
pub fn partial_auc(curve: &RocCurve, fpr_cap: f64) -> Result<f64> {
    Ok(partial_auc_all(curve, fpr_cap)?.normalized)
}

pub fn partial_auc_all(curve: &RocCurve, fpr_cap: f64) -> Result<PartialAuc> {
    check_cap(fpr_cap)?;
    let mut raw = 0.0;
    for i in 1..curve.fpr.len() {
        let (x0, x1) = (curve.fpr[i - 1], curve.fpr[i]);
        let (y0, y1) = (curve.tpr[i - 1], curve.tpr[i]);
        if x0 >= fpr_cap {
            break;
        }
        if x1 <= fpr_cap {
            raw += (x1 - x0) * (y0 + y1) * 0.5;
        } else {
            let y_cap = y0 + (y1 - y0) * (fpr_cap - x0) / (x1 - x0);
            raw += (fpr_cap - x0) * (y0 + y_cap) * 0.5;
            break;
        }
    }
    let min_area = 0.5 * fpr_cap * fpr_cap;
    let standardized = 0.5 * (1.0 + (raw - min_area) / (fpr_cap - min_area));
    Ok(PartialAuc {
        fpr_cap,
        raw,
        normalized: raw / fpr_cap,
        standardized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub runs: usize,
    pub median: f64,
    pub q2_5: f64,
    pub q97_5: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Maximum redraws of a single-class resample before giving up.
pub const MAX_RESAMPLE_RETRIES: usize = 100;

/// Pixel-level bootstrap of the ROC area.
///
/// Run `k` draws `ℓ` indices with replacement from its own stream
/// (`seed`, `k`), so results do not depend on scheduling. Resamples that
/// contain a single class are redrawn.
pub fn bootstrap_auc(
    scores: &[f64],
    mask: &LabelMask,
    runs: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if runs == 0 {
        return Err(Error::Domain("bootstrap needs at least one run".into()));
    }
    // validates lengths and class presence
    sweep(scores, mask)?;
    let n = scores.len();
    let labels = mask.labels();
    let values = par::map_range(runs, |run| -> Result<f64> {
        let mut rng = RngState::with_stream(seed, run as u64);
        for _ in 0..=MAX_RESAMPLE_RETRIES {
            let idx: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
            let pos = idx.iter().filter(|&&i| labels[i]).count();
            if pos == 0 || pos == n {
                continue;
            }
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            return auc(&s, &mask.select(&idx));
        }
        Err(Error::UndefinedCurve(format!(
            "bootstrap run {run}: {MAX_RESAMPLE_RETRIES} consecutive single-class resamples"
        )))
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        runs,
        median: quantile_sorted(&sorted, 0.5),
        q2_5: quantile_sorted(&sorted, 0.025),
        q97_5: quantile_sorted(&sorted, 0.975),
        min: sorted[0],
        max: sorted[runs - 1],
        values,
    })
}
