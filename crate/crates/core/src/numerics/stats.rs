use crate::error::{Error, Result};
use crate::numerics::{DataMatrix, SquareMatrix};
use crate::par;

/// Column means and the unbiased (divisor ℓ−1) covariance matrix.
///
/// Two passes over the data; each pass sums fixed-size row blocks and folds
/// the block sums in order, so the result is independent of thread count.
pub fn mean_and_covariance(x: &DataMatrix) -> Result<(Vec<f64>, SquareMatrix)> {
    let n = x.rows();
    let d = x.cols();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }

    let sums = par::chunked_partials(x.as_slice(), d, |block| {
        let mut s = vec![0.0; d];
        for row in block.chunks(d) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    });
    let mut mean = vec![0.0; d];
    for s in &sums {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let partials = par::chunked_partials(x.as_slice(), d, |block| {
        let mut c = vec![0.0; d * d];
        let mut centered = vec![0.0; d];
        for row in block.chunks(d) {
            for ((c, &v), &m) in centered.iter_mut().zip(row).zip(&mean) {
                *c = v - m;
            }
            for i in 0..d {
                let ci = centered[i];
                for j in i..d {
                    c[i * d + j] += ci * centered[j];
                }
            }
        }
        c
    });
    let mut cov = vec![0.0; d * d];
    for p in &partials {
        for (c, v) in cov.iter_mut().zip(p) {
            *c += v;
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / denom;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok((mean, SquareMatrix::new(d, cov)?))
}

/// Sample moments of a single column: `(mean, variance, skewness, excess kurtosis)`.
///
/// Variance uses divisor ℓ; skewness and kurtosis are the plain moment ratios.
pub fn moments(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let c = v - mean;
        let c2 = c * c;
        m2 += c2;
        m3 += c2 * c;
        m4 += c2 * c2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    (mean, m2, skew, kurt)
}

/// Pearson correlation between two equally long columns.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Quantile with linear interpolation between order statistics
/// (the "type 7" rule). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median of an unsorted slice (mean of the two middle values for even length).
pub fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}
