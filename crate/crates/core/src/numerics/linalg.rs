use crate::error::{Error, Result};
use crate::numerics::{dot, RngState, SquareMatrix};

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    factor: SquareMatrix,
}

impl Cholesky {
    pub fn new(a: &SquareMatrix) -> Result<Self> {
        let n = a.dim();
        let mut l = SquareMatrix::zeros(n);
        for j in 0..n {
            let lj = &l.as_slice()[j * n..j * n + j];
            let diag = a.get(j, j) - dot(lj, lj);
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let ljj = diag.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let s = {
                    let li = &l.as_slice()[i * n..i * n + j];
                    let lj = &l.as_slice()[j * n..j * n + j];
                    dot(li, lj)
                };
                l.set(i, j, (a.get(i, j) - s) / ljj);
            }
        }
        Ok(Self { factor: l })
    }

    /// Wraps an existing lower-triangular factor (e.g. one loaded from disk).
    pub fn from_factor(factor: SquareMatrix) -> Result<Self> {
        let n = factor.dim();
        for i in 0..n {
            if !(factor.get(i, i) > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> &SquareMatrix {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.dim()
    }

    /// Solves `L·z = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let n = self.dim();
        let l = self.factor.as_slice();
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / l[i * n + i];
        }
    }

    /// Solves `Lᵀ·x = z` in place.
    pub fn backward_substitute(&self, z: &mut [f64]) {
        let n = self.dim();
        let l = self.factor.as_slice();
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * z[k];
            }
            z[i] = s / l[i * n + i];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.backward_substitute(&mut x);
        x
    }

    /// `bᵀ·A⁻¹·b`, computed as `‖L⁻¹b‖²`.
    pub fn quadratic_form(&self, b: &[f64]) -> f64 {
        let mut z = b.to_vec();
        self.forward_substitute(&mut z);
        dot(&z, &z)
    }

    pub fn inverse(&self) -> SquareMatrix {
        let n = self.dim();
        let mut inv = SquareMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        inv.symmetrize();
        inv
    }
}

/// Solves `A·x = b` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    Ok(Cholesky::new(a)?.solve(b))
}

/// Haar-distributed rotation: Gram–Schmidt QR of a standard-normal matrix
/// (which fixes the `R` diagonal positive), then a column flip if needed so
/// that the determinant is `+1`.
pub fn random_rotation(d: usize, rng: &mut RngState) -> SquareMatrix {
    assert!(d >= 1, "rotation dimension must be at least 1");
    if d == 1 {
        return SquareMatrix::identity(1);
    }
    let g = rng.standard_normal_vec(d * d);
    // columns of q, stored contiguously
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| g[i * d + j]).collect())
        .collect();
    for j in 0..d {
        // two passes of modified Gram–Schmidt keep orthogonality near machine precision
        for _ in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let proj = dot(&done[k], &rest[0]);
                for (x, &qk) in rest[0].iter_mut().zip(&done[k]) {
                    *x -= proj * qk;
                }
            }
        }
        let norm = dot(&cols[j], &cols[j]).sqrt();
        cols[j].iter_mut().for_each(|x| *x /= norm);
    }
    let mut q = SquareMatrix::zeros(d);
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            q.set(i, j, v);
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..d {
            q.set(i, 0, -q.get(i, 0));
        }
    }
    q
}
