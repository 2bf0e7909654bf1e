use crate::error::{Error, Result};
use crate::numerics::SquareMatrix;

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as the columns of the second matrix. Each eigenvector is sign-normalised so
/// that its largest-magnitude component is positive, which makes the output
/// deterministic.
pub fn symmetric_eig(a: &SquareMatrix) -> Result<(Vec<f64>, SquareMatrix)> {
    let n = a.dim();
    let scale = a.max_abs().max(1.0);
    if a.asymmetry() > SYMMETRY_TOL * scale {
        return Err(Error::Domain(format!(
            "matrix is not symmetric (max asymmetry {:e})",
            a.asymmetry()
        )));
    }

    let mut m = a.clone();
    m.symmetrize();
    let mut v = SquareMatrix::identity(n);
    let norm2 = m.frobenius_norm().powi(2);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j).powi(2))
            .sum();
        if off <= f64::EPSILON * f64::EPSILON * norm2 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec = v.column(src);
        let pivot = vec.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        if pivot < 0.0 {
            vec.iter_mut().for_each(|x| *x = -*x);
        }
        for (row, x) in vec.into_iter().enumerate() {
            vectors.set(row, col, x);
        }
    }
    Ok((values, vectors))
}

fn rotate(m: &mut SquareMatrix, v: &mut SquareMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.dim();
    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;

    fn check_decomposition(a: &SquareMatrix, values: &[f64], vectors: &SquareMatrix) {
        let n = a.dim();
        let norm = a.frobenius_norm().max(1e-300);
        for k in 0..n {
            let vk = vectors.column(k);
            let av = a.mul_vec(&vk);
            for i in 0..n {
                assert!((av[i] - values[k] * vk[i]).abs() <= 1e-8 * norm);
            }
        }
        assert!(vectors.orthogonality_error() < 1e-10);
        assert!(values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let a = SquareMatrix::identity(3);
        let (values, vectors) = symmetric_eig(&a).unwrap();
        assert_eq!(values, vec![1.0, 1.0, 1.0]);
        check_decomposition(&a, &values, &vectors);
    }

    #[test]
    fn diagonal_matrix() {
        let a = SquareMatrix::from_diagonal(&[1.0, 3.0]);
        let (values, vectors) = symmetric_eig(&a).unwrap();
        assert_eq!(values, vec![3.0, 1.0]);
        assert!((vectors.get(1, 0).abs() - 1.0).abs() < 1e-15);
        assert!((vectors.get(0, 1).abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_hand_solution() {
        // characteristic polynomial (2-λ)² - 1 = 0 → λ = 3, 1
        let a = SquareMatrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let (values, vectors) = symmetric_eig(&a).unwrap();
        assert!((values[0] - 3.0).abs() < 1e-14);
        assert!((values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vectors.get(0, 0).abs() - h).abs() < 1e-14);
        assert!((vectors.get(1, 0) - vectors.get(0, 0)).abs() < 1e-14);
        assert!((vectors.get(0, 1) + vectors.get(1, 1)).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let a = SquareMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(symmetric_eig(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn random_symmetric_matrices() {
        let mut rng = RngState::new(99);
        for n in [1usize, 2, 5, 16, 40] {
            let g = rng.standard_normal_vec(n * n);
            let mut a = SquareMatrix::new(n, g).unwrap();
            a.symmetrize();
            let (values, vectors) = symmetric_eig(&a).unwrap();
            check_decomposition(&a, &values, &vectors);
        }
    }
}
