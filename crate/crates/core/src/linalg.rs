//! Dense symmetric eigenvalues for the small matrices (n ≤ 4) the checks need.

use crate::grid::sym_index;
use crate::scalar::Real;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues of a symmetric row-major `n×n` matrix by cyclic Jacobi rotations, ascending.
///
/// Only the upper triangle is read.
pub fn sym_eigenvalues<T: Real>(n: usize, a: &[T]) -> Vec<T> {
    assert_eq!(a.len(), n * n);
    let mut m: Vec<T> = a.to_vec();
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    let two = T::lit(2.0);
    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| m[i * n + j].powi(2)).sum();
        let diag: T = (0..n).map(|i| m[i * n + i].powi(2)).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eigs: Vec<T> = (0..n).map(|i| m[i * n + i]).collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    eigs
}

/// Smallest eigenvalue of a packed symmetric matrix; closed form for n ≤ 2, Jacobi for n = 3.
pub fn min_eigenvalue_packed<T: Real>(n: usize, m: &[T]) -> T {
    match n {
        1 => m[0],
        2 => {
            let (a, b, c) = (m[0], m[1], m[2]);
            let half = T::lit(0.5);
            let mean = half * (a + c);
            let dev = (half * (a - c)).hypot(b);
            mean - dev
        }
        _ => {
            let dense: Vec<T> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[sym_index(n, i, j)]).collect();
            sym_eigenvalues(n, &dense)[0]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_eigs() {
        let e = sym_eigenvalues(3, &[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        assert_eq!(e, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn jacobi_agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.gen_range(1..=4);
            let mut a = vec![0.0f64; n * n];
            for i in 0..n {
                for j in i..n {
                    let x = rng.gen_range(-3.0..3.0);
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                }
            }
            let ours = sym_eigenvalues(n, &a);
            let mut theirs: Vec<f64> = DMatrix::from_row_slice(n, n, &a).symmetric_eigenvalues().iter().copied().collect();
            theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (x, y) in ours.iter().zip(&theirs) {
                assert!((x - y).abs() < 1e-10, "{ours:?} vs {theirs:?}");
            }
        }
    }

    #[test]
    fn packed_min_eigenvalue_closed_forms() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3
        assert!((min_eigenvalue_packed::<f64>(2, &[2.0, 1.0, 2.0]) - 1.0).abs() < 1e-15);
        let packed = [4.0, 1.0, 0.5, 3.0, -0.2, 1.0];
        let dense = [4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 1.0];
        assert!((min_eigenvalue_packed::<f64>(3, &packed) - sym_eigenvalues(3, &dense)[0]).abs() < 1e-14);
    }
}
