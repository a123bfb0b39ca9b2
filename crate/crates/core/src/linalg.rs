//! Small dense linear-algebra helpers shared by the solvers and estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative eigenvalue cutoff used by [`pinv_sym`].
pub const PINV_CUTOFF: f64 = 1e-10;

/// Symmetric part `(m + mᵀ)/2`.
pub fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix (the upper and lower triangles are averaged first).
pub fn sym_eigenvalues(m: &Matrix) -> Vector {
    SymmetricEigen::new(sym(m)).eigenvalues
}

pub fn lambda_max_sym(m: &Matrix) -> f64 {
    sym_eigenvalues(m).max()
}

pub fn lambda_min_sym(m: &Matrix) -> f64 {
    sym_eigenvalues(m).min()
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix via eigendecomposition,
/// discarding eigenvalues below `PINV_CUTOFF * λ_max`.
pub fn pinv_sym(m: &Matrix) -> Matrix {
    let n = m.nrows();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(sym(m));
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if lmax == 0.0 || !lmax.is_finite() {
        return Matrix::zeros(n, n);
    }
    let cutoff = PINV_CUTOFF * lmax;
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lam;
        }
    }
    out
}

/// Replace the symmetric part of `m` by its projection onto matrices whose
/// eigenvalues are all `<= ceiling`; the antisymmetric part is kept.
pub fn clamp_sym_eigenvalues(m: &Matrix, ceiling: f64) -> Matrix {
    let s = sym(m);
    let eig = SymmetricEigen::new(s.clone());
    let mut proj = Matrix::zeros(m.nrows(), m.ncols());
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        proj += (v * v.transpose()) * lam.min(ceiling);
    }
    m - s + proj
}

/// Row-major flattening, used for file formats.
pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Option<Matrix> {
    if data.len() != rows * cols {
        return None;
    }
    Some(Matrix::from_row_slice(rows, cols, data))
}

/// Canonical basis vector `e_j` (zero-based).
pub fn basis(n: usize, j: usize) -> Vector {
    let mut v = Vector::zeros(n);
    v[j] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_of_rank_deficient_matrix_is_finite_and_reflexive() {
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let p = pinv_sym(&m);
        assert!(p.iter().all(|x| x.is_finite()));
        let back = &m * &p * &m;
        assert_relative_eq!(back, m, epsilon = 1e-10);
    }

    #[test]
    fn pinv_matches_inverse_on_full_rank() {
        let m = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = m.clone().try_inverse().unwrap();
        assert_relative_eq!(pinv_sym(&m), inv, epsilon = 1e-12);
    }

    #[test]
    fn clamping_keeps_antisymmetric_part() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, -3.0]);
        let c = clamp_sym_eigenvalues(&m, -1e-6);
        assert!(lambda_max_sym(&c) <= -1e-6 + 1e-12);
        let anti = |x: &Matrix| x - x.transpose();
        assert_relative_eq!(anti(&c), anti(&m), epsilon = 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let m = Matrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(to_row_major(&m), vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(from_row_major(2, 3, &to_row_major(&m)).unwrap(), m);
        assert!(from_row_major(2, 2, &[1.0]).is_none());
    }
}
