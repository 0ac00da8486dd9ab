//! Small dense helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Determinant by LU decomposition with partial pivoting. The empty matrix has determinant 1.
pub fn det(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

/// Restriction of `m` to the rows and columns in `idx` (in that order).
pub fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| m[(idx[r], idx[c])])
}

/// Largest absolute difference between `m` and its transpose.
pub fn symmetry_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted ascending,
/// eigenvectors as the matching columns.
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    if n == 0 {
        return SymEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    SymEigen { values, vectors }
}

/// `V diag(values) Vᵀ`, symmetrized.
pub fn from_eigen(values: &[f64], vectors: &DMatrix<f64>) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(values));
    symmetrize(&(vectors * d * vectors.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_determinant_is_one() {
        assert_eq!(det(&DMatrix::zeros(0, 0)), 1.0);
    }

    #[test]
    fn det_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.5]);
        assert!((det(&m) - 0.21).abs() < 1e-15);
    }

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = sym_eigen(&m);
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        let back = from_eigen(&e.values, &e.vectors);
        assert!((back - m).abs().max() < 1e-12);
    }
}
