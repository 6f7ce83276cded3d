//! Dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖M − M^H‖_F`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (m[(i, j)] - m[(j, i)].conj()).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the Hermitian
/// part `(M + M^H)/2` is used.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()).scale(0.5);
    let mut vals: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Eigen-decomposition of a Hermitian matrix, eigenpairs sorted by
/// descending eigenvalue.
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// `v^H M v`.
pub fn quad_form(m: &CMatrix, v: &[Complex64]) -> Complex64 {
    let n = v.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        acc += v[i].conj() * row;
    }
    acc
}

pub fn mat_vec(m: &CMatrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
        .collect()
}
