//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eig(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let e = SymmetricEigen::new(symmetrize(m));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Eigenvector belonging to the largest eigenvalue.
pub fn top_eigenpair(m: &DMatrix<f64>) -> (f64, Vec<f64>) {
    let (vals, vecs) = sym_eig(m);
    let k = vals.len() - 1;
    (vals[k], vecs.column(k).iter().copied().collect())
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&v| v == 0.0)
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
