//! Sparse direct solves and shift-invert eigenpairs.

mod arnoldi;
mod lu;

pub use arnoldi::{shift_invert_eigs, ArnoldiOptions, EigenPair};
pub use lu::{sparse_factor, FactorizedSystem, SymbolicPattern};

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenvalues and right eigenvectors (columns) of a small dense matrix.
pub fn dense_eigen(rows: &[Vec<Complex64>]) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let n = rows.len();
    let m = Mat::<Complex64>::from_fn(n, n, |i, j| rows[i][j]);
    let evd = m
        .eigen()
        .map_err(|e| Error::Linalg(format!("dense eigendecomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let values = (0..n).map(|i| s[i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| u[(i, j)]).collect()).collect();
    Ok((values, vectors))
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian inner product ⟨a, b⟩ = Σ conj(a)·b.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
