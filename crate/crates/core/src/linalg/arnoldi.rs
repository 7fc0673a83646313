use num_complex::Complex64;

use super::lu::sparse_factor;
use super::{dense_eigen, dot, norm};
use crate::discretization::SparseOperator;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ArnoldiOptions {
    /// Krylov subspace dimension; `None` means max(20, 4k).
    pub subspace: Option<usize>,
    pub max_restarts: usize,
    /// Bound on ‖Av − λv‖/‖v‖.
    pub tol: f64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            subspace: None,
            max_restarts: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: Complex64,
    /// Unit-norm right eigenvector.
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

fn start_vector(n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + 0.5 * (0.37 * i as f64).sin(), 0.25 * (0.11 * i as f64).cos()))
        .collect();
    let s = norm(&v);
    v.into_iter().map(|z| z / s).collect()
}

/// The `k` eigenpairs of `a` nearest `sigma`, by Arnoldi on (A − σI)⁻¹ with
/// explicit restarts. Results are sorted by |λ − σ|.
pub fn shift_invert_eigs(
    a: &SparseOperator,
    sigma: Complex64,
    k: usize,
    opts: &ArnoldiOptions,
) -> Result<Vec<EigenPair>> {
    let n = a.dim();
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("must be in 1..={n}, got {k}")));
    }
    let m = opts.subspace.unwrap_or((4 * k).max(20)).min(n).max(k);
    let shifted = a.shifted(-sigma);
    let lu = sparse_factor(&shifted)?;

    let mut v0 = start_vector(n);
    let mut last_residuals = Vec::new();
    for _restart in 0..=opts.max_restarts {
        let mut basis: Vec<Vec<Complex64>> = vec![v0.clone()];
        let mut h = vec![vec![Complex64::new(0.0, 0.0); m]; m + 1];
        let mut size = m;
        for j in 0..m {
            let mut w = lu.solve(&basis[j]);
            // Two passes of classical Gram–Schmidt.
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dot(q, &w);
                    h[i][j] += c;
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= c * qi;
                    }
                }
            }
            let beta = norm(&w);
            h[j + 1][j] = Complex64::new(beta, 0.0);
            if beta < 1e-14 * h[j][j].norm().max(1.0) || j + 1 == m {
                size = j + 1;
                if j + 1 < m {
                    break;
                }
            }
            if j + 1 < m {
                basis.push(w.into_iter().map(|z| z / beta).collect());
            }
        }

        let hm: Vec<Vec<Complex64>> = (0..size).map(|i| h[i][..size].to_vec()).collect();
        let (nus, ys) = dense_eigen(&hm)?;
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&p, &q| nus[q].norm().total_cmp(&nus[p].norm()));
        let take = k.min(size);
        let mut pairs = Vec::with_capacity(take);
        for &idx in &order[..take] {
            let nu = nus[idx];
            if nu.norm() == 0.0 {
                continue;
            }
            let lambda = sigma + nu.inv();
            let y = &ys[idx];
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            for (q, &c) in basis.iter().zip(y.iter()) {
                for (xi, qi) in x.iter_mut().zip(q) {
                    *xi += c * qi;
                }
            }
            let s = norm(&x);
            x.iter_mut().for_each(|z| *z /= s);
            let ax = a.matvec(&x);
            let r: Vec<Complex64> = ax.iter().zip(&x).map(|(p, q)| p - lambda * q).collect();
            pairs.push(EigenPair {
                value: lambda,
                vector: x,
                residual: norm(&r),
            });
        }
        last_residuals = pairs.iter().map(|p| p.residual).collect();
        if pairs.len() == k && pairs.iter().all(|p| p.residual < opts.tol) {
            pairs.sort_by(|p, q| (p.value - sigma).norm().total_cmp(&(q.value - sigma).norm()));
            return Ok(pairs);
        }
        // Restart from the sum of the wanted Ritz vectors.
        let mut next = vec![Complex64::new(0.0, 0.0); n];
        for p in &pairs {
            for (a, b) in next.iter_mut().zip(&p.vector) {
                *a += b;
            }
        }
        let s = norm(&next);
        if !(s > 0.0 && s.is_finite()) {
            break;
        }
        v0 = next.into_iter().map(|z| z / s).collect();
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        residuals: last_residuals,
    })
}
