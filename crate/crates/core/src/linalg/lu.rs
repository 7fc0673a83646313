use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::LuError;
use faer::Mat;
use num_complex::Complex64;

use super::norm;
use crate::discretization::SparseOperator;
use crate::error::{Error, Result};

/// Fill-reducing ordering and elimination structure of a sparsity pattern.
/// Reusable across matrices that share the pattern (e.g. one per energy).
#[derive(Clone, Debug)]
pub struct SymbolicPattern {
    inner: SymbolicLu<usize>,
    dim: usize,
    nnz: usize,
}

impl SymbolicPattern {
    pub fn analyze(a: &SparseOperator) -> Result<Self> {
        let m = a.to_faer()?;
        let inner = SymbolicLu::try_new(m.symbolic())
            .map_err(|e| Error::Linalg(format!("symbolic analysis failed: {e:?}")))?;
        Ok(Self {
            inner,
            dim: a.dim(),
            nnz: a.nnz(),
        })
    }
}

/// LU factors of a sparse complex matrix.
#[derive(Debug)]
pub struct FactorizedSystem {
    lu: Lu<usize, Complex64>,
    dim: usize,
    nnz: usize,
}

pub fn sparse_factor(a: &SparseOperator) -> Result<FactorizedSystem> {
    let pattern = SymbolicPattern::analyze(a)?;
    FactorizedSystem::with_pattern(&pattern, a)
}

fn map_lu_error(e: LuError) -> Error {
    match e {
        LuError::SymbolicSingular { index } => Error::Singular { pivot: index },
        LuError::Generic(e) => Error::Linalg(format!("{e:?}")),
    }
}

impl FactorizedSystem {
    /// Numeric factorization reusing a previous symbolic analysis. The
    /// pattern of `a` must equal the analyzed one.
    pub fn with_pattern(pattern: &SymbolicPattern, a: &SparseOperator) -> Result<Self> {
        if a.dim() != pattern.dim {
            return Err(Error::Linalg(format!(
                "dimension {} does not match analyzed pattern {}",
                a.dim(),
                pattern.dim
            )));
        }
        if let Some(p) = a.empty_row_or_col() {
            return Err(Error::Singular { pivot: p });
        }
        let m = a.to_faer()?;
        let lu = Lu::try_new_with_symbolic(pattern.inner.clone(), m.as_ref()).map_err(map_lu_error)?;
        let out = Self {
            lu,
            dim: a.dim(),
            nnz: a.nnz(),
        };
        // Exactly singular pivots surface as non-finite solutions.
        let probe = out.solve(&vec![Complex64::new(1.0, 0.0); out.dim]);
        if probe.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NumericallySingular {
                residual: f64::INFINITY,
            });
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored nonzeros of the factorized matrix.
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// Number of pattern entries shared by a previous analysis.
    pub fn pattern_nnz(pattern: &SymbolicPattern) -> usize {
        pattern.nnz
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut rhs = Mat::<Complex64>::from_fn(self.dim, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        (0..self.dim).map(|i| rhs[(i, 0)]).collect()
    }

    /// Solves several right-hand sides at once.
    pub fn solve_many(&self, rhs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let mut m = Mat::<Complex64>::from_fn(self.dim, rhs.len(), |i, j| rhs[j][i]);
        self.lu.solve_in_place(m.as_mut());
        (0..rhs.len())
            .map(|j| (0..self.dim).map(|i| m[(i, j)]).collect())
            .collect()
    }

    /// Solves and reports the relative residual ‖Ax − b‖/‖b‖.
    pub fn solve_checked(&self, a: &SparseOperator, b: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        let x = self.solve(b);
        let ax = a.matvec(&x);
        let r: Vec<Complex64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        let bn = norm(b).max(f64::MIN_POSITIVE);
        let res = norm(&r) / bn;
        if !res.is_finite() {
            return Err(Error::NumericallySingular { residual: res });
        }
        Ok((x, res))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn identity_solve() {
        let a = SparseOperator::identity(5);
        let f = sparse_factor(&a).unwrap();
        let b: Vec<_> = (0..5).map(|i| Complex64::new(i as f64, -1.0)).collect();
        assert_eq!(f.solve(&b), b);
    }

    #[test]
    fn zero_row_is_singular() {
        let a = SparseOperator::from_triplets(3, vec![(0, 0, c(1.0)), (2, 2, c(1.0)), (2, 1, c(1.0))]);
        assert!(matches!(sparse_factor(&a), Err(Error::Singular { pivot: 1 })));
    }

    #[test]
    fn pattern_reuse() {
        let base: Vec<_> = (0..50)
            .flat_map(|i| {
                let mut v = vec![(i, i, c(2.0))];
                if i > 0 {
                    v.push((i, i - 1, c(-1.0)));
                    v.push((i - 1, i, c(-1.0)));
                }
                v
            })
            .collect();
        let a = SparseOperator::from_triplets(50, base);
        let pat = SymbolicPattern::analyze(&a).unwrap();
        let b = vec![c(1.0); 50];
        for shift in [0.1, 0.7, -0.05] {
            let a2 = a.shifted(Complex64::new(shift, 0.3));
            let f = FactorizedSystem::with_pattern(&pat, &a2).unwrap();
            let (_, res) = f.solve_checked(&a2, &b).unwrap();
            assert!(res < 1e-12);
        }
        assert_eq!(FactorizedSystem::pattern_nnz(&pat), a.nnz());
    }
}
