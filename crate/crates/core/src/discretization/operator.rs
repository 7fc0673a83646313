use std::io::Write;

use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex sparse matrix in compressed-row form with sorted, unique columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

/// Accumulates (row, col, value) entries; duplicates are summed on build.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl TripletBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        Self {
            dim,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, val: impl Into<Complex64>) {
        debug_assert!(row < self.dim && col < self.dim);
        self.entries.push((row, col, val.into()));
    }

    pub fn build(self) -> SparseOperator {
        SparseOperator::from_triplets(self.dim, self.entries)
    }
}

impl SparseOperator {
    /// Builds from unordered triplets, summing duplicates. Explicit zeros are
    /// kept and the diagonal is always stored, so operators assembled from
    /// the same stencil share one pattern.
    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.extend((0..dim).map(|i| (i, i, Complex64::new(0.0, 0.0))));
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(
            dim,
            (0..dim).map(|i| (i, i, Complex64::new(1.0, 0.0))).collect(),
        )
    }

    pub fn from_dense(rows: &[Vec<Complex64>]) -> Self {
        let dim = rows.len();
        let mut t = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "dense input must be square");
            for (c, &v) in row.iter().enumerate() {
                if v != Complex64::new(0.0, 0.0) {
                    t.push((r, c, v));
                }
            }
        }
        Self::from_triplets(dim, t)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Storage slot of entry (r, c), if present in the pattern.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .binary_search(&c)
            .ok()
            .map(|p| span.start + p)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Mutable access to stored values; the pattern is fixed.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &SparseOperator) -> bool {
        self.dim == other.dim && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(p) => self.values[span.start + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `self + shift·I`.
    pub fn shifted(&self, shift: Complex64) -> Self {
        let mut out = self.clone();
        for r in 0..self.dim {
            let span = out.row_ptr[r]..out.row_ptr[r + 1];
            let p = out.col_idx[span.clone()]
                .binary_search(&r)
                .expect("diagonal is always stored");
            out.values[span.start + p] += shift;
        }
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Largest entry of |A − B|.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut worst = 0.0f64;
        for (r, c, v) in self.iter() {
            worst = worst.max((v - other.get(r, c)).norm());
        }
        for (r, c, v) in other.iter() {
            worst = worst.max((v - self.get(r, c)).norm());
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// max |A − Aᵀ|.
    pub fn symmetry_defect(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r)).norm())
            .fold(0.0, f64::max)
    }

    /// max |A − A†|.
    pub fn hermiticity_defect(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.values.iter().all(|v| v.im.abs() <= tol)
    }

    /// Real symmetric within `tol`.
    pub fn is_real_symmetric(&self, tol: f64) -> bool {
        self.is_real(tol) && self.symmetry_defect() <= tol
    }

    /// Indices of rows (or columns) with no stored nonzero.
    pub fn empty_row_or_col(&self) -> Option<usize> {
        let mut col_seen = vec![false; self.dim];
        for r in 0..self.dim {
            let mut any = false;
            for (c, v) in self.row(r) {
                if v != Complex64::new(0.0, 0.0) {
                    any = true;
                    col_seen[c] = true;
                }
            }
            if !any {
                return Some(r);
            }
        }
        col_seen.iter().position(|s| !s)
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, Complex64>> {
        let triplets: Vec<_> = self
            .iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.dim, self.dim, &triplets)
            .map_err(|e| Error::Linalg(format!("sparse conversion failed: {e:?}")))
    }

    /// Coordinate dump: one `row col re im` line per stored entry.
    pub fn write_coo<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# dim {} nnz {}", self.dim, self.nnz())?;
        for (r, c, v) in self.iter() {
            writeln!(w, "{r} {c} {:.17e} {:.17e}", v.re, v.im)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let a = SparseOperator::from_triplets(
            3,
            vec![(2, 0, c(1.0)), (0, 1, c(2.0)), (2, 0, c(3.0)), (1, 1, c(5.0))],
        );
        assert_eq!(a.get(2, 0), c(4.0));
        assert_eq!(a.get(0, 1), c(2.0));
        assert_eq!(a.get(1, 2), c(0.0));
        // three diagonals stored plus two off-diagonals
        assert_eq!(a.nnz(), 5);
        let entries: Vec<_> = a.iter().map(|(r, cc, _)| (r, cc)).collect();
        let mut sorted = entries.clone();
        sorted.sort();
        assert_eq!(entries, sorted);
    }

    #[test]
    fn symmetry_measures() {
        let a = SparseOperator::from_dense(&[
            vec![c(1.0), Complex64::new(0.0, 2.0)],
            vec![Complex64::new(0.0, -2.0), c(3.0)],
        ]);
        assert!(a.hermiticity_defect() < 1e-15);
        assert!((a.symmetry_defect() - 4.0).abs() < 1e-15);
        assert!(!a.is_real(0.0));
    }

    #[test]
    fn shift_and_matvec() {
        let a = SparseOperator::identity(4).shifted(c(1.0));
        let y = a.matvec(&[c(1.0), c(2.0), c(3.0), c(4.0)]);
        assert_eq!(y[3], c(8.0));
    }

    #[test]
    fn coo_dump_lines() {
        let a = SparseOperator::identity(2);
        let mut buf = Vec::new();
        a.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("0 0 1.0"));
    }
}
