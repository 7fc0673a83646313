//! Transverse representations of the sliced Hamiltonian.
//!
//! `full-grid` keeps every interior cross-section node. `mode-space`
//! projects each slice onto the lowest discrete sine modes (a Galerkin
//! reduction BᵀHB), which is exact without twist and converges to the full
//! grid as the basis grows.

use num_complex::Complex64;

use super::leads::{sine_profile, transverse_channels, TransverseChannel};
use crate::discretization::{Grid3D, SparseOperator};
use crate::error::{Error, Result};
use crate::model::WaveguideSpec;

/// A Hamiltonian written slice by slice, with the lead channels it supports.
#[derive(Clone, Debug)]
pub struct SlicedSystem {
    pub h: SparseOperator,
    pub slices: usize,
    pub slice_dim: usize,
    pub channels: Vec<TransverseChannel>,
    /// Channel profiles in slice coordinates, aligned with `channels`.
    pub profiles: Vec<Vec<f64>>,
}

pub trait TransverseRepresentation: Send + Sync {
    fn name(&self) -> &'static str;

    /// Reduces a full-grid operator to this representation.
    fn reduce(&self, h: &SparseOperator, grid: &Grid3D, spec: &WaveguideSpec) -> Result<SlicedSystem>;
}

/// Upper bound on the lead channels tracked by the full-grid representation.
pub const FULL_GRID_CHANNELS: usize = 64;

#[derive(Clone, Copy, Debug, Default)]
pub struct FullGrid;

impl TransverseRepresentation for FullGrid {
    fn name(&self) -> &'static str {
        "full-grid"
    }

    fn reduce(&self, h: &SparseOperator, grid: &Grid3D, spec: &WaveguideSpec) -> Result<SlicedSystem> {
        check_dim(h, grid)?;
        let channels = transverse_channels(grid, spec, FULL_GRID_CHANNELS.min(grid.slice_len()));
        let profiles = channels.iter().map(|c| sine_profile(c.n_y, c.n_z, grid)).collect();
        Ok(SlicedSystem {
            h: h.clone(),
            slices: grid.slices(),
            slice_dim: grid.slice_len(),
            channels,
            profiles,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ModeSpace {
    /// Number of transverse sine modes kept per slice.
    pub modes: usize,
}

impl Default for ModeSpace {
    fn default() -> Self {
        Self { modes: 24 }
    }
}

fn check_dim(h: &SparseOperator, grid: &Grid3D) -> Result<()> {
    if h.dim() != grid.dim() {
        return Err(Error::invalid(
            "operator",
            format!("dimension {} does not match grid dimension {}", h.dim(), grid.dim()),
        ));
    }
    Ok(())
}

impl TransverseRepresentation for ModeSpace {
    fn name(&self) -> &'static str {
        "mode-space"
    }

    fn reduce(&self, h: &SparseOperator, grid: &Grid3D, spec: &WaveguideSpec) -> Result<SlicedSystem> {
        check_dim(h, grid)?;
        let m = grid.slice_len();
        if self.modes == 0 || self.modes > m {
            return Err(Error::invalid(
                "modes",
                format!("mode-space basis must hold 1..={m} modes, got {}", self.modes),
            ));
        }
        let nb = self.modes;
        let channels = transverse_channels(grid, spec, nb);
        // basis[p][a]: profile of mode a at transverse node p
        let cols: Vec<Vec<f64>> = channels.iter().map(|c| sine_profile(c.n_y, c.n_z, grid)).collect();
        let basis: Vec<Vec<f64>> = (0..m).map(|p| cols.iter().map(|c| c[p]).collect()).collect();
        let slices = grid.slices();
        let zero = Complex64::new(0.0, 0.0);
        let mut entries = Vec::with_capacity(slices * 3 * nb * nb);
        for i in 0..slices {
            // y[d][p][b] = Σ_q X_{i,i+d−1}[p][q]·B[q][b]
            let mut y = vec![vec![vec![zero; nb]; m]; 3];
            let mut present = [false; 3];
            for p in 0..m {
                for (col, v) in h.row(i * m + p) {
                    let ic = col / m;
                    let q = col % m;
                    let d = ic + 1 - i;
                    present[d] = true;
                    for (acc, &bq) in y[d][p].iter_mut().zip(&basis[q]) {
                        *acc += v * bq;
                    }
                }
            }
            for d in 0..3 {
                if !present[d] {
                    continue;
                }
                let ic = i + d - 1;
                for a in 0..nb {
                    for b in 0..nb {
                        let mut s = zero;
                        for p in 0..m {
                            s += basis[p][a] * y[d][p][b];
                        }
                        entries.push((i * nb + a, ic * nb + b, s));
                    }
                }
            }
        }
        let profiles = (0..nb)
            .map(|a| (0..nb).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        Ok(SlicedSystem {
            h: SparseOperator::from_triplets(slices * nb, entries),
            slices,
            slice_dim: nb,
            channels,
            profiles,
        })
    }
}
