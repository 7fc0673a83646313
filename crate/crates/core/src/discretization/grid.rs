use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WaveguideSpec;

/// Minimum number of intervals across each transverse direction.
pub const MIN_TRANSVERSE_INTERVALS: usize = 10;

/// Uniform grid over [−x_half, x_half] × [−L_y/2, L_y/2] × [−L_z/2, L_z/2].
///
/// Unknowns live on every x-slice `i = 0..=nx` (the two end slices are the
/// lead planes) and on the interior transverse nodes `j = 1..ny`,
/// `k = 1..nz`; wall nodes carry ψ = 0 and are not stored.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub x_half: f64,
    pub l_y: f64,
    pub l_z: f64,
}

fn intervals(length: f64, target: f64) -> usize {
    // Tolerate round-off so that e.g. 20/0.5 gives 40, not 41.
    ((length / target) - 1e-9).ceil().max(1.0) as usize
}

pub fn build_grid(spec: &WaveguideSpec, resolution: f64) -> Result<Grid3D> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::invalid("resolution", format!("must be > 0, got {resolution}")));
    }
    build_grid_with_spacing(spec, resolution, resolution, resolution)
}

/// Grid with separate spacing targets per axis.
pub fn build_grid_with_spacing(
    spec: &WaveguideSpec,
    hx: f64,
    hy: f64,
    hz: f64,
) -> Result<Grid3D> {
    for (name, h) in [("hx", hx), ("hy", hy), ("hz", hz)] {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(name, format!("must be > 0, got {h}")));
        }
    }
    let nx = intervals(2.0 * spec.x_half, hx);
    let ny = intervals(spec.l_y, hy);
    let nz = intervals(spec.l_z, hz);
    if ny < MIN_TRANSVERSE_INTERVALS || nz < MIN_TRANSVERSE_INTERVALS {
        return Err(Error::GridTooCoarse(format!(
            "{ny}×{nz} transverse intervals; at least {MIN_TRANSVERSE_INTERVALS} needed per direction"
        )));
    }
    if nx % 2 != 0 {
        return Err(Error::GridTooCoarse(format!(
            "x spacing {hx} gives an odd interval count {nx}; the origin must be a node"
        )));
    }
    Ok(Grid3D {
        nx,
        ny,
        nz,
        dx: 2.0 * spec.x_half / nx as f64,
        dy: spec.l_y / ny as f64,
        dz: spec.l_z / nz as f64,
        x_half: spec.x_half,
        l_y: spec.l_y,
        l_z: spec.l_z,
    })
}

impl Grid3D {
    /// Number of x-slices carrying unknowns (lead planes included).
    #[inline]
    pub fn slices(&self) -> usize {
        self.nx + 1
    }

    #[inline]
    pub fn interior_y(&self) -> usize {
        self.ny - 1
    }

    #[inline]
    pub fn interior_z(&self) -> usize {
        self.nz - 1
    }

    /// Unknowns per slice.
    #[inline]
    pub fn slice_len(&self) -> usize {
        self.interior_y() * self.interior_z()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.slices() * self.slice_len()
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.x_half + i as f64 * self.dx
    }

    /// y of node `j` (0 and `ny` are the walls).
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        -0.5 * self.l_y + j as f64 * self.dy
    }

    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        -0.5 * self.l_z + k as f64 * self.dz
    }

    /// Position of transverse node (j, k) inside a slice.
    #[inline]
    pub fn transverse_index(&self, j: usize, k: usize) -> usize {
        debug_assert!((1..self.ny).contains(&j) && (1..self.nz).contains(&k));
        (j - 1) * self.interior_z() + (k - 1)
    }

    /// Flat index of node (i, j, k), or `None` for walls and nodes beyond the
    /// lead planes. Signed arguments make neighbour arithmetic convenient.
    #[inline]
    pub fn index(&self, i: isize, j: isize, k: isize) -> Option<usize> {
        if i < 0 || i > self.nx as isize {
            return None;
        }
        if j < 1 || j >= self.ny as isize || k < 1 || k >= self.nz as isize {
            return None;
        }
        Some(i as usize * self.slice_len() + self.transverse_index(j as usize, k as usize))
    }

    /// Inverse of [`Grid3D::index`].
    pub fn node(&self, flat: usize) -> (usize, usize, usize) {
        let m = self.slice_len();
        let i = flat / m;
        let t = flat % m;
        (i, t / self.interior_z() + 1, t % self.interior_z() + 1)
    }

    /// Interior transverse nodes in storage order.
    pub fn cross_section_nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.ny).flat_map(move |j| (1..self.nz).map(move |k| (j, k)))
    }

    /// Slice index of the node at x = 0.
    pub fn center_slice(&self) -> usize {
        self.nx / 2
    }
}
