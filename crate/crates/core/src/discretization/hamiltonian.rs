//! Finite-difference Hamiltonians.
//!
//! Both forms produce the same matrix up to rounding. The metric form
//! discretizes −c Σ ∂_i(G^ij ∂_j ·) with flux stencils on the diagonal terms
//! and centered cross stencils (coefficient at the outer node) on the mixed
//! terms. The twist-frame form discretizes
//! −c[Δ⊥ + ∂²_x] + V + c·U with
//! U = −2φ′∂_x∂_τ − φ″∂_τ − φ′²∂²_ττ, ∂_τ = y∂_z − z∂_y, where φ″ enters
//! through the half-node difference quotient of φ′.
//!
//! Neighbours beyond the two lead planes are dropped; the open boundary
//! terms are added by the scattering solver.

use num_complex::Complex64;

use super::grid::Grid3D;
use super::operator::SparseOperator;
use crate::error::Result;
use crate::geometry::{metric_at, TwistProfile};
use crate::model::{potential_complex, potential_value, WaveguideSpec};

pub type Entry = (usize, usize, Complex64);

/// A discretization of the twisted-guide Hamiltonian.
pub trait HamiltonianForm: Send + Sync {
    fn name(&self) -> &'static str;

    /// Pushes the stencil entries of every row belonging to x-slice `i`.
    fn slice_rows(&self, grid: &Grid3D, spec: &WaveguideSpec, i: usize, out: &mut Vec<Entry>);

    fn assemble(&self, grid: &Grid3D, spec: &WaveguideSpec) -> Result<SparseOperator> {
        spec.validate()?;
        let mut entries = Vec::with_capacity(grid.dim() * 19);
        for i in 0..grid.slices() {
            self.slice_rows(grid, spec, i, &mut entries);
        }
        Ok(SparseOperator::from_triplets(grid.dim(), entries))
    }
}

/// Lab-frame form built from the metric tensor.
#[derive(Clone, Copy, Debug, Default)]
pub struct MetricForm;

impl HamiltonianForm for MetricForm {
    fn name(&self) -> &'static str {
        "metric"
    }

    fn slice_rows(&self, grid: &Grid3D, spec: &WaveguideSpec, i: usize, out: &mut Vec<Entry>) {
        let c = spec.kinetic();
        let profile = TwistProfile::from_spec(spec);
        let h = [grid.dx, grid.dy, grid.dz];
        let pos = |p: [f64; 3]| {
            [
                grid.x(0) + p[0] * grid.dx,
                grid.y(0) + p[1] * grid.dy,
                grid.z(0) + p[2] * grid.dz,
            ]
        };
        let ginv = |p: [f64; 3], a: usize, b: usize| {
            let [x, y, z] = pos(p);
            metric_at(x, y, z, &profile).g_inv[a][b]
        };
        let v = potential_value(grid.x(i), spec);
        for (j, k) in grid.cross_section_nodes() {
            let n = [i as isize, j as isize, k as isize];
            let row = grid.index(n[0], n[1], n[2]).unwrap();
            let nf = [n[0] as f64, n[1] as f64, n[2] as f64];
            let mut diag = v;
            for a in 0..3 {
                let inv_h2 = 1.0 / (h[a] * h[a]);
                for sgn in [1.0, -1.0] {
                    let mut face = nf;
                    face[a] += 0.5 * sgn;
                    let w = c * ginv(face, a, a) * inv_h2;
                    diag += w;
                    let d = sgn as isize;
                    let mut nb = n;
                    nb[a] += d;
                    if let Some(col) = grid.index(nb[0], nb[1], nb[2]) {
                        out.push((row, col, Complex64::new(-w, 0.0)));
                    }
                }
            }
            out.push((row, row, Complex64::new(diag, 0.0)));
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let scale = -c / (4.0 * h[a] * h[b]);
                    for sa in [1isize, -1] {
                        let mut outer = nf;
                        outer[a] += sa as f64;
                        let g = ginv(outer, a, b);
                        if g == 0.0 {
                            continue;
                        }
                        for sb in [1isize, -1] {
                            let mut t = n;
                            t[a] += sa;
                            t[b] += sb;
                            if let Some(col) = grid.index(t[0], t[1], t[2]) {
                                let w = scale * (sa * sb) as f64 * g;
                                out.push((row, col, Complex64::new(w, 0.0)));
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Twist-frame form, optionally under the longitudinal dilation x → s·x.
#[derive(Clone, Copy, Debug)]
pub struct TwistFrame {
    pub dilation: Complex64,
}

impl Default for TwistFrame {
    fn default() -> Self {
        Self {
            dilation: Complex64::new(1.0, 0.0),
        }
    }
}

impl TwistFrame {
    /// Dilation s = e^θ.
    pub fn dilated(theta: Complex64) -> Self {
        Self {
            dilation: theta.exp(),
        }
    }
}

impl HamiltonianForm for TwistFrame {
    fn name(&self) -> &'static str {
        "twist-frame"
    }

    fn slice_rows(&self, grid: &Grid3D, spec: &WaveguideSpec, i: usize, out: &mut Vec<Entry>) {
        let s = self.dilation;
        let real = s == Complex64::new(1.0, 0.0);
        let c = spec.kinetic();
        let profile = TwistProfile::from_spec(spec);
        let sdx = s * grid.dx;
        let cx = c / (sdx * sdx);
        let cy = c / (grid.dy * grid.dy);
        let cz = c / (grid.dz * grid.dz);
        let rate = |ii: isize| -> Complex64 {
            let x = grid.x(0) + ii as f64 * grid.dx;
            if real {
                Complex64::new(crate::geometry::twist_rate(x, &profile), 0.0)
            } else {
                crate::geometry::twist_rate_complex(s * x, &profile)
            }
        };
        let ii = i as isize;
        let (p_prev, p, p_next) = (rate(ii - 1), rate(ii), rate(ii + 1));
        let v = if real {
            Complex64::new(potential_value(grid.x(i), spec), 0.0)
        } else {
            potential_complex(s * grid.x(i), spec)
        };
        // A_τ on slice `si` applied at transverse node (j, k), scaled by `w`.
        let push_tau = |out: &mut Vec<Entry>, row: usize, si: isize, j: isize, k: isize, w: Complex64| {
            if w == Complex64::new(0.0, 0.0) {
                return;
            }
            let y = grid.y(j as usize);
            let z = grid.z(k as usize);
            let wz = w * (y / (2.0 * grid.dz));
            let wy = w * (-z / (2.0 * grid.dy));
            for (dk, f) in [(1isize, wz), (-1, -wz)] {
                if let Some(col) = grid.index(si, j, k + dk) {
                    out.push((row, col, f));
                }
            }
            for (dj, f) in [(1isize, wy), (-1, -wy)] {
                if let Some(col) = grid.index(si, j + dj, k) {
                    out.push((row, col, f));
                }
            }
        };
        for (j, k) in grid.cross_section_nodes() {
            let (jj, kk) = (j as isize, k as isize);
            let row = grid.index(ii, jj, kk).unwrap();
            out.push((row, row, v + 2.0 * cx + 2.0 * cy + 2.0 * cz));
            for di in [1isize, -1] {
                if let Some(col) = grid.index(ii + di, jj, kk) {
                    out.push((row, col, -cx));
                }
            }
            for dj in [1isize, -1] {
                if let Some(col) = grid.index(ii, jj + dj, kk) {
                    out.push((row, col, Complex64::new(-cy, 0.0)));
                }
            }
            for dk in [1isize, -1] {
                if let Some(col) = grid.index(ii, jj, kk + dk) {
                    out.push((row, col, Complex64::new(-cz, 0.0)));
                }
            }
            if p == Complex64::new(0.0, 0.0)
                && p_prev == Complex64::new(0.0, 0.0)
                && p_next == Complex64::new(0.0, 0.0)
            {
                continue;
            }

            // −2φ′ ∂_x ∂_τ
            let w = -2.0 * c * p / (2.0 * sdx);
            push_tau(out, row, ii + 1, jj, kk, w);
            push_tau(out, row, ii - 1, jj, kk, -w);
            // −φ″ ∂_τ, averaged over the two half nodes
            let curv_next = (p_next - p) / sdx;
            let curv_prev = (p - p_prev) / sdx;
            push_tau(out, row, ii + 1, jj, kk, -0.5 * c * curv_next);
            push_tau(out, row, ii - 1, jj, kk, -0.5 * c * curv_prev);

            // −φ′² ∂²_ττ
            let w = -c * p * p;
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            let y = grid.y(j);
            let z = grid.z(k);
            // δ_y⁻(z² δ_y⁺) + δ_z⁻(y² δ_z⁺)
            let fy = z * z / (grid.dy * grid.dy);
            let fz = y * y / (grid.dz * grid.dz);
            out.push((row, row, w * (-2.0 * fy - 2.0 * fz)));
            for d in [1isize, -1] {
                if let Some(col) = grid.index(ii, jj + d, kk) {
                    out.push((row, col, w * fy));
                }
                if let Some(col) = grid.index(ii, jj, kk + d) {
                    out.push((row, col, w * fz));
                }
            }
            // −δ_y(yz δ_z) − δ_z(yz δ_y), coefficient taken at the outer node
            let q = 1.0 / (4.0 * grid.dy * grid.dz);
            for sa in [1isize, -1] {
                for sb in [1isize, -1] {
                    let Some(col) = grid.index(ii, jj + sa, kk + sb) else {
                        continue;
                    };
                    let sign = (sa * sb) as f64;
                    let y_out = grid.y(j) + sa as f64 * grid.dy;
                    let z_out = grid.z(k) + sb as f64 * grid.dz;
                    let coef = -(y_out * z) * q * sign - (y * z_out) * q * sign;
                    out.push((row, col, w * coef));
                }
            }
        }
    }
}

pub fn assemble_metric_hamiltonian(grid: &Grid3D, spec: &WaveguideSpec) -> Result<SparseOperator> {
    MetricForm.assemble(grid, spec)
}

pub fn assemble_twistframe_hamiltonian(
    grid: &Grid3D,
    spec: &WaveguideSpec,
) -> Result<SparseOperator> {
    TwistFrame::default().assemble(grid, spec)
}
