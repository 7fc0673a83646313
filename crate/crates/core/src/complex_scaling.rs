//! Complex dilation x → e^θ x of the twisted Hamiltonian.
//!
//! Under the dilation the continua rotate onto half-lines
//! E_a + e^{−2i Im θ}·R⁺ starting at the (lattice) thresholds, while
//! resonances appear as isolated eigenvalues E_r − iΓ/2 that do not move
//! with θ. Bound states stay on the real axis.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{Grid3D, HamiltonianForm, SparseOperator, TwistFrame};
use crate::error::{Error, Result};
use crate::linalg::{shift_invert_eigs, ArnoldiOptions};
use crate::model::{LevelTable, WaveguideSpec};
use crate::scattering::TransverseRepresentation;

/// Upper bound on Im θ keeping e^θ x inside the analyticity sector of the
/// well and the twist profile.
pub const MAX_IM_THETA: f64 = 0.5;

/// Imaginary offset of the shift-invert target below each seed (meV).
pub const DEFAULT_SHIFT: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaledOperatorSpec {
    pub theta: Complex64,
}

impl ScaledOperatorSpec {
    /// Requires 0 < Im θ ≤ 0.5 and |Re θ| ≤ 1.
    pub fn new(theta: Complex64) -> Result<Self> {
        if !(theta.im > 0.0) {
            return Err(Error::invalid("theta", format!("Im θ must be > 0, got {}", theta.im)));
        }
        check_strip(theta)?;
        Ok(Self { theta })
    }
}

fn check_strip(theta: Complex64) -> Result<()> {
    if !(theta.im >= 0.0 && theta.im <= MAX_IM_THETA) {
        return Err(Error::invalid(
            "theta",
            format!("Im θ must lie in [0, {MAX_IM_THETA}], got {}", theta.im),
        ));
    }
    if !(theta.re.abs() <= 1.0) {
        return Err(Error::invalid("theta", format!("|Re θ| must be ≤ 1, got {}", theta.re)));
    }
    Ok(())
}

/// Full-grid dilated operator with Dirichlet ends. θ = 0 is allowed and
/// gives the unscaled Hamiltonian.
pub fn assemble_scaled_operator(grid: &Grid3D, spec: &WaveguideSpec, theta: Complex64) -> Result<SparseOperator> {
    check_strip(theta)?;
    TwistFrame::dilated(theta).assemble(grid, spec)
}

/// Dilated operator in the given transverse representation.
pub fn scaled_system(
    grid: &Grid3D,
    spec: &WaveguideSpec,
    theta: Complex64,
    representation: &dyn TransverseRepresentation,
) -> Result<(SparseOperator, Vec<f64>)> {
    let k = assemble_scaled_operator(grid, spec, theta)?;
    let sys = representation.reduce(&k, grid, spec)?;
    let thresholds = sys.channels.iter().map(|c| c.lattice_threshold).collect();
    Ok((sys.h, thresholds))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexResonance {
    pub value: Complex64,
    pub residual: f64,
    /// Nearest level ε_{n,j} of the untwisted table.
    pub label: Option<(usize, usize)>,
    pub theta: Complex64,
    pub seed: f64,
}

impl ComplexResonance {
    /// Γ = −2 Im λ.
    pub fn width(&self) -> f64 {
        -2.0 * self.value.im
    }
}

#[derive(Clone, Debug)]
pub struct LocateOptions {
    pub shift: f64,
    /// Eigenpairs requested per seed.
    pub per_seed: usize,
    /// Minimum angular distance from a rotated continuum branch (rad).
    pub branch_gap: f64,
    /// Eigenvalues closer than this are merged (meV).
    pub dedupe: f64,
    /// Largest accepted positive imaginary part (meV).
    pub imag_tol: f64,
    pub arnoldi: ArnoldiOptions,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            shift: DEFAULT_SHIFT,
            per_seed: 4,
            branch_gap: 0.05,
            dedupe: 1e-6,
            imag_tol: 1e-6,
            arnoldi: ArnoldiOptions::default(),
        }
    }
}

/// Data needed to filter and label eigenvalues.
#[derive(Clone, Debug)]
pub struct ScalingContext {
    pub theta: Complex64,
    /// Thresholds from which the rotated branches start.
    pub thresholds: Vec<f64>,
    pub levels: LevelTable,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocateOutcome {
    pub found: Vec<ComplexResonance>,
    /// Seeds near which no admissible eigenvalue was found.
    pub unmatched: Vec<f64>,
}

/// Whether λ lies within `gap` rad of a rotated continuum half-line.
pub fn on_continuum_branch(lambda: Complex64, thresholds: &[f64], theta: Complex64, gap: f64) -> bool {
    let angle = -2.0 * theta.im;
    thresholds.iter().any(|&e| {
        let w = lambda - e;
        if w.norm() < 1e-12 {
            return true;
        }
        let d = (w.arg() - angle + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
            - std::f64::consts::PI;
        d.abs() < gap
    })
}

/// Nearest untwisted level to Re λ.
pub fn nearest_level(levels: &LevelTable, energy: f64) -> Option<(usize, usize)> {
    levels
        .combined
        .iter()
        .min_by(|a, b| (a.energy - energy).abs().total_cmp(&(b.energy - energy).abs()))
        .map(|c| (c.n, c.j))
}

/// Isolated eigenvalues of `k_theta` near `seeds` with Re λ in `window`.
pub fn locate_resonances(
    k_theta: &SparseOperator,
    window: (f64, f64),
    seeds: &[f64],
    ctx: &ScalingContext,
    opts: &LocateOptions,
) -> Result<LocateOutcome> {
    if !(window.1 > window.0) {
        return Err(Error::invalid("window", "empty search window"));
    }
    let per_seed: Vec<Result<Vec<ComplexResonance>>> = seeds
        .par_iter()
        .map(|&seed| {
            let sigma = Complex64::new(seed, -opts.shift);
            let pairs = shift_invert_eigs(k_theta, sigma, opts.per_seed, &opts.arnoldi)?;
            Ok(pairs
                .into_iter()
                .filter(|p| {
                    p.value.re >= window.0
                        && p.value.re <= window.1
                        && p.value.im <= opts.imag_tol
                        && !on_continuum_branch(p.value, &ctx.thresholds, ctx.theta, opts.branch_gap)
                })
                .map(|p| ComplexResonance {
                    value: p.value,
                    residual: p.residual,
                    label: nearest_level(&ctx.levels, p.value.re),
                    theta: ctx.theta,
                    seed,
                })
                .collect())
        })
        .collect();
    let mut found: Vec<ComplexResonance> = Vec::new();
    let mut unmatched = Vec::new();
    for (seed, res) in seeds.iter().zip(per_seed) {
        let list = res?;
        if list.is_empty() {
            unmatched.push(*seed);
        }
        for r in list {
            if !found.iter().any(|f| (f.value - r.value).norm() < opts.dedupe) {
                found.push(r);
            }
        }
    }
    found.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    Ok(LocateOutcome { found, unmatched })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub values: Vec<(Complex64, Complex64)>,
    /// Largest pairwise |λ(θ_a) − λ(θ_b)| (meV).
    pub drift: f64,
}

/// Follows the eigenvalue nearest `seed` across `thetas`.
pub fn theta_stability(
    grid: &Grid3D,
    spec: &WaveguideSpec,
    seed: Complex64,
    thetas: &[Complex64],
    representation: &dyn TransverseRepresentation,
    opts: &LocateOptions,
) -> Result<StabilityReport> {
    if thetas.len() < 2 {
        return Err(Error::invalid("theta_list", "at least two θ values are required"));
    }
    for &t in thetas {
        ScaledOperatorSpec::new(t)?;
    }
    let mut values = Vec::with_capacity(thetas.len());
    let mut target = seed;
    for &theta in thetas {
        let (k, thresholds) = scaled_system(grid, spec, theta, representation)?;
        let sigma = Complex64::new(target.re, target.im - opts.shift);
        let pairs = shift_invert_eigs(&k, sigma, opts.per_seed, &opts.arnoldi)?;
        let pick = pairs
            .into_iter()
            .filter(|p| !on_continuum_branch(p.value, &thresholds, theta, opts.branch_gap))
            .min_by(|a, b| (a.value - target).norm().total_cmp(&(b.value - target).norm()))
            .ok_or_else(|| {
                Error::EigenvalueLost(format!("no isolated eigenvalue near {target} at θ = {theta}"))
            })?;
        target = pick.value;
        values.push((theta, pick.value));
    }
    let mut drift: f64 = 0.0;
    for a in 0..values.len() {
        for b in a + 1..values.len() {
            drift = drift.max((values[a].1 - values[b].1).norm());
        }
    }
    Ok(StabilityReport { values, drift })
}

/// Richardson extrapolation of a quantity with error ∝ h^order, from
/// spacings h_coarse and h_fine.
pub fn richardson(coarse: Complex64, fine: Complex64, h_coarse: f64, h_fine: f64, order: i32) -> Complex64 {
    let r = (h_coarse / h_fine).powi(order);
    (r * fine - coarse) / (r - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_grid, build_grid_with_spacing};
    use crate::model::level_table;
    use crate::scattering::ModeSpace;

    #[test]
    fn theta_zero_is_unscaled() {
        let spec = WaveguideSpec::default().with_nu(2.95).with_phi(1.0);
        let g = build_grid_with_spacing(&spec, 2.0, 2.0, 1.0).unwrap();
        let a = assemble_scaled_operator(&g, &spec, Complex64::new(0.0, 0.0)).unwrap();
        let b = TwistFrame::default().assemble(&g, &spec).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12 * b.max_abs());
    }

    #[test]
    fn admissibility() {
        assert!(ScaledOperatorSpec::new(Complex64::new(0.0, 0.0)).is_err());
        assert!(ScaledOperatorSpec::new(Complex64::new(0.0, 0.6)).is_err());
        assert!(ScaledOperatorSpec::new(Complex64::new(0.0, -0.1)).is_err());
        assert!(ScaledOperatorSpec::new(Complex64::new(0.0, 0.3)).is_ok());
    }

    #[test]
    fn branch_test() {
        let th = Complex64::new(0.0, 0.3);
        let on = Complex64::new(70.0, 0.0) + Complex64::from_polar(5.0, -0.6);
        assert!(on_continuum_branch(on, &[70.0], th, 0.05));
        assert!(!on_continuum_branch(Complex64::new(90.0, -0.001), &[70.0], th, 0.05));
        assert!(!on_continuum_branch(Complex64::new(60.0, 0.0), &[70.0], th, 0.05));
    }

    #[test]
    fn richardson_removes_quadratic_error() {
        let exact = Complex64::new(3.0, -1.0);
        let f = |h: f64| exact + Complex64::new(0.7, 0.2) * h * h;
        let r = richardson(f(1.0), f(0.5), 1.0, 0.5, 2);
        assert!((r - exact).norm() < 1e-14);
    }

    #[test]
    fn straight_guide_levels_stay_real() {
        let spec = WaveguideSpec::default().with_nu(2.95);
        let g = build_grid(&spec, 1.0).unwrap();
        let theta = Complex64::new(0.0, 0.3);
        let rep = ModeSpace { modes: 6 };
        let (k, thresholds) = scaled_system(&g, &spec, theta, &rep).unwrap();
        let levels = level_table(&spec, 112.0).unwrap();
        let ctx = ScalingContext { theta, thresholds, levels: levels.clone() };
        let e22 = levels.combined_level(2, 2).unwrap().energy;
        let out = locate_resonances(&k, (80.0, 100.0), &[e22], &ctx, &LocateOptions::default()).unwrap();
        let hit = out
            .found
            .iter()
            .min_by(|a, b| (a.value.re - e22).abs().total_cmp(&(b.value.re - e22).abs()))
            .expect("ε22 found");
        assert_eq!(hit.label, Some((2, 2)));
        // Off the real axis only by the O(dx²) error of the dilated stencil.
        assert!(hit.value.im.abs() < 0.1, "{:?}", hit.value);
        assert!((hit.value.re - e22).abs() < 2.0, "{:?}", hit.value);
    }
}
