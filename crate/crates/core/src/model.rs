//! Physical parameters of the twisted waveguide and the closed-form spectrum
//! of its straight counterpart.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::kinetic_prefactor;

/// All physical and geometric parameters of one simulated waveguide.
///
/// Lengths are in nm, the twist angle in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveguideSpec {
    /// Cross-section width along y.
    pub l_y: f64,
    /// Cross-section height along z.
    pub l_z: f64,
    /// Effective mass in units of the bare electron mass.
    pub mass_ratio: f64,
    /// Pöschl–Teller strength ν.
    pub nu: f64,
    /// Length scale of the well.
    pub l_p: f64,
    /// Total twist angle Φ.
    pub phi: f64,
    /// Length scale λ of the twisted region.
    pub lambda: f64,
    /// Half-length of the computational domain.
    pub x_half: f64,
}

impl Default for WaveguideSpec {
    fn default() -> Self {
        Self {
            l_y: 20.0,
            l_z: 10.0,
            mass_ratio: 0.067,
            nu: 2.95,
            l_p: 10.0,
            phi: 0.0,
            lambda: 17.5,
            x_half: 100.0,
        }
    }
}

impl WaveguideSpec {
    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    /// ħ²/(2m) in meV·nm².
    #[inline]
    pub fn kinetic(&self) -> f64 {
        kinetic_prefactor(self.mass_ratio)
    }

    /// Minimum half-length that keeps both the twist and the well away from
    /// the domain ends.
    pub fn min_x_half(&self) -> f64 {
        2.0 * self.lambda + 3.0 * self.l_p
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be a positive number, got {v}")))
            }
        };
        positive("l_y", self.l_y)?;
        positive("l_z", self.l_z)?;
        positive("mass_ratio", self.mass_ratio)?;
        positive("l_p", self.l_p)?;
        positive("lambda", self.lambda)?;
        positive("x_half", self.x_half)?;
        if (self.l_y - self.l_z).abs() <= 1e-12 * self.l_y.max(self.l_z) {
            return Err(Error::invalid(
                "l_y",
                format!("cross-section must not be square (l_y = l_z = {})", self.l_y),
            ));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::invalid("nu", format!("must be ≥ 0, got {}", self.nu)));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return Err(Error::invalid("phi", format!("must be ≥ 0, got {}", self.phi)));
        }
        if self.x_half < self.min_x_half() {
            return Err(Error::invalid(
                "x_half",
                format!(
                    "must be at least 2·lambda + 3·l_p = {} nm, got {}",
                    self.min_x_half(),
                    self.x_half
                ),
            ));
        }
        Ok(())
    }
}

/// Transverse threshold E_n of the straight guide, in meV.
pub fn subband_energy(n_y: i64, n_z: i64, spec: &WaveguideSpec) -> Result<f64> {
    if n_y < 1 || n_z < 1 {
        return Err(Error::invalid(
            "n_y/n_z",
            format!("quantum numbers must be ≥ 1, got ({n_y}, {n_z})"),
        ));
    }
    let ky = n_y as f64 * PI / spec.l_y;
    let kz = n_z as f64 * PI / spec.l_z;
    Ok(spec.kinetic() * (ky * ky + kz * kz))
}

/// Depth scale ħ²/(2m L_p²) in meV.
#[inline]
pub fn well_energy_scale(spec: &WaveguideSpec) -> f64 {
    spec.kinetic() / (spec.l_p * spec.l_p)
}

/// Longitudinal well V(x) in meV.
pub fn potential_value(x: f64, spec: &WaveguideSpec) -> f64 {
    if spec.nu == 0.0 {
        return 0.0;
    }
    // tanh² − 1 = −sech², evaluated without cancellation.
    let s = 1.0 / (x / spec.l_p).cosh();
    -well_energy_scale(spec) * spec.nu * (spec.nu + 1.0) * s * s
}

/// V evaluated at a complex coordinate (used by the dilated operator).
pub fn potential_complex(x: Complex64, spec: &WaveguideSpec) -> Complex64 {
    if spec.nu == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let s = (x / spec.l_p).cosh().inv();
    -well_energy_scale(spec) * spec.nu * (spec.nu + 1.0) * s * s
}

/// Bound levels μ_j (meV) of the isolated well, j = 1 … ⌈ν⌉, deepest first.
pub fn bound_levels(spec: &WaveguideSpec) -> Vec<f64> {
    if spec.nu <= 0.0 {
        return Vec::new();
    }
    let count = spec.nu.ceil() as usize;
    let scale = well_energy_scale(spec);
    (1..=count)
        .map(|j| {
            let a = spec.nu + 1.0 - j as f64;
            -scale * a * a
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Threshold {
    /// Channel index (1-based, ordered by energy).
    pub n: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundLevel {
    pub j: usize,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CombinedLevel {
    pub n: usize,
    pub j: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub energy: f64,
    /// ε_{n,j} lies in the one-channel window [E_1, E_2].
    pub in_single_channel_window: bool,
}

/// Thresholds, well levels and their sums ε_{n,j} = E_n + μ_j up to a cutoff.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelTable {
    pub thresholds: Vec<Threshold>,
    pub bound: Vec<BoundLevel>,
    pub combined: Vec<CombinedLevel>,
}

impl LevelTable {
    pub fn threshold(&self, n: usize) -> Option<f64> {
        self.thresholds.iter().find(|t| t.n == n).map(|t| t.energy)
    }

    pub fn combined_level(&self, n: usize, j: usize) -> Option<&CombinedLevel> {
        self.combined.iter().find(|c| c.n == n && c.j == j)
    }

    /// Levels strictly inside (E_1, E_2).
    pub fn single_channel_levels(&self) -> impl Iterator<Item = &CombinedLevel> {
        self.combined.iter().filter(|c| c.in_single_channel_window)
    }
}

/// Transverse channels of the straight guide sorted by threshold, with every
/// channel whose threshold is ≤ `e_cut`.
pub fn enumerate_channels(spec: &WaveguideSpec, e_cut: f64) -> Vec<Threshold> {
    let mut out = Vec::new();
    let mut n_y = 1usize;
    loop {
        let base = subband_energy(n_y as i64, 1, spec).expect("positive quantum numbers");
        if base > e_cut {
            break;
        }
        let mut n_z = 1usize;
        loop {
            let e = subband_energy(n_y as i64, n_z as i64, spec).expect("positive quantum numbers");
            if e > e_cut {
                break;
            }
            out.push(Threshold { n: 0, n_y, n_z, energy: e });
            n_z += 1;
        }
        n_y += 1;
    }
    out.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.n_y.cmp(&b.n_y))
            .then(a.n_z.cmp(&b.n_z))
    });
    for (i, t) in out.iter_mut().enumerate() {
        t.n = i + 1;
    }
    out
}

pub fn level_table(spec: &WaveguideSpec, e_max: f64) -> Result<LevelTable> {
    let e1 = subband_energy(1, 1, spec)?;
    if !(e_max > e1) {
        return Err(Error::invalid(
            "e_max",
            format!("must exceed the first threshold {e1:.3} meV, got {e_max}"),
        ));
    }
    let mu = bound_levels(spec);
    let depth = mu.first().map(|m| -m).unwrap_or(0.0);
    // Channels above e_max can still carry levels below it.
    let channels = enumerate_channels(spec, e_max + depth);
    let e2 = channels.get(1).map(|t| t.energy).unwrap_or(f64::INFINITY);

    let thresholds: Vec<Threshold> = channels
        .iter()
        .filter(|t| t.energy <= e_max)
        .cloned()
        .collect();
    let bound: Vec<BoundLevel> = mu
        .iter()
        .enumerate()
        .map(|(i, &e)| BoundLevel { j: i + 1, energy: e })
        .collect();
    let mut combined = Vec::new();
    for t in &channels {
        for b in &bound {
            let e = t.energy + b.energy;
            if e <= e_max {
                combined.push(CombinedLevel {
                    n: t.n,
                    j: b.j,
                    n_y: t.n_y,
                    n_z: t.n_z,
                    energy: e,
                    in_single_channel_window: e > e1 && e < e2,
                });
            }
        }
    }
    combined.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(LevelTable {
        thresholds,
        bound,
        combined,
    })
}

/// Default slab width of the 1D reference integration (nm).
pub const REFERENCE_STEP: f64 = 0.025;

/// Transmission probability of the isolated well for a particle of kinetic
/// energy `e_kin` (meV) in a straight, untwisted guide.
///
/// The potential is sampled at slab midpoints over [−x_half, x_half] and the
/// solution is carried through each constant slab by its exact transfer
/// matrix. This path shares nothing with the 3D discretization.
pub fn reference_transmission_1d(e_kin: f64, spec: &WaveguideSpec) -> Result<f64> {
    reference_transmission_1d_with_step(e_kin, spec, REFERENCE_STEP)
}

pub fn reference_transmission_1d_with_step(
    e_kin: f64,
    spec: &WaveguideSpec,
    step: f64,
) -> Result<f64> {
    if !(e_kin > 0.0) {
        return Err(Error::invalid("e_kin", format!("must be > 0, got {e_kin}")));
    }
    if !(step > 0.0 && step <= 0.05) {
        return Err(Error::invalid("step", format!("must be in (0, 0.05] nm, got {step}")));
    }
    let c = spec.kinetic();
    let k0 = (e_kin / c).sqrt();
    let slabs = (2.0 * spec.x_half / step).ceil() as usize;
    let h = 2.0 * spec.x_half / slabs as f64;

    // Outgoing wave e^{ik0 x} with unit amplitude at the right edge, carried
    // leftwards. Real and imaginary parts evolve independently.
    let mut psi = Complex64::new(1.0, 0.0);
    let mut dpsi = Complex64::new(0.0, k0);
    for s in (0..slabs).rev() {
        let xm = -spec.x_half + (s as f64 + 0.5) * h;
        let k2 = (e_kin - potential_value(xm, spec)) / c;
        // Inverse slab propagator (backwards by h).
        let (cs, sn_over_k, k_sn) = slab_functions(k2, -h);
        let p = psi * cs + dpsi * sn_over_k;
        let d = psi * (-k_sn) + dpsi * cs;
        psi = p;
        dpsi = d;
    }
    // ψ = A e^{ik0 x} + B e^{-ik0 x} at x = −x_half.
    let x0 = -spec.x_half;
    let phase = Complex64::new(0.0, -k0 * x0).exp();
    let a = 0.5 * (psi + dpsi / Complex64::new(0.0, k0)) * phase;
    Ok(1.0 / a.norm_sqr())
}

/// (cos kh, sin(kh)/k, k sin kh) for k² of either sign.
fn slab_functions(k2: f64, h: f64) -> (f64, f64, f64) {
    if k2 > 0.0 {
        let k = k2.sqrt();
        let (s, c) = (k * h).sin_cos();
        (c, s / k, k * s)
    } else if k2 < 0.0 {
        let q = (-k2).sqrt();
        let (s, c) = ((q * h).sinh(), (q * h).cosh());
        (c, s / q, -q * s)
    } else {
        (1.0, h, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> WaveguideSpec {
        WaveguideSpec::default()
    }

    #[test]
    fn thresholds_match_quoted_values() {
        let s = reference();
        assert!((subband_energy(1, 1, &s).unwrap() - 70.155).abs() < 1e-3);
        assert!((subband_energy(2, 1, &s).unwrap() - 112.248).abs() < 1e-3);
        assert!((subband_energy(3, 1, &s).unwrap() - 182.403).abs() < 1e-3);
        assert!(subband_energy(0, 1, &s).is_err());
        assert!(subband_energy(1, -2, &s).is_err());
    }

    #[test]
    fn well_minimum_matches_quoted_depths() {
        assert!((potential_value(0.0, &reference()) + 66.262).abs() < 1e-3);
        assert!((potential_value(0.0, &reference().with_nu(3.95)) + 111.186).abs() < 1e-3);
        assert!(potential_value(500.0, &reference()).abs() < 1e-12);
    }

    #[test]
    fn bound_levels_count_and_values() {
        let s = reference();
        let mu = bound_levels(&s);
        assert_eq!(mu.len(), 3);
        let scale = well_energy_scale(&s);
        assert!((scale - 5.687).abs() < 1e-3);
        assert!((mu[0] + 49.49).abs() < 0.01);
        let mu4 = bound_levels(&s.clone().with_nu(3.95));
        assert_eq!(mu4.len(), 4);
        assert!((mu4[3] + 5.13).abs() < 0.01);
        assert!(bound_levels(&s.with_nu(0.0)).is_empty());
    }

    #[test]
    fn level_table_windows() {
        let s = reference();
        let e2 = subband_energy(2, 1, &s).unwrap();
        let t = level_table(&s, e2).unwrap();
        let inside: Vec<_> = t.single_channel_levels().map(|c| (c.n, c.j)).collect();
        assert_eq!(inside, vec![(2, 2), (2, 3)]);
        assert!((t.combined_level(2, 2).unwrap().energy - 90.62).abs() < 0.01);
        assert!((t.combined_level(2, 3).unwrap().energy - 107.12).abs() < 0.01);

        let t4 = level_table(&s.clone().with_nu(3.95), e2).unwrap();
        let inside: Vec<_> = t4.single_channel_levels().map(|c| (c.n, c.j)).collect();
        assert_eq!(inside, vec![(2, 3), (3, 1), (2, 4)]);

        let t0 = level_table(&s.clone().with_nu(0.0), e2).unwrap();
        assert!(t0.bound.is_empty() && t0.combined.is_empty());
        assert_eq!(t0.thresholds.len(), 2);

        assert!(level_table(&s, 10.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(reference().validate().is_ok());
        let mut s = reference();
        s.l_z = 20.0;
        assert!(s.validate().is_err());
        let mut s = reference();
        s.nu = -1.0;
        assert!(s.validate().is_err());
        let mut s = reference();
        s.x_half = 40.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn free_particle_is_transparent() {
        let s = reference().with_nu(0.0);
        for e in [0.5, 3.0, 40.0] {
            assert!((reference_transmission_1d(e, &s).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(reference_transmission_1d(0.0, &s).is_err());
    }

    #[test]
    fn integer_strength_is_reflectionless() {
        let s = reference().with_nu(3.0);
        for e in [0.2, 1.0, 5.0, 25.0] {
            let t = reference_transmission_1d(e, &s).unwrap();
            assert!((t - 1.0).abs() < 1e-6, "E={e}: T={t}");
        }
    }

    #[test]
    fn slab_refinement_converged() {
        let s = reference();
        let a = reference_transmission_1d_with_step(1.0, &s, 0.05).unwrap();
        let b = reference_transmission_1d_with_step(1.0, &s, 0.0125).unwrap();
        assert!((a - b).abs() < 1e-6);
    }
}
