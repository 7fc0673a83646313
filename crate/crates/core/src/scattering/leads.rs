use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::Grid3D;
use crate::error::{Error, Result};
use crate::model::{subband_energy, WaveguideSpec};

/// A transverse eigenmode of the discretized straight lead.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransverseChannel {
    /// Channel index (1-based, ordered by continuum threshold).
    pub n: usize,
    pub n_y: usize,
    pub n_z: usize,
    /// Continuum threshold E_n (meV).
    pub threshold: f64,
    /// Threshold of the discrete transverse Laplacian (meV).
    pub lattice_threshold: f64,
}

/// Lattice threshold c[(2/dy²)(1 − cos(n_yπ/N_y)) + (2/dz²)(1 − cos(n_zπ/N_z))].
pub fn lattice_threshold(n_y: usize, n_z: usize, grid: &Grid3D, spec: &WaveguideSpec) -> f64 {
    let c = spec.kinetic();
    let ey = 2.0 / (grid.dy * grid.dy) * (1.0 - (n_y as f64 * PI / grid.ny as f64).cos());
    let ez = 2.0 / (grid.dz * grid.dz) * (1.0 - (n_z as f64 * PI / grid.nz as f64).cos());
    c * (ey + ez)
}

/// The `count` lowest transverse channels representable on `grid`.
pub fn transverse_channels(grid: &Grid3D, spec: &WaveguideSpec, count: usize) -> Vec<TransverseChannel> {
    let mut all = Vec::new();
    for n_y in 1..grid.ny {
        for n_z in 1..grid.nz {
            let e = subband_energy(n_y as i64, n_z as i64, spec).expect("positive quantum numbers");
            all.push((e, n_y, n_z));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    all.into_iter()
        .take(count)
        .enumerate()
        .map(|(i, (e, n_y, n_z))| TransverseChannel {
            n: i + 1,
            n_y,
            n_z,
            threshold: e,
            lattice_threshold: lattice_threshold(n_y, n_z, grid, spec),
        })
        .collect()
}

/// Discretely normalized sine profile on the interior cross-section nodes.
pub fn sine_profile(n_y: usize, n_z: usize, grid: &Grid3D) -> Vec<f64> {
    let ay = (2.0 / grid.ny as f64).sqrt();
    let az = (2.0 / grid.nz as f64).sqrt();
    grid.cross_section_nodes()
        .map(|(j, k)| {
            ay * (n_y as f64 * PI * j as f64 / grid.ny as f64).sin()
                * az
                * (n_z as f64 * PI * k as f64 / grid.nz as f64).sin()
        })
        .collect()
}

/// A lead mode at fixed energy.
#[derive(Clone, Debug, Serialize)]
pub struct LeadMode {
    pub channel: TransverseChannel,
    pub open: bool,
    /// Propagation factor per slice, z = e^{ik dx}: |z| = 1 with Im z > 0 for
    /// open modes, 0 < |z| < 1 for evanescent ones.
    pub z: Complex64,
    /// Lattice wavenumber k (1/nm) for open modes, decay constant κ for
    /// closed ones.
    pub wavenumber: f64,
    /// Continuum √(2m|E − E_n|)/ħ (1/nm).
    pub continuum_wavenumber: f64,
    /// Group velocity factor sin(k dx); zero for closed modes.
    pub velocity: f64,
    /// Profile in the coordinates of the transverse representation.
    #[serde(skip)]
    pub profile: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeadModeSet {
    pub energy: f64,
    pub modes: Vec<LeadMode>,
}

impl LeadModeSet {
    pub fn open_count(&self) -> usize {
        self.modes.iter().filter(|m| m.open).count()
    }

    pub fn mode(&self, n: usize) -> Option<&LeadMode> {
        self.modes.iter().find(|m| m.channel.n == n)
    }
}

/// Longitudinal factor z solving z + 1/z = 2 − (E − E_a)/t.
pub fn propagation_factor(energy: f64, lattice_threshold: f64, hopping: f64) -> (Complex64, bool) {
    let b = 2.0 - (energy - lattice_threshold) / hopping;
    if b.abs() < 2.0 {
        let re = 0.5 * b;
        (Complex64::new(re, (1.0 - re * re).sqrt()), true)
    } else {
        // Real roots z and 1/z; keep the decaying one.
        let disc = (0.25 * b * b - 1.0).max(0.0).sqrt();
        let root = if b > 0.0 { 0.5 * b - disc } else { 0.5 * b + disc };
        (Complex64::new(root, 0.0), false)
    }
}

/// Classifies `channels` at energy `e`. `profiles` gives each channel's
/// profile in representation coordinates.
pub(crate) fn classify(
    e: f64,
    channels: &[TransverseChannel],
    profiles: &[Vec<f64>],
    grid: &Grid3D,
    spec: &WaveguideSpec,
) -> LeadModeSet {
    let t = spec.kinetic() / (grid.dx * grid.dx);
    let modes = channels
        .iter()
        .zip(profiles)
        .map(|(ch, prof)| {
            let (z, open) = propagation_factor(e, ch.lattice_threshold, t);
            let phase = z.arg();
            let wavenumber = if open { phase / grid.dx } else { -z.norm().ln() / grid.dx };
            LeadMode {
                channel: ch.clone(),
                open,
                z,
                wavenumber,
                continuum_wavenumber: ((e - ch.threshold).abs() / spec.kinetic()).sqrt(),
                velocity: if open { phase.sin() } else { 0.0 },
                profile: prof.clone(),
            }
        })
        .collect();
    LeadModeSet { energy: e, modes }
}

/// The `m` lowest lead modes of the full-grid lead at energy `e`.
pub fn lead_modes(e: f64, spec: &WaveguideSpec, grid: &Grid3D, m: usize) -> Result<LeadModeSet> {
    let channels = transverse_channels(grid, spec, m);
    let profiles: Vec<Vec<f64>> = channels
        .iter()
        .map(|c| sine_profile(c.n_y, c.n_z, grid))
        .collect();
    let set = classify(e, &channels, &profiles, grid, spec);
    let all = transverse_channels(grid, spec, grid.slice_len());
    let t = spec.kinetic() / (grid.dx * grid.dx);
    let open = all
        .iter()
        .filter(|c| propagation_factor(e, c.lattice_threshold, t).1)
        .count();
    if m < open {
        return Err(Error::TooFewModes { requested: m, open });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;

    #[test]
    fn open_channel_counts() {
        let spec = WaveguideSpec::default();
        let g = build_grid(&spec, 1.0).unwrap();
        assert_eq!(lead_modes(90.0, &spec, &g, 9).unwrap().open_count(), 1);
        assert_eq!(lead_modes(120.0, &spec, &g, 10).unwrap().open_count(), 2);
        assert!(matches!(
            lead_modes(120.0, &spec, &g, 1),
            Err(Error::TooFewModes { requested: 1, open: 2 })
        ));
    }

    #[test]
    fn threshold_counts_as_closed() {
        let spec = WaveguideSpec::default();
        let g = build_grid(&spec, 1.0).unwrap();
        let e1h = lattice_threshold(1, 1, &g, &spec);
        let set = lead_modes(e1h, &spec, &g, 4).unwrap();
        assert_eq!(set.open_count(), 0);
    }

    #[test]
    fn profiles_are_orthonormal() {
        let spec = WaveguideSpec::default();
        let g = build_grid(&spec, 1.0).unwrap();
        let ch = transverse_channels(&g, &spec, 12);
        for a in &ch {
            for b in &ch {
                let pa = sine_profile(a.n_y, a.n_z, &g);
                let pb = sine_profile(b.n_y, b.n_z, &g);
                let d: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
                let expect = if a.n == b.n { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dispersion_roots() {
        let (z, open) = propagation_factor(10.0, 0.0, 100.0);
        assert!(open && (z.norm() - 1.0).abs() < 1e-15 && z.im > 0.0);
        assert!(((z + z.inv()).re - 1.9).abs() < 1e-14);
        let (z, open) = propagation_factor(-10.0, 0.0, 100.0);
        assert!(!open && z.re > 0.0 && z.re < 1.0);
        assert!((z.re + 1.0 / z.re - 2.1).abs() < 1e-13);
    }
}
