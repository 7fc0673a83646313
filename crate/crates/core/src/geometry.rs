//! Twist profile, the twisting coordinate map and its metric tensor.
//!
//! The cross-section at position `x` is rotated by φ(x) = (Φ/2)[erf(x/λ) + 1]
//! about the guide axis. Written as φ = ε·α(x) with ε = Φ and
//! α(x) = [erf(x/λ) + 1]/2.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::model::WaveguideSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwistProfile {
    /// Total rotation angle Φ (rad).
    pub phi: f64,
    /// Length scale λ (nm).
    pub lambda: f64,
}

impl TwistProfile {
    pub fn new(phi: f64, lambda: f64) -> Self {
        Self { phi, lambda }
    }

    pub fn from_spec(spec: &WaveguideSpec) -> Self {
        Self::new(spec.phi, spec.lambda)
    }

    /// Twist strength ε.
    #[inline]
    pub fn strength(&self) -> f64 {
        self.phi
    }

    /// Normalized profile α(x), rising from 0 to 1.
    pub fn alpha(&self, x: f64) -> f64 {
        0.5 * (libm::erf(x / self.lambda) + 1.0)
    }

    pub fn alpha_prime(&self, x: f64) -> f64 {
        let u = x / self.lambda;
        (-u * u).exp() / (self.lambda * PI.sqrt())
    }

    pub fn alpha_second(&self, x: f64) -> f64 {
        -2.0 * x / (self.lambda * self.lambda) * self.alpha_prime(x)
    }

    /// α′ continued to complex arguments.
    pub fn alpha_prime_complex(&self, w: Complex64) -> Complex64 {
        let u = w / self.lambda;
        (-u * u).exp() / (self.lambda * PI.sqrt())
    }

    pub fn alpha_second_complex(&self, w: Complex64) -> Complex64 {
        -2.0 * w / (self.lambda * self.lambda) * self.alpha_prime_complex(w)
    }
}

/// Rotation angle φ(x) in rad.
pub fn twist_angle(x: f64, profile: &TwistProfile) -> f64 {
    profile.phi * profile.alpha(x)
}

/// φ′(x) in rad/nm.
pub fn twist_rate(x: f64, profile: &TwistProfile) -> f64 {
    profile.phi * profile.alpha_prime(x)
}

/// φ″(x) in rad/nm².
pub fn twist_curvature(x: f64, profile: &TwistProfile) -> f64 {
    profile.phi * profile.alpha_second(x)
}

/// φ′ at a complex coordinate.
pub fn twist_rate_complex(w: Complex64, profile: &TwistProfile) -> Complex64 {
    profile.phi * profile.alpha_prime_complex(w)
}

/// Image of a straight-guide point under the twist map.
pub fn map_point(x: f64, y: f64, z: f64, profile: &TwistProfile) -> [f64; 3] {
    let (s, c) = twist_angle(x, profile).sin_cos();
    [x, y * c + z * s, z * c - y * s]
}

pub type Mat3 = [[f64; 3]; 3];

/// Metric of the twisted guide expressed in straight-guide coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricSample {
    /// G_ij = ∂_i r′ · ∂_j r′.
    pub g: Mat3,
    /// Inverse metric G^ij.
    pub g_inv: Mat3,
    /// √det G (identically 1: the map only rotates the section).
    pub sqrt_det: f64,
    /// First-derivative coefficients b^j = Σ_i ∂_i G^ij of the expanded
    /// kinetic operator −Σ(G^ij ∂²_ij + b^j ∂_j).
    pub drift: [f64; 3],
}

pub fn metric_at(x: f64, y: f64, z: f64, profile: &TwistProfile) -> MetricSample {
    let p = twist_rate(x, profile);
    let pp = twist_curvature(x, profile);
    let g = [
        [1.0 + p * p * (y * y + z * z), p * z, -p * y],
        [p * z, 1.0, 0.0],
        [-p * y, 0.0, 1.0],
    ];
    let g_inv = [
        [1.0, -p * z, p * y],
        [-p * z, 1.0 + p * p * z * z, -p * p * y * z],
        [p * y, -p * p * y * z, 1.0 + p * p * y * y],
    ];
    // ∂_x G^xy = −φ″z, ∂_z G^zy = −φ′²y; ∂_x G^xz = φ″y, ∂_y G^yz = −φ′²z.
    let drift = [0.0, -pp * z - p * p * y, pp * y - p * p * z];
    MetricSample {
        g,
        g_inv,
        sqrt_det: det3(&g).sqrt(),
        drift,
    }
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(phi: f64) -> TwistProfile {
        TwistProfile::new(phi, 17.5)
    }

    #[test]
    fn angle_limits() {
        let p = profile(1.5 * PI);
        assert!((twist_angle(0.0, &p) - 0.75 * PI).abs() < 1e-15);
        assert!((twist_angle(1e3, &p) - 1.5 * PI).abs() < 1e-15);
        assert!(twist_angle(-1e3, &p).abs() < 1e-15);
        let r = twist_angle(-35.0, &p) / p.phi;
        assert!((r - 0.5 * (1.0 - 0.995_322_265_018_952_7)).abs() < 1e-12);
    }

    #[test]
    fn rate_peak_and_symmetry() {
        let p = profile(1.5 * PI);
        assert!((twist_rate(0.0, &p) - 0.1519).abs() < 1e-4);
        assert_eq!(twist_rate(0.0, &profile(0.0)), 0.0);
        for x in [0.3, 5.0, 21.0, 60.0] {
            assert_eq!(twist_rate(x, &p), twist_rate(-x, &p));
        }
    }

    #[test]
    fn map_rotates_section() {
        let p = profile(0.5 * PI);
        let [x, y, z] = map_point(1e4, 1.0, 0.0, &p);
        assert_eq!(x, 1e4);
        assert!(y.abs() < 1e-12 && (z + 1.0).abs() < 1e-12);
        assert_eq!(map_point(3.0, 2.0, -1.0, &profile(0.0)), [3.0, 2.0, -1.0]);
    }

    #[test]
    fn metric_closed_form_values() {
        let p = profile(1.5 * PI);
        let m = metric_at(0.0, 5.0, 0.0, &p);
        assert!((m.g[0][0] - 1.5766).abs() < 1e-3);
        assert!((m.g[0][2] + 0.7594).abs() < 1e-3);
        assert_eq!(m.g[0][1], 0.0);
        let id = metric_at(4.0, 3.0, -2.0, &profile(0.0));
        assert_eq!(id.g, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(id.drift, [0.0; 3]);
    }

    #[test]
    fn complex_continuation_agrees_on_real_axis() {
        let p = profile(PI);
        for x in [-20.0, 0.0, 7.5] {
            let w = Complex64::new(x, 0.0);
            assert!((p.alpha_prime_complex(w).re - p.alpha_prime(x)).abs() < 1e-15);
            assert!((p.alpha_second_complex(w).re - p.alpha_second(x)).abs() < 1e-15);
        }
    }
}
