//! Coherent electron transport through a locally twisted rectangular quantum
//! waveguide with an embedded Pöschl–Teller well.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: physical parameters, closed-form subband/bound-level energies
//!   and a one-dimensional transfer-matrix reference.
//! * [`geometry`]: twist profile, coordinate map and metric tensor.
//! * [`discretization`]: grid, sparse operators and the two interchangeable
//!   Hamiltonian assemblies (metric form and twist frame).
//! * [`linalg`]: sparse LU and shift-invert Arnoldi.
//! * [`scattering`]: lead modes and the open-boundary (QTBM) solve, with
//!   pluggable transverse representations.
//! * [`spectra`]: energy and twist sweeps with adaptive refinement.
//! * [`resonance`]: candidate detection, lineshape fits and phase classification.
//! * [`complex_scaling`]: dilated operator and complex resonance eigenvalues.
//! * [`registry`]: name-keyed lookup of the strategy families above.
//! * [`output`]: CSV emission shared by the command-line driver.

pub mod complex_scaling;
pub mod discretization;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod output;
pub mod registry;
pub mod resonance;
pub mod scattering;
pub mod spectra;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
