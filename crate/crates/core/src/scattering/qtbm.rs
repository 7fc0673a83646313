//! Open-boundary solve with lattice-consistent lead modes.
//!
//! In each lead ψ is expanded in transverse channels χ_a with longitudinal
//! factors z_a per slice. Eliminating the slice outside each lead plane adds
//! t·Σ_a z_a χ_a χ_aᵀ to the end blocks of E − H (t = c/dx²) and puts the
//! incoming wave t(z_n − 1/z_n)χ_n on the right-hand side.

use num_complex::Complex64;
use serde::Serialize;

use super::leads::{classify, LeadModeSet};
use super::representation::{FullGrid, SlicedSystem, TransverseRepresentation};
use crate::discretization::{Grid3D, SparseOperator};
use crate::error::{Error, Result};
use crate::linalg::{norm, FactorizedSystem, SymbolicPattern};
use crate::model::WaveguideSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Lead {
    Left,
    Right,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScatteringOptions {
    /// Evanescent channels kept beyond the open ones.
    pub extra_modes: usize,
    /// Fixed lead-mode budget overriding `extra_modes`.
    pub fixed_modes: Option<usize>,
    pub keep_wavefunction: bool,
}

impl Default for ScatteringOptions {
    fn default() -> Self {
        Self {
            extra_modes: 8,
            fixed_modes: None,
            keep_wavefunction: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelResult {
    pub n: usize,
    pub n_y: usize,
    pub n_z: usize,
    pub open: bool,
    /// Transmission amplitude referenced to x = 0 (re, im).
    pub t: [f64; 2],
    pub r: [f64; 2],
    /// Current-normalized probabilities; zero for closed channels.
    pub transmission: f64,
    pub reflection: f64,
    /// arg t (rad); NaN for closed channels.
    pub phase: f64,
}

impl ChannelResult {
    pub fn t_complex(&self) -> Complex64 {
        Complex64::new(self.t[0], self.t[1])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScatteringSolution {
    pub energy: f64,
    /// Incoming channel index n.
    pub incoming: usize,
    pub side: Lead,
    /// Every channel of the lead-mode budget, open ones first in index order.
    pub channels: Vec<ChannelResult>,
    /// Relative residual of the linear solve.
    pub solve_residual: f64,
    #[serde(skip)]
    pub wavefunction: Option<Vec<Complex64>>,
}

impl ScatteringSolution {
    pub fn channel(&self, n: usize) -> Option<&ChannelResult> {
        self.channels.iter().find(|c| c.n == n)
    }

    /// T_{m,n_in}; zero for closed or untracked channels.
    pub fn transmission(&self, m: usize) -> f64 {
        self.channel(m).map(|c| c.transmission).unwrap_or(0.0)
    }

    pub fn phase(&self, m: usize) -> f64 {
        self.channel(m).map(|c| c.phase).unwrap_or(f64::NAN)
    }

    pub fn open_channels(&self) -> impl Iterator<Item = &ChannelResult> {
        self.channels.iter().filter(|c| c.open)
    }

    pub fn transmission_sum(&self) -> f64 {
        self.open_channels().map(|c| c.transmission).sum()
    }

    pub fn reflection_sum(&self) -> f64 {
        self.open_channels().map(|c| c.reflection).sum()
    }
}

/// |1 − Σ_open (T + R)|.
pub fn unitarity_defect(sol: &ScatteringSolution) -> f64 {
    (1.0 - sol.transmission_sum() - sol.reflection_sum()).abs()
}

/// A sliced Hamiltonian prepared for repeated open-boundary solves.
pub struct ScatteringProblem {
    grid: Grid3D,
    spec: WaveguideSpec,
    system: SlicedSystem,
    /// −H on the pattern of the closed system (dense lead blocks included).
    base: SparseOperator,
    diag_pos: Vec<usize>,
    block_pos: [Vec<usize>; 2],
    pattern: SymbolicPattern,
    options: ScatteringOptions,
}

impl ScatteringProblem {
    pub fn new(
        h: &SparseOperator,
        grid: &Grid3D,
        spec: &WaveguideSpec,
        representation: &dyn TransverseRepresentation,
        options: ScatteringOptions,
    ) -> Result<Self> {
        let system = representation.reduce(h, grid, spec)?;
        Self::from_system(system, grid, spec, options)
    }

    pub fn from_system(
        system: SlicedSystem,
        grid: &Grid3D,
        spec: &WaveguideSpec,
        options: ScatteringOptions,
    ) -> Result<Self> {
        let d = system.slice_dim;
        let last = system.slices - 1;
        let mut entries: Vec<(usize, usize, Complex64)> =
            system.h.iter().map(|(r, c, v)| (r, c, -v)).collect();
        for s in [0, last] {
            for p in 0..d {
                for q in 0..d {
                    entries.push((s * d + p, s * d + q, Complex64::new(0.0, 0.0)));
                }
            }
        }
        let base = SparseOperator::from_triplets(system.h.dim(), entries);
        let diag_pos = (0..base.dim())
            .map(|r| base.position(r, r).expect("diagonal stored"))
            .collect();
        let block = |s: usize| -> Vec<usize> {
            (0..d * d)
                .map(|pq| base.position(s * d + pq / d, s * d + pq % d).expect("lead block stored"))
                .collect()
        };
        let block_pos = [block(0), block(last)];
        let pattern = SymbolicPattern::analyze(&base)?;
        Ok(Self {
            grid: grid.clone(),
            spec: spec.clone(),
            system,
            base,
            diag_pos,
            block_pos,
            pattern,
            options,
        })
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn spec(&self) -> &WaveguideSpec {
        &self.spec
    }

    pub fn system(&self) -> &SlicedSystem {
        &self.system
    }

    pub fn options(&self) -> &ScatteringOptions {
        &self.options
    }

    fn hopping(&self) -> f64 {
        self.spec.kinetic() / (self.grid.dx * self.grid.dx)
    }

    /// Lead modes inside the budget at energy `e`.
    pub fn lead_modes(&self, e: f64) -> Result<LeadModeSet> {
        let all = classify(e, &self.system.channels, &self.system.profiles, &self.grid, &self.spec);
        let open = all.open_count();
        let budget = match self.options.fixed_modes {
            Some(m) => m,
            None => open + self.options.extra_modes,
        };
        if budget < open {
            return Err(Error::TooFewModes {
                requested: budget,
                open,
            });
        }
        let mut set = all;
        set.modes.truncate(budget.min(self.system.channels.len()));
        Ok(set)
    }

    /// Factorizes E − H + Σ_leads at energy `e`.
    pub fn factor(&self, e: f64) -> Result<(LeadModeSet, SparseOperator, FactorizedSystem)> {
        let modes = self.lead_modes(e)?;
        let d = self.system.slice_dim;
        let t = self.hopping();
        let mut a = self.base.clone();
        {
            let vals = a.values_mut();
            for &p in &self.diag_pos {
                vals[p] += e;
            }
            for pos in &self.block_pos {
                for m in &modes.modes {
                    let coef = t * m.z;
                    for p in 0..d {
                        let cp = coef * m.profile[p];
                        if cp == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        for q in 0..d {
                            vals[pos[p * d + q]] += cp * m.profile[q];
                        }
                    }
                }
            }
        }
        let lu = FactorizedSystem::with_pattern(&self.pattern, &a)?;
        Ok((modes, a, lu))
    }

    pub fn solve(&self, e: f64, n_in: usize, side: Lead) -> Result<ScatteringSolution> {
        let mut v = self.solve_many(e, &[n_in], side)?;
        Ok(v.remove(0))
    }

    /// Solves for every open incoming channel at `e`.
    pub fn solve_all(&self, e: f64, side: Lead) -> Result<Vec<ScatteringSolution>> {
        let modes = self.lead_modes(e)?;
        let open: Vec<usize> = modes.modes.iter().filter(|m| m.open).map(|m| m.channel.n).collect();
        self.solve_many(e, &open, side)
    }

    /// One factorization, several incoming channels.
    pub fn solve_many(&self, e: f64, incoming: &[usize], side: Lead) -> Result<Vec<ScatteringSolution>> {
        let (modes, a, lu) = self.factor(e)?;
        let d = self.system.slice_dim;
        let last = self.system.slices - 1;
        let t = self.hopping();
        let (s_in, s_out) = match side {
            Lead::Left => (0, last),
            Lead::Right => (last, 0),
        };
        let mut rhs = Vec::with_capacity(incoming.len());
        for &n in incoming {
            let Some(mode) = modes.mode(n).filter(|m| m.open) else {
                let ch = self
                    .system
                    .channels
                    .iter()
                    .find(|c| c.n == n)
                    .ok_or_else(|| Error::invalid("n_in", format!("channel {n} is not represented")))?;
                return Err(Error::BelowThreshold {
                    energy: e,
                    threshold: ch.lattice_threshold,
                    channel: n,
                });
            };
            let mut b = vec![Complex64::new(0.0, 0.0); a.dim()];
            let amp = t * (mode.z - mode.z.inv());
            for p in 0..d {
                b[s_in * d + p] = amp * mode.profile[p];
            }
            rhs.push(b);
        }
        let sols = lu.solve_many(&rhs);
        let x_half = self.grid.x_half;
        let mut out = Vec::with_capacity(incoming.len());
        for ((&n, psi), b) in incoming.iter().zip(sols).zip(&rhs) {
            let ax = a.matvec(&psi);
            let res: Vec<Complex64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
            let solve_residual = norm(&res) / norm(b).max(f64::MIN_POSITIVE);
            if !solve_residual.is_finite() {
                return Err(Error::NumericallySingular {
                    residual: solve_residual,
                });
            }
            let inc = modes.mode(n).expect("checked above");
            let project = |slice: usize, prof: &[f64]| -> Complex64 {
                (0..d).map(|p| psi[slice * d + p] * prof[p]).sum()
            };
            let mut channels = Vec::with_capacity(modes.modes.len());
            for m in &modes.modes {
                let t_raw = project(s_out, &m.profile);
                let mut r_raw = project(s_in, &m.profile);
                if m.channel.n == n {
                    r_raw -= 1.0;
                }
                let (t_amp, r_amp, tp, rp, phase) = if m.open {
                    let reference = Complex64::from_polar(1.0, -(inc.wavenumber + m.wavenumber) * x_half);
                    let ratio = m.velocity / inc.velocity;
                    let ta = t_raw * reference;
                    let ra = r_raw * reference;
                    (ta, ra, ratio * ta.norm_sqr(), ratio * ra.norm_sqr(), ta.arg())
                } else {
                    (t_raw, r_raw, 0.0, 0.0, f64::NAN)
                };
                channels.push(ChannelResult {
                    n: m.channel.n,
                    n_y: m.channel.n_y,
                    n_z: m.channel.n_z,
                    open: m.open,
                    t: [t_amp.re, t_amp.im],
                    r: [r_amp.re, r_amp.im],
                    transmission: tp,
                    reflection: rp,
                    phase,
                });
            }
            out.push(ScatteringSolution {
                energy: e,
                incoming: n,
                side,
                channels,
                solve_residual,
                wavefunction: self.options.keep_wavefunction.then_some(psi),
            });
        }
        Ok(out)
    }
}

/// Single solve on the full grid with the default lead budget.
pub fn solve_scattering(
    h: &SparseOperator,
    grid: &Grid3D,
    spec: &WaveguideSpec,
    e: f64,
    n_in: usize,
) -> Result<ScatteringSolution> {
    let problem = ScatteringProblem::new(h, grid, spec, &FullGrid, ScatteringOptions::default())?;
    problem.solve(e, n_in, Lead::Left)
}
