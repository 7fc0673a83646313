//! Energy sweeps at fixed twist and twist sweeps that follow resonances.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};
use std::io::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{build_grid, HamiltonianForm};
use crate::error::{Error, Result};
use crate::model::{level_table, LevelTable, WaveguideSpec};
use crate::resonance::{detect_candidates_in, fit_lineshape, DetectOptions, EnergyWindow, Resonance, ResonanceKind};
use crate::scattering::{Lead, ScatteringOptions, ScatteringProblem, TransverseRepresentation};

/// Energies closer than this to a threshold are moved above it (meV).
pub const THRESHOLD_GUARD: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub energy: f64,
    /// T_{m,n} for m = 1..=columns; zero where m is closed.
    pub transmission: Vec<f64>,
    /// Unwrapped arg t_{m,n} (rad); NaN where m is closed.
    pub phase: Vec<f64>,
    pub reflection_sum: f64,
    pub defect: f64,
    /// Unitarity defect above tolerance.
    pub flagged: bool,
}

impl SpectrumRow {
    pub fn t(&self, m: usize) -> f64 {
        m.checked_sub(1)
            .and_then(|i| self.transmission.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn theta(&self, m: usize) -> f64 {
        m.checked_sub(1)
            .and_then(|i| self.phase.get(i))
            .copied()
            .unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TransmissionSpectrum {
    pub spec: WaveguideSpec,
    /// Incoming channel n.
    pub channel: usize,
    /// Outgoing channels tabulated per row.
    pub columns: usize,
    pub rows: Vec<SpectrumRow>,
    pub defect_tolerance: f64,
    /// Refinement stopped at the point cap.
    pub truncated: bool,
}

impl TransmissionSpectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.energy).collect()
    }

    pub fn flagged_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }

    pub fn max_defect(&self) -> f64 {
        self.rows.iter().map(|r| r.defect).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOptions {
    pub base_points: usize,
    pub adaptive: bool,
    /// Bisection triggers.
    pub max_dt: f64,
    pub max_dtheta: f64,
    /// Smallest interval produced by bisection (meV).
    pub min_step: f64,
    /// Cap on the total number of rows.
    pub max_points: usize,
    pub defect_tolerance: f64,
    /// Extra uniform samples around expected features: (center, half-width).
    pub hints: Vec<(f64, f64)>,
    pub hint_points: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            base_points: 200,
            adaptive: true,
            max_dt: 0.05,
            max_dtheta: 0.3,
            min_step: 1e-5,
            max_points: 4000,
            defect_tolerance: 1e-4,
            hints: Vec::new(),
            hint_points: 0,
        }
    }
}

fn wrap(d: f64) -> f64 {
    (d + PI).rem_euclid(2.0 * PI) - PI
}

/// Nearest-branch unwrapping of every phase column in place.
pub fn unwrap_phases(rows: &mut [SpectrumRow]) {
    let cols = rows.first().map(|r| r.phase.len()).unwrap_or(0);
    for c in 0..cols {
        let mut prev: Option<(f64, f64)> = None; // (raw, unwrapped)
        for row in rows.iter_mut() {
            let raw = row.phase[c];
            if !raw.is_finite() {
                prev = None;
                continue;
            }
            let value = match prev {
                Some((_, last)) => last + wrap(raw - last),
                None => raw,
            };
            row.phase[c] = value;
            prev = Some((raw, value));
        }
    }
}

/// Lifts `e` above any threshold it sits on.
fn guard_energy(e: f64, thresholds: &[f64]) -> f64 {
    let mut e = e;
    for &t in thresholds {
        if (e - t).abs() < THRESHOLD_GUARD {
            e = t + THRESHOLD_GUARD;
        }
    }
    e
}

fn evaluate(
    problem: &ScatteringProblem,
    channel: usize,
    columns: usize,
    e: f64,
    tolerance: f64,
) -> Result<SpectrumRow> {
    let sol = match problem.solve(e, channel, Lead::Left) {
        Err(Error::Singular { .. }) | Err(Error::NumericallySingular { .. }) => {
            problem.solve(e * (1.0 + 1e-9), channel, Lead::Left)?
        }
        other => other?,
    };
    let transmission = (1..=columns).map(|m| sol.transmission(m)).collect();
    let phase = (1..=columns).map(|m| sol.phase(m)).collect();
    let defect = crate::scattering::unitarity_defect(&sol);
    Ok(SpectrumRow {
        energy: e,
        transmission,
        phase,
        reflection_sum: sol.reflection_sum(),
        defect,
        flagged: !(defect <= tolerance),
    })
}

fn needs_split(a: &SpectrumRow, b: &SpectrumRow, opts: &SweepOptions) -> bool {
    if b.energy - a.energy < 2.0 * opts.min_step {
        return false;
    }
    a.transmission
        .iter()
        .zip(&b.transmission)
        .any(|(x, y)| (x - y).abs() > opts.max_dt)
        || a
            .phase
            .iter()
            .zip(&b.phase)
            .any(|(x, y)| x.is_finite() && y.is_finite() && wrap(y - x).abs() > opts.max_dtheta)
}

/// Sweeps the transmission from incoming channel `channel` over `window`.
pub fn sweep_energy(
    problem: &ScatteringProblem,
    channel: usize,
    window: (f64, f64),
    opts: &SweepOptions,
) -> Result<TransmissionSpectrum> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::invalid("window", format!("empty energy window [{lo}, {hi}]")));
    }
    if opts.base_points < 2 {
        return Err(Error::invalid("base_points", "at least two base points are required"));
    }
    let channels = &problem.system().channels;
    let ch = channels
        .iter()
        .find(|c| c.n == channel)
        .ok_or_else(|| Error::invalid("channel", format!("channel {channel} is not represented")))?;
    if !(lo > ch.threshold) {
        return Err(Error::BelowThreshold {
            energy: lo,
            threshold: ch.threshold,
            channel,
        });
    }
    let thresholds: Vec<f64> = channels
        .iter()
        .flat_map(|c| [c.threshold, c.lattice_threshold])
        .collect();
    let columns = channels.iter().filter(|c| c.lattice_threshold < hi).count();

    let mut energies: Vec<f64> = (0..opts.base_points)
        .map(|i| lo + (hi - lo) * i as f64 / (opts.base_points - 1) as f64)
        .collect();
    for &(c, w) in &opts.hints {
        if opts.hint_points < 2 {
            break;
        }
        for i in 0..opts.hint_points {
            let e = c - w + 2.0 * w * i as f64 / (opts.hint_points - 1) as f64;
            if e > lo && e < hi {
                energies.push(e);
            }
        }
    }
    let mut energies: Vec<f64> = energies.into_iter().map(|e| guard_energy(e, &thresholds)).collect();
    energies.sort_by(f64::total_cmp);
    energies.dedup();

    let compute = |es: &[f64]| -> Result<Vec<SpectrumRow>> {
        es.par_iter()
            .map(|&e| evaluate(problem, channel, columns, e, opts.defect_tolerance))
            .collect()
    };
    let mut rows = compute(&energies)?;
    let mut truncated = false;
    if opts.adaptive {
        loop {
            let mut fresh: Vec<f64> = rows
                .windows(2)
                .filter(|w| needs_split(&w[0], &w[1], opts))
                .map(|w| guard_energy(0.5 * (w[0].energy + w[1].energy), &thresholds))
                .filter(|e| rows.binary_search_by(|r| r.energy.total_cmp(e)).is_err())
                .collect();
            fresh.dedup();
            if fresh.is_empty() {
                break;
            }
            let room = opts.max_points.saturating_sub(rows.len());
            if fresh.len() > room {
                truncated = true;
                fresh.truncate(room);
            }
            if fresh.is_empty() {
                break;
            }
            rows.extend(compute(&fresh)?);
            rows.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        }
    }
    unwrap_phases(&mut rows);
    Ok(TransmissionSpectrum {
        spec: problem.spec().clone(),
        channel,
        columns,
        rows,
        defect_tolerance: opts.defect_tolerance,
        truncated,
    })
}

/// Stable text identity of a computation, used as the cache key.
pub fn fingerprint(parts: &[&dyn std::fmt::Debug]) -> String {
    parts.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join("|")
}

/// On-disk store of finished spectra keyed by fingerprint.
#[derive(Clone, Debug)]
pub struct SpectrumCache {
    dir: PathBuf,
}

impl SpectrumCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, fp: &str) -> PathBuf {
        let mut h = DefaultHasher::new();
        fp.hash(&mut h);
        self.dir.join(format!("spectrum-{:016x}.txt", h.finish()))
    }

    pub fn store(&self, fp: &str, s: &TransmissionSpectrum) -> Result<()> {
        let path = self.path(fp);
        let tmp = path.with_extension("tmp");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        writeln!(f, "{fp}")?;
        writeln!(f, "{} {} {} {}", s.channel, s.columns, s.defect_tolerance.to_bits(), s.truncated)?;
        for r in &s.rows {
            let mut line = format!("{:x} {:x} {:x} {}", r.energy.to_bits(), r.reflection_sum.to_bits(), r.defect.to_bits(), r.flagged);
            for v in r.transmission.iter().chain(&r.phase) {
                line.push_str(&format!(" {:x}", v.to_bits()));
            }
            writeln!(f, "{line}")?;
        }
        f.flush()?;
        drop(f);
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    /// The stored spectrum for `fp`, if present and intact.
    pub fn load(&self, fp: &str, spec: &WaveguideSpec) -> Option<TransmissionSpectrum> {
        let text = std::fs::read_to_string(self.path(fp)).ok()?;
        let mut lines = text.lines();
        if lines.next()? != fp {
            return None;
        }
        let head: Vec<&str> = lines.next()?.split(' ').collect();
        let channel = head.first()?.parse().ok()?;
        let columns: usize = head.get(1)?.parse().ok()?;
        let defect_tolerance = f64::from_bits(head.get(2)?.parse().ok()?);
        let truncated = head.get(3)?.parse().ok()?;
        let bits = |s: &str| u64::from_str_radix(s, 16).ok().map(f64::from_bits);
        let mut rows = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(' ').collect();
            if f.len() != 4 + 2 * columns {
                return None;
            }
            let vals: Option<Vec<f64>> = f[4..].iter().map(|s| bits(s)).collect();
            let vals = vals?;
            rows.push(SpectrumRow {
                energy: bits(f[0])?,
                reflection_sum: bits(f[1])?,
                defect: bits(f[2])?,
                flagged: f[3].parse().ok()?,
                transmission: vals[..columns].to_vec(),
                phase: vals[columns..].to_vec(),
            });
        }
        Some(TransmissionSpectrum {
            spec: spec.clone(),
            channel,
            columns,
            rows,
            defect_tolerance,
            truncated,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub phi: f64,
    pub e_r: f64,
    pub gamma: f64,
    pub kind: ResonanceKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceTrajectory {
    /// (n, j) of the originating level, if one lies below the first sample.
    pub label: Option<(usize, usize)>,
    /// Set when the label or an association step had a comparable rival.
    pub ambiguous: bool,
    pub samples: Vec<TrajectorySample>,
    /// The track was not continued at some Φ inside the sweep.
    pub lost_at: Option<f64>,
}

impl ResonanceTrajectory {
    /// E_r nondecreasing in Φ, up to `tol` meV.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.samples.windows(2).all(|w| w[1].e_r >= w[0].e_r - tol)
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories are never empty")
    }
}

/// Association gate max(5Γ, 0.5 meV).
pub fn association_gate(gamma: f64) -> f64 {
    (5.0 * gamma).max(0.5)
}

/// Labels a resonance at `e_r` by the nearest level ε_{n,j} ≤ E_r not in
/// `taken`. Returns the label and whether a rival was comparably close.
pub fn label_level(table: &LevelTable, e_r: f64, taken: &[(usize, usize)]) -> (Option<(usize, usize)>, bool) {
    let mut below: Vec<(f64, (usize, usize))> = table
        .combined
        .iter()
        .filter(|c| c.energy <= e_r && !taken.contains(&(c.n, c.j)))
        .map(|c| (e_r - c.energy, (c.n, c.j)))
        .collect();
    below.sort_by(|a, b| a.0.total_cmp(&b.0));
    match below.as_slice() {
        [] => (None, false),
        [only] => (Some(only.1), false),
        [a, b, ..] => (Some(a.1), b.0 < 1.5 * a.0 + 0.1),
    }
}

/// Resonances found at one twist angle.
#[derive(Clone, Debug, Serialize)]
pub struct PhiRecord {
    pub phi: f64,
    pub resonances: Vec<Resonance>,
    /// Windows whose fit failed, with the reason.
    pub unfit: Vec<(EnergyWindow, String)>,
    pub rows: usize,
    pub flagged_rows: usize,
    pub max_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwistSweepResult {
    pub records: Vec<PhiRecord>,
    pub trajectories: Vec<ResonanceTrajectory>,
}

pub struct TwistSweep<'a> {
    pub spec: WaveguideSpec,
    pub phis: Vec<f64>,
    pub channel: usize,
    /// Outgoing channel whose transmission is scanned for resonances.
    pub detect_channel: usize,
    pub window: (f64, f64),
    pub resolution: f64,
    pub form: &'a dyn HamiltonianForm,
    pub representation: &'a dyn TransverseRepresentation,
    pub scattering: ScatteringOptions,
    pub sweep: SweepOptions,
    pub detect: DetectOptions,
    /// Half-width of the extra sampling placed around each open track.
    pub track_halfwidth: f64,
    pub cache: Option<SpectrumCache>,
}

impl<'a> TwistSweep<'a> {
    fn spectrum_at(&self, phi: f64, hints: Vec<(f64, f64)>) -> Result<TransmissionSpectrum> {
        let spec = self.spec.clone().with_phi(phi);
        let mut sweep = self.sweep.clone();
        sweep.hints.extend(hints);
        let fp = fingerprint(&[
            &spec,
            &self.resolution,
            &self.form.name(),
            &self.representation.name(),
            &self.scattering,
            &sweep,
            &self.channel,
            &self.window,
        ]);
        if let Some(cache) = &self.cache {
            if let Some(s) = cache.load(&fp, &spec) {
                return Ok(s);
            }
        }
        let grid = build_grid(&spec, self.resolution)?;
        let h = self.form.assemble(&grid, &spec)?;
        let problem = ScatteringProblem::new(&h, &grid, &spec, self.representation, self.scattering.clone())?;
        drop(h);
        let s = sweep_energy(&problem, self.channel, self.window, &sweep)?;
        if let Some(cache) = &self.cache {
            cache.store(&fp, &s)?;
        }
        Ok(s)
    }

    /// Runs the sweep, handing each finished Φ and its spectrum to `progress`.
    pub fn run(&self, mut progress: impl FnMut(&PhiRecord, &TransmissionSpectrum)) -> Result<TwistSweepResult> {
        if self.phis.is_empty() {
            return Err(Error::invalid("phis", "the twist list is empty"));
        }
        if self.phis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("phis", "twist angles must be strictly increasing"));
        }
        let table = level_table(&self.spec.clone().with_phi(0.0), self.window.1)?;
        let mut open: Vec<ResonanceTrajectory> = Vec::new();
        let mut done: Vec<ResonanceTrajectory> = Vec::new();
        let mut records = Vec::new();
        for &phi in &self.phis {
            let hints = open
                .iter()
                .map(|t| (t.last().e_r, self.track_halfwidth))
                .collect();
            let spectrum = self.spectrum_at(phi, hints)?;
            let mut resonances = Vec::new();
            let mut unfit = Vec::new();
            for w in detect_candidates_in(&spectrum, self.detect_channel, &self.detect) {
                match fit_lineshape(&spectrum, &w) {
                    Ok(r) if r.gamma > 0.0 && r.e_r > self.window.0 && r.e_r < self.window.1 => resonances.push(r),
                    Ok(r) => unfit.push((w, format!("fit left the window: E_r {:.6}, Γ {:.3e}", r.e_r, r.gamma))),
                    Err(e) => unfit.push((w, e.to_string())),
                }
            }
            // Greedy nearest-E_r association.
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (ti, t) in open.iter().enumerate() {
                let last = t.last();
                for (ri, r) in resonances.iter().enumerate() {
                    let d = (r.e_r - last.e_r).abs();
                    if d < association_gate(last.gamma) {
                        pairs.push((d, ti, ri));
                    }
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut t_used = vec![false; open.len()];
            let mut r_used = vec![false; resonances.len()];
            for &(d, ti, ri) in &pairs {
                if t_used[ti] || r_used[ri] {
                    continue;
                }
                let rival = pairs
                    .iter()
                    .any(|&(d2, t2, r2)| t2 == ti && r2 != ri && !r_used[r2] && d2 < 1.5 * d + 1e-9);
                t_used[ti] = true;
                r_used[ri] = true;
                let r = &resonances[ri];
                open[ti].ambiguous |= rival;
                open[ti].samples.push(TrajectorySample {
                    phi,
                    e_r: r.e_r,
                    gamma: r.gamma,
                    kind: r.kind,
                });
            }
            let mut still = Vec::new();
            for (ti, mut t) in open.into_iter().enumerate() {
                if t_used[ti] {
                    still.push(t);
                } else {
                    t.lost_at = Some(phi);
                    done.push(t);
                }
            }
            open = still;
            for (ri, r) in resonances.iter().enumerate() {
                if r_used[ri] {
                    continue;
                }
                let taken: Vec<(usize, usize)> = open.iter().chain(&done).filter_map(|t| t.label).collect();
                let (label, ambiguous) = label_level(&table, r.e_r, &taken);
                open.push(ResonanceTrajectory {
                    label,
                    ambiguous,
                    samples: vec![TrajectorySample {
                        phi,
                        e_r: r.e_r,
                        gamma: r.gamma,
                        kind: r.kind,
                    }],
                    lost_at: None,
                });
            }
            let record = PhiRecord {
                phi,
                resonances,
                unfit,
                rows: spectrum.rows.len(),
                flagged_rows: spectrum.flagged_rows(),
                max_defect: spectrum.max_defect(),
            };
            progress(&record, &spectrum);
            records.push(record);
        }
        done.extend(open);
        done.sort_by(|a, b| {
            a.samples[0]
                .phi
                .total_cmp(&b.samples[0].phi)
                .then(a.samples[0].e_r.total_cmp(&b.samples[0].e_r))
        });
        Ok(TwistSweepResult {
            records,
            trajectories: done,
        })
    }
}

/// Builds the problem for one configuration.
pub fn prepare_problem(
    spec: &WaveguideSpec,
    resolution: f64,
    form: &dyn HamiltonianForm,
    representation: &dyn TransverseRepresentation,
    options: ScatteringOptions,
) -> Result<ScatteringProblem> {
    let grid = build_grid(spec, resolution)?;
    let h = form.assemble(&grid, spec)?;
    ScatteringProblem::new(&h, &grid, spec, representation, options)
}
