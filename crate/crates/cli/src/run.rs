//! Run orchestration and the run manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use twistqw::complex_scaling::{
    locate_resonances, scaled_system, theta_stability, ComplexResonance, LocateOptions, ScalingContext,
};
use twistqw::discretization::{build_grid, Grid3D};
use twistqw::model::level_table;
use twistqw::output;
use twistqw::registry;
use twistqw::resonance::{detect_candidates_in, fit_lineshape, DetectOptions, Resonance};
use twistqw::scattering::ScatteringOptions;
use twistqw::spectra::{prepare_problem, sweep_energy, SpectrumCache, SweepOptions, TransmissionSpectrum, TwistSweep};
use twistqw::Complex64;

use crate::config::{ConfigError, Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(twistqw::Error),
    #[error("post-processing failure: {0}")]
    PostProcessing(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) | RunError::Io(_) => 3,
            RunError::PostProcessing(_) => 4,
        }
    }
}

fn solver(e: twistqw::Error) -> RunError {
    match e {
        twistqw::Error::Io(io) => RunError::Io(io),
        other => RunError::Solver(other),
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct UnitarityStats {
    pub rows: usize,
    pub flagged_rows: usize,
    pub max_defect: f64,
}

impl UnitarityStats {
    fn add(&mut self, s: &TransmissionSpectrum) {
        self.rows += s.rows.len();
        self.flagged_rows += s.flagged_rows();
        self.max_defect = self.max_defect.max(s.max_defect());
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub program: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub grid: Option<Grid3D>,
    pub workers: usize,
    pub detect: DetectOptions,
    pub wall_time_s: f64,
    pub unitarity: UnitarityStats,
    pub outputs: Vec<String>,
    /// Windows or eigenvalues that could not be processed.
    pub issues: Vec<String>,
    pub partial: bool,
    pub status: String,
}

pub struct RunSummary {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    manifest: Manifest,
}

impl Ctx<'_> {
    fn file(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        self.manifest.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let c = self.cfg;
        let mut m = vec![
            ("mode".to_string(), format!("{:?}", c.mode).to_lowercase()),
            ("phi_rad".to_string(), output::fmt_float(c.spec.phi)),
            ("nu".to_string(), output::fmt_float(c.spec.nu)),
            ("l_y_nm".to_string(), output::fmt_float(c.spec.l_y)),
            ("l_z_nm".to_string(), output::fmt_float(c.spec.l_z)),
            ("x_half_nm".to_string(), output::fmt_float(c.spec.x_half)),
        ];
        if c.mode != Mode::Levels {
            m.push(("resolution_nm".to_string(), output::fmt_float(c.resolution)));
            m.push(("form".to_string(), c.solver.form.clone()));
            m.push(("representation".to_string(), c.solver.representation.clone()));
        }
        m
    }
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    SweepOptions {
        base_points: cfg.sweep.points,
        adaptive: cfg.sweep.adaptive,
        min_step: cfg.sweep.min_step,
        max_points: cfg.sweep.max_points,
        defect_tolerance: cfg.tolerances.unitarity,
        hints: cfg.sweep.hints.iter().map(|&e| (e, cfg.sweep.hint_halfwidth)).collect(),
        hint_points: cfg.sweep.hint_points,
        ..Default::default()
    }
}

fn scattering_options(cfg: &RunConfig) -> ScatteringOptions {
    ScatteringOptions {
        extra_modes: cfg.solver.extra_modes,
        ..Default::default()
    }
}

/// Fits every candidate window; failures and poor fits become issues.
fn extract(spectrum: &TransmissionSpectrum, channel: usize, fit_rms: f64, issues: &mut Vec<String>) -> Vec<Resonance> {
    let mut out = Vec::new();
    for w in detect_candidates_in(spectrum, channel, &DetectOptions::default()) {
        match fit_lineshape(spectrum, &w) {
            Ok(r) if r.residual <= fit_rms => out.push(r),
            Ok(r) => issues.push(format!(
                "phi {:.6}: window [{:.6}, {:.6}] fit residual {:.3e} above tolerance",
                spectrum.spec.phi, w.lo, w.hi, r.residual
            )),
            Err(e) => issues.push(format!(
                "phi {:.6}: window [{:.6}, {:.6}] unfit: {e}",
                spectrum.spec.phi, w.lo, w.hi
            )),
        }
    }
    out
}

/// Executes `cfg`, writing outputs and `manifest.json` under `cfg.out`.
/// The manifest is written even when a stage fails.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.out)?;
    let mut ctx = Ctx {
        cfg,
        out: &cfg.out,
        manifest: Manifest {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            grid: None,
            workers: rayon::current_num_threads(),
            detect: DetectOptions::default(),
            wall_time_s: 0.0,
            unitarity: UnitarityStats::default(),
            outputs: Vec::new(),
            issues: Vec::new(),
            partial: false,
            status: "running".into(),
        },
    };
    let result = match cfg.mode {
        Mode::Levels => run_levels(&mut ctx),
        Mode::Sweep => run_sweep(&mut ctx),
        Mode::Trace => run_trace(&mut ctx),
        Mode::Cscale => run_cscale(&mut ctx),
    };
    let mut manifest = ctx.manifest;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let result = result.and_then(|()| {
        if manifest.issues.is_empty() {
            Ok(())
        } else {
            Err(RunError::PostProcessing(format!("{} issue(s), see manifest", manifest.issues.len())))
        }
    });
    manifest.status = match &result {
        Ok(()) => "ok".into(),
        Err(e) => e.to_string(),
    };
    manifest.partial = result.is_err();
    let manifest_path = cfg.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::PostProcessing(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n")?;
    result.map(|()| RunSummary {
        manifest,
        manifest_path,
    })
}

fn run_levels(ctx: &mut Ctx) -> Result<(), RunError> {
    let table = level_table(&ctx.cfg.spec, ctx.cfg.levels_e_max).map_err(solver)?;
    let mut meta = ctx.metadata();
    meta.push(("e_max_meV".into(), output::fmt_float(ctx.cfg.levels_e_max)));
    let f = ctx.file("levels.csv")?;
    output::write_levels(f, &table, &meta)?;
    Ok(())
}

fn run_sweep(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let grid = build_grid(&cfg.spec, cfg.resolution).map_err(solver)?;
    ctx.manifest.grid = Some(grid);
    let form = registry::hamiltonian_forms().get(&cfg.solver.form).map_err(solver)?;
    let rep = registry::representations(cfg.solver.modes)
        .get(&cfg.solver.representation)
        .map_err(solver)?;
    let problem =
        prepare_problem(&cfg.spec, cfg.resolution, form.as_ref(), rep.as_ref(), scattering_options(cfg)).map_err(solver)?;
    let spectrum = sweep_energy(
        &problem,
        cfg.sweep.channel,
        (cfg.sweep.e_min, cfg.sweep.e_max),
        &sweep_options(cfg),
    )
    .map_err(solver)?;
    ctx.manifest.unitarity.add(&spectrum);
    let meta = ctx.metadata();
    let f = ctx.file(&format!("spectrum_ch{}.csv", cfg.sweep.channel))?;
    output::write_spectrum(f, &spectrum, &meta)?;
    let mut issues = Vec::new();
    let res = extract(&spectrum, cfg.sweep.detect_channel, cfg.tolerances.fit_rms, &mut issues);
    ctx.manifest.issues.extend(issues);
    let f = ctx.file("resonances.csv")?;
    output::write_resonances(f, &res, &meta)?;
    Ok(())
}

fn run_trace(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let grid = build_grid(&cfg.spec, cfg.resolution).map_err(solver)?;
    ctx.manifest.grid = Some(grid);
    let form = registry::hamiltonian_forms().get(&cfg.solver.form).map_err(solver)?;
    let rep = registry::representations(cfg.solver.modes)
        .get(&cfg.solver.representation)
        .map_err(solver)?;
    let sweep = TwistSweep {
        spec: cfg.spec.clone(),
        phis: cfg.trace.phis.clone(),
        channel: cfg.sweep.channel,
        detect_channel: cfg.sweep.detect_channel,
        window: (cfg.sweep.e_min, cfg.sweep.e_max),
        resolution: cfg.resolution,
        form: form.as_ref(),
        representation: rep.as_ref(),
        scattering: scattering_options(cfg),
        sweep: sweep_options(cfg),
        detect: DetectOptions::default(),
        track_halfwidth: cfg.trace.track_halfwidth,
        cache: Some(SpectrumCache::new(cfg.out.join("cache")).map_err(solver)?),
    };
    let base_meta = ctx.metadata();
    let mut written: Vec<(String, std::io::Result<()>)> = Vec::new();
    let mut stats = UnitarityStats::default();
    let mut index = 0usize;
    let result = sweep
        .run(|_, s| {
            stats.add(s);
            let name = format!("spectrum_phi{index:03}_ch{}.csv", cfg.sweep.channel);
            let mut meta = base_meta.clone();
            meta[1].1 = output::fmt_float(s.spec.phi);
            let r = File::create(cfg.out.join(&name))
                .and_then(|f| output::write_spectrum(BufWriter::new(f), s, &meta).map(|_| ()));
            written.push((name, r));
            index += 1;
        })
        .map_err(solver);
    ctx.manifest.unitarity = stats;
    for (name, r) in written {
        r?;
        ctx.manifest.outputs.push(name);
    }
    let result = result?;
    let mut resonances = Vec::new();
    for rec in &result.records {
        resonances.extend(rec.resonances.iter().cloned());
        for (w, why) in &rec.unfit {
            ctx.manifest
                .issues
                .push(format!("phi {:.6}: window [{:.6}, {:.6}] unfit: {why}", rec.phi, w.lo, w.hi));
        }
    }
    let mut meta = base_meta;
    meta.remove(1);
    let f = ctx.file("resonances.csv")?;
    output::write_resonances(f, &resonances, &meta)?;
    let f = ctx.file("trajectories.csv")?;
    output::write_trajectories(f, &result.trajectories, &meta)?;
    Ok(())
}

fn run_cscale(ctx: &mut Ctx) -> Result<(), RunError> {
    let cfg = ctx.cfg;
    let cs = &cfg.cscale;
    let grid = build_grid(&cfg.spec, cfg.resolution).map_err(solver)?;
    ctx.manifest.grid = Some(grid.clone());
    let rep = registry::representations(cfg.solver.modes)
        .get(&cfg.solver.representation)
        .map_err(solver)?;
    let theta = Complex64::new(cs.theta_re, cs.theta_im);
    let (k, thresholds) = scaled_system(&grid, &cfg.spec, theta, rep.as_ref()).map_err(solver)?;
    let levels = level_table(&cfg.spec.clone().with_phi(0.0), cs.e_max.max(cfg.levels_e_max)).map_err(solver)?;
    let seeds: Vec<f64> = if cs.seeds.is_empty() {
        levels
            .combined
            .iter()
            .map(|c| c.energy)
            .filter(|&e| e >= cs.e_min && e <= cs.e_max)
            .collect()
    } else {
        cs.seeds.clone()
    };
    let opts = LocateOptions {
        shift: cs.shift,
        per_seed: cs.per_seed,
        ..Default::default()
    };
    let scaling = ScalingContext {
        theta,
        thresholds,
        levels,
    };
    let found = locate_resonances(&k, (cs.e_min, cs.e_max), &seeds, &scaling, &opts).map_err(solver)?;
    drop(k);
    for s in &found.unmatched {
        ctx.manifest.issues.push(format!("seed {s:.6} meV: no isolated eigenvalue"));
    }
    let mut list: Vec<ComplexResonance> = found.found;
    if !cs.stability_theta_im.is_empty() {
        let thetas: Vec<Complex64> = cs
            .stability_theta_im
            .iter()
            .map(|&t| Complex64::new(cs.theta_re, t))
            .collect();
        let mut kept = Vec::new();
        for r in list {
            match theta_stability(&grid, &cfg.spec, r.value, &thetas, rep.as_ref(), &opts) {
                Ok(rep) if rep.drift <= cfg.tolerances.theta_drift => kept.push(r),
                Ok(rep) => ctx.manifest.issues.push(format!(
                    "eigenvalue {:.6}{:+.6}i drifts {:.3e} meV across θ",
                    r.value.re, r.value.im, rep.drift
                )),
                Err(e) => ctx
                    .manifest
                    .issues
                    .push(format!("eigenvalue {:.6}{:+.6}i: {e}", r.value.re, r.value.im)),
            }
        }
        list = kept;
    }
    let meta = ctx.metadata();
    let f = ctx.file("cscale.csv")?;
    output::write_complex_eigenvalues(f, cfg.spec.phi, cfg.spec.nu, &list, &meta)?;
    Ok(())
}
