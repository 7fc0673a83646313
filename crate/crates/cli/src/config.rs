//! TOML run configuration.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use twistqw::model::{subband_energy, WaveguideSpec};

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Levels,
    Sweep,
    Trace,
    Cscale,
}

impl std::str::FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "levels" => Ok(Mode::Levels),
            "sweep" => Ok(Mode::Sweep),
            "trace" => Ok(Mode::Trace),
            "cscale" => Ok(Mode::Cscale),
            other => Err(err("mode", format!("unknown mode `{other}` (levels, sweep, trace, cscale)"))),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaveguide {
    l_y: Option<f64>,
    l_z: Option<f64>,
    mass_ratio: Option<f64>,
    nu: Option<f64>,
    l_p: Option<f64>,
    lambda: Option<f64>,
    x_half: Option<f64>,
    phi: Option<f64>,
    /// Twist in units of π.
    phi_pi: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    resolution: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    form: Option<String>,
    representation: Option<String>,
    modes: Option<usize>,
    extra_modes: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevels {
    e_max: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    channel: Option<usize>,
    detect_channel: Option<usize>,
    e_min: Option<f64>,
    e_max: Option<f64>,
    points: Option<usize>,
    adaptive: Option<bool>,
    min_step: Option<f64>,
    max_points: Option<usize>,
    hints: Option<Vec<f64>>,
    hint_halfwidth: Option<f64>,
    hint_points: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    phi: Option<Vec<f64>>,
    phi_pi: Option<Vec<f64>>,
    track_halfwidth: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCscale {
    theta_im: Option<f64>,
    theta_re: Option<f64>,
    e_min: Option<f64>,
    e_max: Option<f64>,
    seeds: Option<Vec<f64>>,
    per_seed: Option<usize>,
    shift: Option<f64>,
    stability_theta_im: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    unitarity: Option<f64>,
    fit_rms: Option<f64>,
    theta_drift: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    out: Option<PathBuf>,
    workers: Option<usize>,
    waveguide: Option<RawWaveguide>,
    grid: Option<RawGrid>,
    solver: Option<RawSolver>,
    levels: Option<RawLevels>,
    sweep: Option<RawSweep>,
    trace: Option<RawTrace>,
    cscale: Option<RawCscale>,
    tolerances: Option<RawTolerances>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    pub form: String,
    pub representation: String,
    pub modes: usize,
    pub extra_modes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepConfig {
    pub channel: usize,
    pub detect_channel: usize,
    pub e_min: f64,
    pub e_max: f64,
    pub points: usize,
    pub adaptive: bool,
    pub min_step: f64,
    pub max_points: usize,
    pub hints: Vec<f64>,
    pub hint_halfwidth: f64,
    pub hint_points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceConfig {
    pub phis: Vec<f64>,
    pub track_halfwidth: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CscaleConfig {
    pub theta_re: f64,
    pub theta_im: f64,
    pub e_min: f64,
    pub e_max: f64,
    /// Empty means: the untwisted levels inside the window.
    pub seeds: Vec<f64>,
    pub per_seed: usize,
    pub shift: f64,
    pub stability_theta_im: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tolerances {
    pub unitarity: f64,
    pub fit_rms: f64,
    pub theta_drift: f64,
}

/// A fully validated run description.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub spec: WaveguideSpec,
    pub resolution: f64,
    pub solver: SolverConfig,
    pub levels_e_max: f64,
    pub sweep: SweepConfig,
    pub trace: TraceConfig,
    pub cscale: CscaleConfig,
    pub tolerances: Tolerances,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

fn positive(path: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(err(path, format!("must be a positive finite number, got {v}")))
    }
}

/// Parses and validates a configuration document. `mode_override` wins
/// over the document's `mode`.
pub fn parse_config(text: &str, mode_override: Option<Mode>) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        err(if path.is_empty() || path == "." { "config" } else { &path }, inner.message().trim().to_string())
    })?;
    resolve(raw, mode_override)
}

fn resolve(raw: RawConfig, mode_override: Option<Mode>) -> Result<RunConfig, ConfigError> {
    let mode = mode_override
        .or(raw.mode)
        .ok_or_else(|| err("mode", "missing (levels, sweep, trace or cscale)"))?;

    let w = raw.waveguide.unwrap_or_default();
    let mut spec = WaveguideSpec::default();
    if let Some(v) = w.l_y {
        spec.l_y = positive("waveguide.l_y", v)?;
    }
    if let Some(v) = w.l_z {
        spec.l_z = positive("waveguide.l_z", v)?;
    }
    if let Some(v) = w.mass_ratio {
        spec.mass_ratio = positive("waveguide.mass_ratio", v)?;
    }
    if let Some(v) = w.nu {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(err("waveguide.nu", format!("must be ≥ 0, got {v}")));
        }
        spec.nu = v;
    }
    if let Some(v) = w.l_p {
        spec.l_p = positive("waveguide.l_p", v)?;
    }
    if let Some(v) = w.lambda {
        spec.lambda = positive("waveguide.lambda", v)?;
    }
    match (w.phi, w.phi_pi) {
        (Some(_), Some(_)) => return Err(err("waveguide.phi", "give either phi or phi_pi, not both")),
        (Some(v), None) => spec.phi = v,
        (None, Some(v)) => spec.phi = v * PI,
        (None, None) => {}
    }
    if !spec.phi.is_finite() {
        return Err(err("waveguide.phi", "must be finite"));
    }
    spec.x_half = match w.x_half {
        Some(v) => positive("waveguide.x_half", v)?,
        None => spec.x_half.max(spec.min_x_half()),
    };
    spec.validate().map_err(|e| match e {
        twistqw::Error::InvalidParameter { name, reason } => err(&format!("waveguide.{name}"), reason),
        other => err("waveguide", other.to_string()),
    })?;

    let resolution = positive("grid.resolution", raw.grid.and_then(|g| g.resolution).unwrap_or(1.0))?;

    let s = raw.solver.unwrap_or_default();
    let solver = SolverConfig {
        form: s.form.unwrap_or_else(|| "twist-frame".into()),
        representation: s.representation.unwrap_or_else(|| "full-grid".into()),
        modes: s.modes.unwrap_or(24),
        extra_modes: s.extra_modes.unwrap_or(8),
    };
    if !twistqw::registry::hamiltonian_forms().names().contains(&solver.form.as_str()) {
        return Err(err(
            "solver.form",
            format!("unknown form `{}` (metric, twist-frame)", solver.form),
        ));
    }
    if !twistqw::registry::representations(1)
        .names()
        .contains(&solver.representation.as_str())
    {
        return Err(err(
            "solver.representation",
            format!("unknown representation `{}` (full-grid, mode-space)", solver.representation),
        ));
    }
    if solver.modes == 0 {
        return Err(err("solver.modes", "must be ≥ 1"));
    }

    let e1 = subband_energy(1, 1, &spec).map_err(|e| err("waveguide", e.to_string()))?;
    let e2 = subband_energy(2, 1, &spec)
        .map_err(|e| err("waveguide", e.to_string()))?
        .min(subband_energy(1, 2, &spec).map_err(|e| err("waveguide", e.to_string()))?);
    let e3 = twistqw::model::enumerate_channels(&spec, 4.0 * e2)
        .get(2)
        .map(|t| t.energy)
        .unwrap_or(2.0 * e2);

    let levels_e_max = raw.levels.and_then(|l| l.e_max).unwrap_or(e3);
    if !(levels_e_max > e1) {
        return Err(err("levels.e_max", format!("must exceed E_1 = {e1:.3} meV")));
    }

    let sw = raw.sweep.unwrap_or_default();
    let channel = sw.channel.unwrap_or(1);
    if channel == 0 {
        return Err(err("sweep.channel", "channels are numbered from 1"));
    }
    let sweep = SweepConfig {
        channel,
        detect_channel: sw.detect_channel.unwrap_or(channel),
        e_min: sw.e_min.unwrap_or(e1 + 0.01),
        e_max: sw.e_max.unwrap_or(e2 - 0.01),
        points: sw.points.unwrap_or(200),
        adaptive: sw.adaptive.unwrap_or(true),
        min_step: positive("sweep.min_step", sw.min_step.unwrap_or(1e-5))?,
        max_points: sw.max_points.unwrap_or(4000),
        hints: sw.hints.unwrap_or_default(),
        hint_halfwidth: positive("sweep.hint_halfwidth", sw.hint_halfwidth.unwrap_or(0.5))?,
        hint_points: sw.hint_points.unwrap_or(0),
    };
    if sweep.detect_channel == 0 {
        return Err(err("sweep.detect_channel", "channels are numbered from 1"));
    }
    if !(sweep.e_max > sweep.e_min) {
        return Err(err(
            "sweep.e_max",
            format!("window [{}, {}] is empty", sweep.e_min, sweep.e_max),
        ));
    }
    if sweep.points < 2 {
        return Err(err("sweep.points", "at least two points are required"));
    }
    if sweep.max_points < sweep.points {
        return Err(err("sweep.max_points", "must be at least sweep.points"));
    }

    let tr = raw.trace.unwrap_or_default();
    let phis = match (tr.phi, tr.phi_pi) {
        (Some(_), Some(_)) => return Err(err("trace.phi", "give either phi or phi_pi, not both")),
        (Some(v), None) => v,
        (None, Some(v)) => v.into_iter().map(|x| x * PI).collect(),
        (None, None) => Vec::new(),
    };
    if mode == Mode::Trace && phis.is_empty() {
        return Err(err("trace.phi", "the twist list is empty"));
    }
    if phis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(err("trace.phi", "twist angles must be strictly increasing"));
    }
    let trace = TraceConfig {
        phis,
        track_halfwidth: positive("trace.track_halfwidth", tr.track_halfwidth.unwrap_or(0.5))?,
    };

    let cs = raw.cscale.unwrap_or_default();
    let cscale = CscaleConfig {
        theta_re: cs.theta_re.unwrap_or(0.0),
        theta_im: cs.theta_im.unwrap_or(0.3),
        e_min: cs.e_min.unwrap_or(e1 - 0.5 * (e2 - e1)),
        e_max: cs.e_max.unwrap_or(e2),
        seeds: cs.seeds.unwrap_or_default(),
        per_seed: cs.per_seed.unwrap_or(4),
        shift: positive("cscale.shift", cs.shift.unwrap_or(twistqw::complex_scaling::DEFAULT_SHIFT))?,
        stability_theta_im: cs.stability_theta_im.unwrap_or_default(),
    };
    twistqw::complex_scaling::ScaledOperatorSpec::new(twistqw::Complex64::new(cscale.theta_re, cscale.theta_im))
        .map_err(|e| err("cscale.theta_im", e.to_string()))?;
    for &t in &cscale.stability_theta_im {
        twistqw::complex_scaling::ScaledOperatorSpec::new(twistqw::Complex64::new(cscale.theta_re, t))
            .map_err(|e| err("cscale.stability_theta_im", e.to_string()))?;
    }
    if !(cscale.e_max > cscale.e_min) {
        return Err(err("cscale.e_max", "search window is empty"));
    }
    if cscale.per_seed == 0 {
        return Err(err("cscale.per_seed", "must be ≥ 1"));
    }

    let t = raw.tolerances.unwrap_or_default();
    let tolerances = Tolerances {
        unitarity: positive("tolerances.unitarity", t.unitarity.unwrap_or(1e-4))?,
        fit_rms: positive("tolerances.fit_rms", t.fit_rms.unwrap_or(0.02))?,
        theta_drift: positive("tolerances.theta_drift", t.theta_drift.unwrap_or(0.05))?,
    };

    if raw.workers == Some(0) {
        return Err(err("workers", "must be ≥ 1"));
    }
    Ok(RunConfig {
        mode,
        spec,
        resolution,
        solver,
        levels_e_max,
        sweep,
        trace,
        cscale,
        tolerances,
        out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
        workers: raw.workers,
    })
}
