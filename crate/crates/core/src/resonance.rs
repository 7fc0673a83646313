//! Resonance detection, lineshape fitting and phase classification.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectra::TransmissionSpectrum;
use crate::units::HBAR_MEV_PS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResonanceKind {
    Fano,
    BreitWigner,
    Shallow,
}

impl ResonanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResonanceKind::Fano => "fano",
            ResonanceKind::BreitWigner => "breit_wigner",
            ResonanceKind::Shallow => "shallow",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseJump {
    AbruptPi,
    SmoothPi,
    None,
    Indeterminate,
}

impl PhaseJump {
    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseJump::AbruptPi => "abrupt_pi",
            PhaseJump::SmoothPi => "smooth_pi",
            PhaseJump::None => "none",
            PhaseJump::Indeterminate => "indeterminate",
        }
    }
}

/// Energy window around a transmission feature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
    /// Energy of the largest deviation from the background.
    pub center: f64,
    /// Largest |T − background| inside the window.
    pub depth: f64,
    /// Outgoing channel the window was found in.
    pub channel: usize,
    /// Set when two separate features were merged into this window.
    pub overlap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resonance {
    pub e_r: f64,
    pub gamma: f64,
    pub kind: ResonanceKind,
    /// Fano asymmetry; absent for Breit–Wigner fits.
    pub q: Option<f64>,
    pub background: f64,
    /// Outgoing and incoming channel.
    pub channel: (usize, usize),
    pub phi: f64,
    pub nu: f64,
    pub phase_jump: PhaseJump,
    pub model: &'static str,
    /// Root-mean-square fit residual.
    pub residual: f64,
    /// Smallest fitted transmission inside the window.
    pub min_transmission: f64,
    pub overlap: bool,
}

impl Resonance {
    pub fn lifetime_ps(&self) -> f64 {
        HBAR_MEV_PS / self.gamma
    }
}

/// ħ/Γ in ps.
pub fn lifetime(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    Ok(HBAR_MEV_PS / gamma)
}

/// Lineshape with parameters [E_r, Γ, shape, background].
pub trait LineshapeModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn eval(&self, e: f64, p: &[f64; 4]) -> f64;

    /// Starting points for the fit.
    fn initial_guesses(&self, e: &[f64], t: &[f64]) -> Vec<[f64; 4]>;

    fn kind(&self, p: &[f64; 4]) -> ResonanceKind;

    fn asymmetry(&self, p: &[f64; 4]) -> Option<f64>;

    /// Background level far from the resonance.
    fn background(&self, p: &[f64; 4]) -> f64;
}

/// T_bg (q + e)² / ((1 + q²)(1 + e²)), e = 2(E − E_r)/Γ.
#[derive(Clone, Copy, Debug, Default)]
pub struct FanoModel;

/// B + A (Γ/2)² / ((E − E_r)² + (Γ/2)²).
#[derive(Clone, Copy, Debug, Default)]
pub struct BreitWignerModel;

pub fn fano_lineshape(e: f64, e_r: f64, gamma: f64, q: f64, t_bg: f64) -> f64 {
    let x = 2.0 * (e - e_r) / gamma;
    t_bg * (q + x) * (q + x) / ((1.0 + q * q) * (1.0 + x * x))
}

pub fn breit_wigner_lineshape(e: f64, e_r: f64, gamma: f64, amplitude: f64, base: f64) -> f64 {
    let h = 0.5 * gamma;
    base + amplitude * h * h / ((e - e_r) * (e - e_r) + h * h)
}

fn extremum_guess(e: &[f64], t: &[f64]) -> (f64, f64, f64, usize, usize) {
    let (mut imin, mut imax) = (0, 0);
    for i in 0..t.len() {
        if t[i] < t[imin] {
            imin = i;
        }
        if t[i] > t[imax] {
            imax = i;
        }
    }
    let span = e[e.len() - 1] - e[0];
    let edge = 0.5 * (t[0] + t[t.len() - 1]);
    (span, edge, t[imax], imin, imax)
}

/// Full width at half depth of the feature at index `i` relative to `level`.
fn half_width(e: &[f64], t: &[f64], i: usize, level: f64) -> f64 {
    let half = 0.5 * (t[i] + level);
    let above = t[i] > level;
    let crosses = |v: f64| if above { v < half } else { v > half };
    let mut lo = e[0];
    for j in (0..i).rev() {
        if crosses(t[j]) {
            lo = e[j];
            break;
        }
    }
    let mut hi = e[e.len() - 1];
    for j in i + 1..e.len() {
        if crosses(t[j]) {
            hi = e[j];
            break;
        }
    }
    (hi - lo).max(1e-9)
}

impl LineshapeModel for FanoModel {
    fn name(&self) -> &'static str {
        "fano"
    }

    fn eval(&self, e: f64, p: &[f64; 4]) -> f64 {
        fano_lineshape(e, p[0], p[1], p[2], p[3])
    }

    fn initial_guesses(&self, e: &[f64], t: &[f64]) -> Vec<[f64; 4]> {
        let (_, edge, tmax, imin, imax) = extremum_guess(e, t);
        let bg = tmax.max(edge).max(1e-12);
        let w_dip = half_width(e, t, imin, edge);
        let w_peak = half_width(e, t, imax, edge);
        let mut out = Vec::new();
        for q in [0.0, 0.3, -0.3, 1.0, -1.0, 3.0, -3.0] {
            for (center, w) in [(e[imin], w_dip), (e[imax], w_peak)] {
                // For a dip the zero sits at E_r − qΓ/2.
                let g = w.max(1e-9);
                out.push([center + 0.5 * q * g, g, q, bg]);
            }
        }
        out
    }

    fn kind(&self, p: &[f64; 4]) -> ResonanceKind {
        if p[2].abs() > 10.0 {
            ResonanceKind::BreitWigner
        } else {
            ResonanceKind::Fano
        }
    }

    fn asymmetry(&self, p: &[f64; 4]) -> Option<f64> {
        Some(p[2])
    }

    fn background(&self, p: &[f64; 4]) -> f64 {
        p[3]
    }
}

impl LineshapeModel for BreitWignerModel {
    fn name(&self) -> &'static str {
        "breit-wigner"
    }

    fn eval(&self, e: f64, p: &[f64; 4]) -> f64 {
        breit_wigner_lineshape(e, p[0], p[1], p[2], p[3])
    }

    fn initial_guesses(&self, e: &[f64], t: &[f64]) -> Vec<[f64; 4]> {
        let (_, edge, _, imin, imax) = extremum_guess(e, t);
        vec![
            [e[imax], half_width(e, t, imax, edge), t[imax] - edge, edge],
            [e[imin], half_width(e, t, imin, edge), t[imin] - edge, edge],
        ]
    }

    fn kind(&self, _p: &[f64; 4]) -> ResonanceKind {
        ResonanceKind::BreitWigner
    }

    fn asymmetry(&self, _p: &[f64; 4]) -> Option<f64> {
        None
    }

    fn background(&self, p: &[f64; 4]) -> f64 {
        p[3]
    }
}

/// Least-squares fit result.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: [f64; 4],
    pub rms: f64,
    pub iterations: usize,
}

/// Levenberg–Marquardt on the internal variables (E_r − E_c)/s, ln(Γ/s),
/// shape, background, with s the window span.
pub fn fit_model(model: &dyn LineshapeModel, e: &[f64], t: &[f64]) -> Result<FitOutcome> {
    if e.len() < 5 || e.len() != t.len() {
        return Err(Error::FitFailed(format!("{} samples are too few to fit", e.len())));
    }
    let ec = 0.5 * (e[0] + e[e.len() - 1]);
    let s = (e[e.len() - 1] - e[0]).max(1e-12);
    let to_u = |p: &[f64; 4]| [(p[0] - ec) / s, (p[1].abs().max(1e-300) / s).ln(), p[2], p[3]];
    let to_p = |u: &[f64; 4]| [ec + s * u[0], s * u[1].exp(), u[2], u[3]];
    let residuals = |u: &[f64; 4], r: &mut Vec<f64>| {
        let p = to_p(u);
        r.clear();
        r.extend(e.iter().zip(t).map(|(&x, &y)| model.eval(x, &p) - y));
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut best: Option<FitOutcome> = None;
    for guess in model.initial_guesses(e, t) {
        let mut u = to_u(&guess);
        let mut r = Vec::with_capacity(e.len());
        residuals(&u, &mut r);
        let mut c = cost(&r);
        if !c.is_finite() {
            continue;
        }
        let mut mu = 1e-3;
        let mut iterations = 0;
        for it in 0..500 {
            iterations = it + 1;
            // Forward-difference Jacobian.
            let mut jac = vec![[0.0f64; 4]; e.len()];
            let mut rp = Vec::with_capacity(e.len());
            for k in 0..4 {
                let h = 1e-7 * u[k].abs().max(1e-3);
                let mut up = u;
                up[k] += h;
                residuals(&up, &mut rp);
                for (row, (a, b)) in jac.iter_mut().zip(rp.iter().zip(&r)) {
                    row[k] = (a - b) / h;
                }
            }
            let mut jtj = [[0.0f64; 4]; 4];
            let mut jtr = [0.0f64; 4];
            for (row, &ri) in jac.iter().zip(&r) {
                for a in 0..4 {
                    jtr[a] += row[a] * ri;
                    for b in 0..4 {
                        jtj[a][b] += row[a] * row[b];
                    }
                }
            }
            let mut improved = false;
            for _ in 0..30 {
                let mut m = jtj;
                for a in 0..4 {
                    m[a][a] += mu * jtj[a][a].max(1e-12);
                }
                let Some(step) = solve4(m, jtr.map(|v| -v)) else {
                    mu *= 10.0;
                    continue;
                };
                let mut un = u;
                for a in 0..4 {
                    un[a] += step[a];
                }
                let mut rn = Vec::with_capacity(e.len());
                residuals(&un, &mut rn);
                let cn = cost(&rn);
                if cn.is_finite() && cn < c {
                    let rel = (c - cn) / c.max(f64::MIN_POSITIVE);
                    u = un;
                    r = rn;
                    c = cn;
                    mu = (mu * 0.3).max(1e-15);
                    improved = rel > 1e-15 && step.iter().any(|v| v.abs() > 1e-15);
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let rms = (c / e.len() as f64).sqrt();
        if best.as_ref().map(|b| rms < b.rms).unwrap_or(true) {
            best = Some(FitOutcome {
                params: to_p(&u),
                rms,
                iterations,
            });
        }
    }
    best.ok_or_else(|| Error::FitFailed("no starting point produced a finite residual".into()))
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Detection thresholds.
#[derive(Clone, Debug, Serialize)]
pub struct DetectOptions {
    /// Minimum |T − background|.
    pub depth: f64,
    /// Minimum phase change (rad) within `phase_span`.
    pub phase_change: f64,
    pub phase_span: f64,
    /// Half-width of the background median window (meV).
    pub background_halfwidth: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            depth: 0.05,
            phase_change: 2.0,
            phase_span: 1.0,
            background_halfwidth: 1.0,
        }
    }
}

/// Median of `v` with weights `w`.
fn weighted_median(mut pairs: Vec<(f64, f64)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (v, w) in &pairs {
        acc += w;
        if acc >= 0.5 * total {
            return *v;
        }
    }
    pairs.last().map(|p| p.0).unwrap_or(f64::NAN)
}

/// Background of channel `m`: energy-weighted running median, so clusters
/// of refined samples do not dominate.
pub fn background(spectrum: &TransmissionSpectrum, m: usize, halfwidth: f64) -> Vec<f64> {
    let e: Vec<f64> = spectrum.rows.iter().map(|r| r.energy).collect();
    let t: Vec<f64> = spectrum.rows.iter().map(|r| r.t(m)).collect();
    let n = e.len();
    let weight = |i: usize| {
        let lo = if i == 0 { e[0] } else { 0.5 * (e[i - 1] + e[i]) };
        let hi = if i + 1 == n { e[n - 1] } else { 0.5 * (e[i] + e[i + 1]) };
        (hi - lo).max(1e-12)
    };
    let w: Vec<f64> = (0..n).map(weight).collect();
    let mut out = Vec::with_capacity(n);
    let mut a = 0;
    let mut b = 0;
    for i in 0..n {
        while e[a] < e[i] - halfwidth {
            a += 1;
        }
        while b < n && e[b] <= e[i] + halfwidth {
            b += 1;
        }
        out.push(weighted_median((a..b).map(|k| (t[k], w[k])).collect()));
    }
    out
}

/// Windows around features of outgoing channel `m`.
pub fn detect_candidates_in(
    spectrum: &TransmissionSpectrum,
    m: usize,
    opts: &DetectOptions,
) -> Vec<EnergyWindow> {
    let rows = &spectrum.rows;
    let n = rows.len();
    if n < 3 {
        return Vec::new();
    }
    let e: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.t(m)).collect();
    let th: Vec<f64> = rows.iter().map(|r| r.theta(m)).collect();
    let bg = background(spectrum, m, opts.background_halfwidth);
    let mut flagged = vec![false; n];
    for i in 0..n {
        if t[i].is_finite() && (t[i] - bg[i]).abs() > opts.depth {
            flagged[i] = true;
        }
    }
    // Fast phase swings.
    let mut j = 0;
    for i in 0..n {
        if !th[i].is_finite() {
            continue;
        }
        j = j.max(i);
        while j + 1 < n && e[j + 1] - e[i] < opts.phase_span {
            j += 1;
        }
        for k in i + 1..=j {
            if th[k].is_finite() && (th[k] - th[i]).abs() > opts.phase_change {
                flagged[i] = true;
                flagged[k] = true;
            }
        }
    }
    let mut windows: Vec<EnergyWindow> = Vec::new();
    let mut i = 0;
    while i < n {
        if !flagged[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && flagged[i + 1] {
            i += 1;
        }
        let end = i;
        let (mut ci, mut depth) = (start, 0.0);
        for k in start..=end {
            let d = (t[k] - bg[k]).abs();
            if d >= depth {
                depth = d;
                ci = k;
            }
        }
        let width = (e[end] - e[start]).max(e[(end + 1).min(n - 1)] - e[start.saturating_sub(1)]);
        let pad = 2.0 * width;
        windows.push(EnergyWindow {
            lo: (e[start] - pad).max(e[0]),
            hi: (e[end] + pad).min(e[n - 1]),
            center: e[ci],
            depth,
            channel: m,
            overlap: false,
        });
        i += 1;
    }
    // Merge overlapping windows.
    let mut merged: Vec<EnergyWindow> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.lo <= last.hi => {
                last.hi = last.hi.max(w.hi);
                if w.depth > last.depth {
                    last.center = w.center;
                    last.depth = w.depth;
                }
                last.overlap = true;
            }
            _ => merged.push(w),
        }
    }
    merged
}

/// Candidate windows in the injection channel's own transmission.
pub fn detect_candidates(spectrum: &TransmissionSpectrum) -> Vec<EnergyWindow> {
    detect_candidates_in(spectrum, spectrum.channel, &DetectOptions::default())
}

/// Minimum rows required inside a window for a fit.
pub const MIN_FIT_ROWS: usize = 12;

/// Fits both lineshape models in `window` and keeps the better one.
pub fn fit_lineshape(spectrum: &TransmissionSpectrum, window: &EnergyWindow) -> Result<Resonance> {
    fit_lineshape_with(spectrum, window, &[&FanoModel, &BreitWignerModel])
}

pub fn fit_lineshape_with(
    spectrum: &TransmissionSpectrum,
    window: &EnergyWindow,
    models: &[&dyn LineshapeModel],
) -> Result<Resonance> {
    let m = window.channel;
    let (e, t): (Vec<f64>, Vec<f64>) = spectrum
        .rows
        .iter()
        .filter(|r| r.energy >= window.lo && r.energy <= window.hi)
        .map(|r| (r.energy, r.t(m)))
        .filter(|(_, t)| t.is_finite())
        .unzip();
    if e.len() < MIN_FIT_ROWS {
        return Err(Error::FitFailed(format!(
            "window [{:.6}, {:.6}] meV has {} rows, {} needed",
            window.lo,
            window.hi,
            e.len(),
            MIN_FIT_ROWS
        )));
    }
    let mut best: Option<(&dyn LineshapeModel, FitOutcome)> = None;
    let mut failures = Vec::new();
    for &model in models {
        match fit_model(model, &e, &t) {
            Ok(fit) => {
                if best.as_ref().map(|(_, b)| fit.rms < b.rms).unwrap_or(true) {
                    best = Some((model, fit));
                }
            }
            Err(err) => failures.push(format!("{}: {err}", model.name())),
        }
    }
    let (model, fit) = best.ok_or_else(|| Error::FitFailed(failures.join("; ")))?;
    let p = fit.params;
    let mut kind = model.kind(&p);
    if window.depth < 0.05 {
        kind = ResonanceKind::Shallow;
    }
    let lo = e[0];
    let hi = e[e.len() - 1];
    let min_t = (0..=2000)
        .map(|i| model.eval(lo + (hi - lo) * i as f64 / 2000.0, &p))
        .chain(std::iter::once(model.eval(p[0] - 0.5 * p[1] * p[2], &p)))
        .fold(f64::INFINITY, f64::min);
    let mut res = Resonance {
        e_r: p[0],
        gamma: p[1],
        kind,
        q: model.asymmetry(&p),
        background: model.background(&p),
        channel: (m, spectrum.channel),
        phi: spectrum.spec.phi,
        nu: spectrum.spec.nu,
        phase_jump: PhaseJump::Indeterminate,
        model: model.name(),
        residual: fit.rms,
        min_transmission: min_t.max(0.0),
        overlap: window.overlap,
    };
    res.phase_jump = classify_phase(spectrum, window, &res).tag;
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseClassification {
    pub tag: PhaseJump,
    /// Energies at which more samples would settle an indeterminate tag.
    pub refine_at: Vec<f64>,
}

/// Tags the phase behaviour of channel `window.channel` across the fitted
/// resonance.
pub fn classify_phase(
    spectrum: &TransmissionSpectrum,
    window: &EnergyWindow,
    fit: &Resonance,
) -> PhaseClassification {
    use std::f64::consts::PI;
    let m = window.channel;
    let (e, th): (Vec<f64>, Vec<f64>) = spectrum
        .rows
        .iter()
        .filter(|r| r.energy >= window.lo && r.energy <= window.hi)
        .map(|r| (r.energy, r.theta(m)))
        .filter(|(_, v)| v.is_finite())
        .unzip();
    let gamma = fit.gamma;
    if e.len() < 3 || !(gamma > 0.0) {
        return PhaseClassification {
            tag: PhaseJump::Indeterminate,
            refine_at: vec![fit.e_r],
        };
    }
    // Abrupt: ≥ 0.9π change within less than Γ/4.
    let mut j = 0;
    for i in 0..e.len() {
        j = j.max(i);
        while j + 1 < e.len() && e[j + 1] - e[i] < 0.25 * gamma {
            j += 1;
        }
        for k in i + 1..=j {
            if (th[k] - th[i]).abs() >= 0.9 * PI {
                return PhaseClassification {
                    tag: PhaseJump::AbruptPi,
                    refine_at: Vec::new(),
                };
            }
        }
    }
    // A large step between neighbours too far apart to tell.
    let mut refine_at = Vec::new();
    for i in 0..e.len() - 1 {
        if (th[i + 1] - th[i]).abs() >= 0.9 * PI && e[i + 1] - e[i] >= 0.25 * gamma {
            refine_at.push(0.5 * (e[i] + e[i + 1]));
        }
    }
    if !refine_at.is_empty() {
        return PhaseClassification {
            tag: PhaseJump::Indeterminate,
            refine_at,
        };
    }
    // Smooth: net π change whose 10–90 % span lies in [Γ/2, 5Γ].
    let total = th[th.len() - 1] - th[0];
    if (total.abs() - PI).abs() < 0.25 * PI {
        let cross = |frac: f64| -> Option<f64> {
            let target = th[0] + frac * total;
            (0..th.len() - 1).find_map(|i| {
                let (a, b) = (th[i] - target, th[i + 1] - target);
                if a == 0.0 {
                    Some(e[i])
                } else if a * b < 0.0 || b == 0.0 {
                    Some(e[i] + (e[i + 1] - e[i]) * a / (a - b))
                } else {
                    None
                }
            })
        };
        if let (Some(a), Some(b)) = (cross(0.1), cross(0.9)) {
            let span = (b - a).abs();
            if span >= 0.5 * gamma && span <= 5.0 * gamma {
                return PhaseClassification {
                    tag: PhaseJump::SmoothPi,
                    refine_at: Vec::new(),
                };
            }
        }
    }
    PhaseClassification {
        tag: PhaseJump::None,
        refine_at: Vec::new(),
    }
}
