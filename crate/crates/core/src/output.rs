//! CSV emission: a `#`-prefixed metadata block, one header line, then rows.
//! Floats are written with 12 significant digits so repeated runs compare
//! byte for byte.

use std::io::{self, Write};

use crate::complex_scaling::ComplexResonance;
use crate::model::LevelTable;
use crate::resonance::Resonance;
use crate::spectra::{ResonanceTrajectory, TransmissionSpectrum};

pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.11e}")
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, metadata: &[(String, String)], header: &[String]) -> io::Result<Self> {
        for (k, v) in metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "{}", header.join(","))?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, fields: &[String]) -> io::Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(","))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn spectrum_header(columns: usize) -> Vec<String> {
    let mut h = vec!["E_meV".to_string()];
    h.extend((1..=columns).map(|m| format!("T_{m}")));
    h.extend((1..=columns).map(|m| format!("theta_{m}_rad")));
    h.push("R_sum".into());
    h.push("unitarity_defect".into());
    h
}

pub fn write_spectrum<W: Write>(out: W, s: &TransmissionSpectrum, metadata: &[(String, String)]) -> io::Result<W> {
    let mut meta = metadata.to_vec();
    meta.push(("incoming_channel".into(), s.channel.to_string()));
    meta.push(("rows".into(), s.rows.len().to_string()));
    meta.push(("flagged_rows".into(), s.flagged_rows().to_string()));
    meta.push(("defect_tolerance".into(), fmt_float(s.defect_tolerance)));
    meta.push(("refinement_truncated".into(), s.truncated.to_string()));
    let mut w = CsvWriter::new(out, &meta, &spectrum_header(s.columns))?;
    for r in &s.rows {
        let mut f = vec![fmt_float(r.energy)];
        f.extend(r.transmission.iter().map(|&v| fmt_float(v)));
        f.extend(r.phase.iter().map(|&v| fmt_float(v)));
        f.push(fmt_float(r.reflection_sum));
        f.push(fmt_float(r.defect));
        w.row(&f)?;
    }
    w.finish()
}

pub fn write_resonances<W: Write>(out: W, list: &[Resonance], metadata: &[(String, String)]) -> io::Result<W> {
    let header: Vec<String> = [
        "Phi", "nu", "channel", "E_r_meV", "Gamma_meV", "q", "type", "phase_jump", "lifetime_ps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut w = CsvWriter::new(out, metadata, &header)?;
    for r in list {
        w.row(&[
            fmt_float(r.phi),
            fmt_float(r.nu),
            format!("{}-{}", r.channel.0, r.channel.1),
            fmt_float(r.e_r),
            fmt_float(r.gamma),
            r.q.map(fmt_float).unwrap_or_default(),
            r.kind.as_str().to_string(),
            r.phase_jump.as_str().to_string(),
            fmt_float(r.lifetime_ps()),
        ])?;
    }
    w.finish()
}

pub fn write_trajectories<W: Write>(
    out: W,
    list: &[ResonanceTrajectory],
    metadata: &[(String, String)],
) -> io::Result<W> {
    let header: Vec<String> = [
        "trajectory", "label_n", "label_j", "ambiguous", "lost_at_Phi", "Phi", "E_r_meV", "Gamma_meV", "type",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut w = CsvWriter::new(out, metadata, &header)?;
    for (i, t) in list.iter().enumerate() {
        let (n, j) = t
            .label
            .map(|(n, j)| (n.to_string(), j.to_string()))
            .unwrap_or_default();
        for s in &t.samples {
            w.row(&[
                i.to_string(),
                n.clone(),
                j.clone(),
                t.ambiguous.to_string(),
                t.lost_at.map(fmt_float).unwrap_or_default(),
                fmt_float(s.phi),
                fmt_float(s.e_r),
                fmt_float(s.gamma),
                s.kind.as_str().to_string(),
            ])?;
        }
    }
    w.finish()
}

pub fn write_complex_eigenvalues<W: Write>(
    out: W,
    phi: f64,
    nu: f64,
    list: &[ComplexResonance],
    metadata: &[(String, String)],
) -> io::Result<W> {
    let header: Vec<String> = ["Phi", "nu", "label_n", "label_j", "Re_meV", "Im_meV", "theta_im", "residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut w = CsvWriter::new(out, metadata, &header)?;
    for r in list {
        let (n, j) = r
            .label
            .map(|(n, j)| (n.to_string(), j.to_string()))
            .unwrap_or_default();
        w.row(&[
            fmt_float(phi),
            fmt_float(nu),
            n,
            j,
            fmt_float(r.value.re),
            fmt_float(r.value.im),
            fmt_float(r.theta.im),
            fmt_float(r.residual),
        ])?;
    }
    w.finish()
}

pub fn write_levels<W: Write>(out: W, t: &LevelTable, metadata: &[(String, String)]) -> io::Result<W> {
    let header: Vec<String> = ["kind", "n", "j", "n_y", "n_z", "energy_meV", "in_single_channel_window"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut w = CsvWriter::new(out, metadata, &header)?;
    for th in &t.thresholds {
        w.row(&[
            "threshold".into(),
            th.n.to_string(),
            String::new(),
            th.n_y.to_string(),
            th.n_z.to_string(),
            fmt_float(th.energy),
            String::new(),
        ])?;
    }
    for b in &t.bound {
        w.row(&[
            "well".into(),
            String::new(),
            b.j.to_string(),
            String::new(),
            String::new(),
            fmt_float(b.energy),
            String::new(),
        ])?;
    }
    for c in &t.combined {
        w.row(&[
            "level".into(),
            c.n.to_string(),
            c.j.to_string(),
            c.n_y.to_string(),
            c.n_z.to_string(),
            fmt_float(c.energy),
            c.in_single_channel_window.to_string(),
        ])?;
    }
    w.finish()
}

/// Lines of a CSV document that are not metadata.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}
