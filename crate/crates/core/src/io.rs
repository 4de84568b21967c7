//! File formats: observation, criterion and prediction CSVs, the fit report
//! and anchor sidecar in JSON, and a small SVG plot of the criterion.
//!
//! Every writer goes through a temporary file in the target directory that
//! is renamed into place, so a failed run never leaves a partial file.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::empirical::{CriterionTable, Dataset};
use crate::error::{Error, Result};
use crate::fitting::WlsFit;
use crate::sphere::SpherePoint;

pub const OBS_HEADER: [&str; 3] = ["psi_rad", "zeta_rad", "value"];
pub const OBS_HEADER_DEGREES: [&str; 3] = ["lon_deg", "lat_deg", "value"];

/// Writes `path` atomically through `body`.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// Coordinates (and values, when present) of a coordinate CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PointTable {
    pub points: Vec<SpherePoint<f64>>,
    pub values: Option<Vec<f64>>,
}

fn unreadable(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("cannot read {}: {e}", path.display()))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| unreadable(path, e))
}

fn parse_field(raw: &str, line: u64, column: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Invalid(format!("line {line}: column {column} holds {raw:?}, not a number")))
}

/// Reads a coordinate CSV with header `psi_rad,zeta_rad[,value]`, or
/// `lon_deg,lat_deg[,value]` when `degrees` is set.
pub fn read_points(path: &Path, degrees: bool) -> Result<PointTable> {
    let expect = if degrees { OBS_HEADER_DEGREES } else { OBS_HEADER };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| unreadable(path, e))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let with_values = header.len() == 3;
    if !(header.len() == 2 || with_values) || header.iter().zip(expect).any(|(h, e)| h != e) {
        return Err(Error::Invalid(format!(
            "{}: header must be `{}` (value optional), found `{}`",
            path.display(),
            expect.join(","),
            header.join(",")
        )));
    }
    let mut points = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let a = parse_field(&record[0], line, expect[0])?;
        let b = parse_field(&record[1], line, expect[1])?;
        let point = if degrees {
            if !(-90.0..=90.0).contains(&b) {
                return Err(Error::Invalid(format!("line {line}: latitude {b} is outside [-90, 90]")));
            }
            SpherePoint::from_degrees(a, b)
        } else {
            SpherePoint::new(a, b)
        };
        points.push(point.map_err(|e| Error::Invalid(format!("line {line}: {e}")))?);
        if with_values {
            values.push(parse_field(&record[2], line, expect[2])?);
        }
    }
    if points.is_empty() {
        return Err(Error::Invalid(format!("{}: no rows", path.display())));
    }
    Ok(PointTable { points, values: with_values.then_some(values) })
}

/// Reads an observation CSV (the value column is required).
pub fn read_observations(path: &Path, degrees: bool, sigma2: f64) -> Result<Dataset<f64>> {
    let table = read_points(path, degrees)?;
    let values = table
        .values
        .ok_or_else(|| Error::Invalid(format!("{}: observations need a value column", path.display())))?;
    Dataset::new(table.points, values, sigma2)
}

pub fn write_observations(path: &Path, data: &Dataset<f64>) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", OBS_HEADER.join(","))?;
        for (p, v) in data.points().iter().zip(data.values()) {
            writeln!(w, "{},{},{}", p.psi(), p.zeta(), v)?;
        }
        Ok(())
    })
}

/// `j,M,logM` rows, `logM` in base 10.
pub fn criterion_csv(table: &CriterionTable<f64>) -> String {
    let mut out = String::from("j,M,logM\n");
    for (j, m) in table.rows() {
        let _ = writeln!(out, "{j},{m},{}", m.log10());
    }
    out
}

/// Line plot of `log10 M(j)` against `j`.
pub fn criterion_svg(table: &CriterionTable<f64>, title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 36.0;
    const BOTTOM: f64 = 44.0;

    let logs: Vec<(usize, f64)> = table.rows().map(|(j, m)| (j, m.log10())).filter(|(_, v)| v.is_finite()).collect();
    let jmax = table.j_max().saturating_sub(1).max(1) as f64;
    let (lo, hi) = logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, v)| (a.min(*v), b.max(*v)));
    let (lo, hi) = if lo.is_finite() { (lo.floor(), hi.ceil().max(lo.floor() + 1.0)) } else { (0.0, 1.0) };
    let x = |j: f64| LEFT + j / jmax * (W - LEFT - RIGHT);
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (x(0.0), x(jmax), y(lo), y(hi));
    let _ = writeln!(s, r#"<path d="M{x0:.1},{y1:.1} V{y0:.1} H{x1:.1}" fill="none" stroke="black"/>"#);
    for j in 0..table.j_max() {
        let xj = x(j as f64);
        let _ = writeln!(s, r#"<line x1="{xj:.1}" y1="{y0:.1}" x2="{xj:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{xj:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{j}</text>"#, y0 + 18.0);
    }
    let step = ((hi - lo) / 8.0).ceil().max(1.0);
    let mut tick = lo;
    while tick <= hi + 1e-9 {
        let yt = y(tick);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{yt:.1}" x2="{x0:.1}" y2="{yt:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="end">1e{tick}</text>"#, x0 - 8.0, yt + 4.0);
        tick += step;
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">j</text>"#, (x0 + x1) / 2.0, H - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">M(j)</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    let pts: Vec<String> = logs.iter().map(|(j, v)| format!("{:.2},{:.2}", x(*j as f64), y(*v))).collect();
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" "));
    for (j, v) in &logs {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="steelblue"/>"#, x(*j as f64), y(*v));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Serialized form of a [`WlsFit`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReport {
    pub kappa: usize,
    pub r_hat: f64,
    pub objective: f64,
    pub bins_used: Vec<usize>,
}

impl From<&WlsFit<f64>> for FitReport {
    fn from(fit: &WlsFit<f64>) -> Self {
        Self { kappa: fit.kappa, r_hat: fit.r_hat, objective: fit.objective_value, bins_used: fit.bins_used.clone() }
    }
}

pub fn write_fit(path: &Path, report: &FitReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    write_text(path, &(text + "\n"))
}

pub fn read_fit(path: &Path) -> Result<FitReport> {
    let report: FitReport = serde_json::from_reader(open(path)?)?;
    if !(0.0..1.0).contains(&report.r_hat) {
        return Err(Error::Decay(report.r_hat));
    }
    Ok(report)
}

/// `psi_rad,zeta_rad,prediction[,truth,error]` with `error = prediction - truth`.
pub fn write_predictions(path: &Path, points: &[SpherePoint<f64>], predictions: &[f64], truth: Option<&[f64]>) -> Result<()> {
    if points.len() != predictions.len() {
        return Err(Error::LengthMismatch { left: points.len(), right: predictions.len() });
    }
    if let Some(t) = truth {
        if t.len() != predictions.len() {
            return Err(Error::LengthMismatch { left: t.len(), right: predictions.len() });
        }
    }
    write_atomic(path, |w| {
        match truth {
            Some(_) => writeln!(w, "psi_rad,zeta_rad,prediction,truth,error")?,
            None => writeln!(w, "psi_rad,zeta_rad,prediction")?,
        }
        for (i, (p, z)) in points.iter().zip(predictions).enumerate() {
            match truth {
                Some(t) => writeln!(w, "{},{},{},{},{}", p.psi(), p.zeta(), z, t[i], z - t[i])?,
                None => writeln!(w, "{},{},{}", p.psi(), p.zeta(), z)?,
            }
        }
        Ok(())
    })
}

/// Anchors as a JSON list of `[psi, zeta]` pairs.
pub fn write_tau(path: &Path, tau: &[SpherePoint<f64>]) -> Result<()> {
    let pairs: Vec<[f64; 2]> = tau.iter().map(|p| [p.psi(), p.zeta()]).collect();
    write_text(path, &(serde_json::to_string(&pairs)? + "\n"))
}

pub fn read_tau(path: &Path) -> Result<Vec<SpherePoint<f64>>> {
    let pairs: Vec<[f64; 2]> = serde_json::from_reader(open(path)?)?;
    pairs.into_iter().map(|[psi, zeta]| SpherePoint::new(psi, zeta)).collect()
}
