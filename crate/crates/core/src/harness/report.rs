//! Monte-Carlo report and its CSV files.
//!
//! | file | columns |
//! |---|---|
//! | `rmse_<filter>.csv` | `t, roll, pitch, yaw` (deg) |
//! | `convergence.csv` | `filter, runs, failed, threshold_deg, time_s` |
//! | `consistency.csv` | `filter, t, yaw_sigma, anees` |
//! | `terminal.csv` | `filter, heading_deg, trial, window_yaw_rms, final_yaw` |
//! | `summary.txt` | human-readable grid |
//!
//! `time_s` is empty when the threshold is never held to the end.

use std::fmt::Write as _;
use std::path::Path;

use crate::errmodel::ErrorModelKind;
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TerminalRow {
    pub heading_deg: f64,
    pub trial: usize,
    /// RMS yaw error over the final window, deg.
    pub window_yaw_rms: f64,
    pub final_yaw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterReport {
    pub kind: ErrorModelKind,
    pub runs: usize,
    pub failed: usize,
    pub epochs: Vec<f64>,
    /// Roll, pitch, yaw RMSE per epoch, deg.
    pub rmse: Vec<[f64; 3]>,
    /// RMS of the filter's own yaw 1σ, deg.
    pub yaw_sigma: Vec<f64>,
    /// Mean over runs of yaw error² / σ².
    pub anees: Vec<f64>,
    pub terminal: Vec<TerminalRow>,
}

impl FilterReport {
    pub fn empty(kind: ErrorModelKind) -> Self {
        FilterReport {
            kind,
            runs: 0,
            failed: 0,
            epochs: vec![],
            rmse: vec![],
            yaw_sigma: vec![],
            anees: vec![],
            terminal: vec![],
        }
    }

    /// Earliest epoch from which yaw RMSE stays at or below `threshold_deg`.
    pub fn convergence_time(&self, threshold_deg: f64) -> Option<f64> {
        let mut out = None;
        for (t, e) in self.epochs.iter().zip(&self.rmse).rev() {
            if e[2] <= threshold_deg {
                out = Some(*t);
            } else {
                break;
            }
        }
        out
    }

    pub fn final_rmse(&self) -> Option<[f64; 3]> {
        self.rmse.last().copied()
    }

    /// Fraction of successful runs whose terminal yaw RMS is below `deg`.
    pub fn converged_fraction(&self, deg: f64) -> f64 {
        if self.terminal.is_empty() {
            return 0.0;
        }
        self.terminal.iter().filter(|r| r.window_yaw_rms < deg).count() as f64 / self.terminal.len() as f64
    }

    /// Fraction of epochs from `t_from` on whose ANEES lies inside `band`.
    pub fn anees_in_band(&self, t_from: f64, band: (f64, f64)) -> f64 {
        let v: Vec<f64> = self.epochs.iter().zip(&self.anees).filter(|(t, _)| **t >= t_from).map(|(_, a)| *a).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.iter().filter(|a| **a >= band.0 && **a <= band.1).count() as f64 / v.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McReport {
    pub schema_version: u32,
    pub convergence_threshold_deg: f64,
    pub filters: Vec<FilterReport>,
}

impl McReport {
    pub fn new(convergence_threshold_deg: f64) -> Self {
        McReport { schema_version: SCHEMA_VERSION, convergence_threshold_deg, filters: vec![] }
    }

    pub fn filter(&self, kind: ErrorModelKind) -> Option<&FilterReport> {
        self.filters.iter().find(|f| f.kind == kind)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema_version {}", self.schema_version);
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>6} {:>22} {:>22} {:>22} {:>8} {:>9}",
            "filter", "runs", "failed", "roll", "pitch", "yaw", "t_conv", "conv_frac"
        );
        for f in &self.filters {
            let [r, p, y] = f.final_rmse().unwrap_or([f64::NAN; 3]);
            let tc = f
                .convergence_time(self.convergence_threshold_deg)
                .map_or_else(|| "never".to_string(), |t| format!("{t}"));
            let _ = writeln!(
                s,
                "{:<10} {:>5} {:>6} {:>22} {:>22} {:>22} {:>8} {:>9.3}",
                f.kind.label(),
                f.runs,
                f.failed,
                r,
                p,
                y,
                tc,
                f.converged_fraction(10.0)
            );
        }
        let _ = writeln!(s, "roll/pitch/yaw: final-epoch RMSE, deg");
        let _ = writeln!(s, "t_conv: yaw RMSE <= {} deg from then on, s", self.convergence_threshold_deg);
        let _ = writeln!(s, "conv_frac: runs with final-window yaw RMS < 10 deg");
        s
    }
}

fn w_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => Error::Parse { line, msg: format!("{k:?}") },
    }
}

fn fmt_f(x: f64) -> String {
    x.to_string()
}

/// Writes every report file into `dir`, creating it if needed.
pub fn emit_report(report: &McReport, dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let mut conv = csv::Writer::from_path(dir.join("convergence.csv")).map_err(w_err)?;
    conv.write_record(["filter", "runs", "failed", "threshold_deg", "time_s"]).map_err(w_err)?;
    let mut cons = csv::Writer::from_path(dir.join("consistency.csv")).map_err(w_err)?;
    cons.write_record(["filter", "t", "yaw_sigma", "anees"]).map_err(w_err)?;
    let mut term = csv::Writer::from_path(dir.join("terminal.csv")).map_err(w_err)?;
    term.write_record(["filter", "heading_deg", "trial", "window_yaw_rms", "final_yaw"]).map_err(w_err)?;
    for f in &report.filters {
        let label = f.kind.label();
        let mut rm = csv::Writer::from_path(dir.join(format!("rmse_{label}.csv"))).map_err(w_err)?;
        rm.write_record(["t", "roll", "pitch", "yaw"]).map_err(w_err)?;
        for (t, e) in f.epochs.iter().zip(&f.rmse) {
            rm.write_record([fmt_f(*t), fmt_f(e[0]), fmt_f(e[1]), fmt_f(e[2])]).map_err(w_err)?;
        }
        rm.flush()?;
        let tc = f.convergence_time(report.convergence_threshold_deg).map(fmt_f).unwrap_or_default();
        conv.write_record([
            label.to_string(),
            f.runs.to_string(),
            f.failed.to_string(),
            fmt_f(report.convergence_threshold_deg),
            tc,
        ])
        .map_err(w_err)?;
        for ((t, s), a) in f.epochs.iter().zip(&f.yaw_sigma).zip(&f.anees) {
            cons.write_record([label.to_string(), fmt_f(*t), fmt_f(*s), fmt_f(*a)]).map_err(w_err)?;
        }
        for r in &f.terminal {
            term.write_record([
                label.to_string(),
                fmt_f(r.heading_deg),
                r.trial.to_string(),
                fmt_f(r.window_yaw_rms),
                fmt_f(r.final_yaw),
            ])
            .map_err(w_err)?;
        }
    }
    conv.flush()?;
    cons.flush()?;
    term.flush()?;
    std::fs::write(dir.join("summary.txt"), report.summary())?;
    Ok(())
}

fn rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>, Error> {
    let mut rdr = csv::Reader::from_path(path).map_err(w_err)?;
    let got: Vec<&str> = rdr.headers().map_err(w_err)?.iter().collect();
    if got != header {
        return Err(Error::Parse { line: 1, msg: format!("{}: unexpected header", path.display()) });
    }
    let mut out = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(w_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(line: u64, s: &str) -> Result<T, Error> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("bad number '{s}'") })
}

/// Reads a report written by [`emit_report`].
pub fn parse_report(dir: &Path) -> Result<McReport, Error> {
    let mut report = McReport::new(5.0);
    for (line, r) in rows(&dir.join("convergence.csv"), &["filter", "runs", "failed", "threshold_deg", "time_s"])? {
        let kind: ErrorModelKind = r[0].parse().map_err(|_| Error::Parse { line, msg: format!("filter '{}'", r[0]) })?;
        let mut f = FilterReport::empty(kind);
        f.runs = num(line, &r[1])?;
        f.failed = num(line, &r[2])?;
        report.convergence_threshold_deg = num(line, &r[3])?;
        for (line, r) in rows(&dir.join(format!("rmse_{}.csv", kind.label())), &["t", "roll", "pitch", "yaw"])? {
            f.epochs.push(num(line, &r[0])?);
            f.rmse.push([num(line, &r[1])?, num(line, &r[2])?, num(line, &r[3])?]);
        }
        report.filters.push(f);
    }
    for (line, r) in rows(&dir.join("consistency.csv"), &["filter", "t", "yaw_sigma", "anees"])? {
        let f = find(&mut report, line, &r[0])?;
        f.yaw_sigma.push(num(line, &r[2])?);
        f.anees.push(num(line, &r[3])?);
    }
    for (line, r) in rows(&dir.join("terminal.csv"), &["filter", "heading_deg", "trial", "window_yaw_rms", "final_yaw"])? {
        let f = find(&mut report, line, &r[0])?;
        f.terminal.push(TerminalRow {
            heading_deg: num(line, &r[1])?,
            trial: num(line, &r[2])?,
            window_yaw_rms: num(line, &r[3])?,
            final_yaw: num(line, &r[4])?,
        });
    }
    Ok(report)
}

fn find<'a>(report: &'a mut McReport, line: u64, label: &str) -> Result<&'a mut FilterReport, Error> {
    report
        .filters
        .iter_mut()
        .find(|f| f.kind.label() == label)
        .ok_or_else(|| Error::Parse { line, msg: format!("filter '{label}' missing from convergence.csv") })
}

/// Two-sided 95% band for the average of `n` χ²₁ draws (Wilson–Hilferty).
pub fn anees_band(n: usize) -> (f64, f64) {
    let k = n.max(1) as f64;
    let q = |z: f64| {
        let a = 2.0 / (9.0 * k);
        (1.0 - a + z * a.sqrt()).powi(3)
    };
    (q(-1.959_963_984_540_054), q(1.959_963_984_540_054))
}
