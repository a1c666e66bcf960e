//! Artifact emission: the fixed-schema time-series CSV, snapshot CSVs, the
//! diagnostics table keyed by `(eps, t)`, and the machine-readable summary.

use crate::error::{CoreError, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Fixed column order of every time-series file; quantities a scenario does
/// not produce stay blank.
pub const TIMESERIES_HEADER: &str =
    "t,mass,F,F_mic_eps,F_mac_eps,D_eps,D_mic_eps,D_mac_eps,h_eps,u_eps,E_lsw,D_lsw,J_partial";

/// One row of the time-series schema.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeSeriesRow {
    pub t: f64,
    pub mass: Option<f64>,
    pub free_energy: Option<f64>,
    pub f_mic_eps: Option<f64>,
    pub f_mac_eps: Option<f64>,
    pub d_eps: Option<f64>,
    pub d_mic_eps: Option<f64>,
    pub d_mac_eps: Option<f64>,
    pub h_eps: Option<f64>,
    pub u_eps: Option<f64>,
    pub e_lsw: Option<f64>,
    pub d_lsw: Option<f64>,
    pub j_partial: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

pub fn timeseries_csv(rows: &[TimeSeriesRow]) -> String {
    let mut out = String::from(TIMESERIES_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{:.12e},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            fmt_opt(r.mass),
            fmt_opt(r.free_energy),
            fmt_opt(r.f_mic_eps),
            fmt_opt(r.f_mac_eps),
            fmt_opt(r.d_eps),
            fmt_opt(r.d_mic_eps),
            fmt_opt(r.d_mac_eps),
            fmt_opt(r.h_eps),
            fmt_opt(r.u_eps),
            fmt_opt(r.e_lsw),
            fmt_opt(r.d_lsw),
            fmt_opt(r.j_partial),
        );
    }
    out
}

/// Snapshot of a cluster state as `l,n` rows.
pub fn cluster_csv(state: &crate::bd::ClusterState) -> String {
    let mut out = String::from("l,n\n");
    for (i, v) in state.n.iter().enumerate() {
        let _ = writeln!(out, "{},{:.17e}", i + 1, v);
    }
    out
}

/// Diagnostics table rows keyed by `(eps, t)`.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRow {
    pub eps: f64,
    pub t: f64,
    pub ratio_tv: f64,
    pub residual_excess: f64,
    pub h_mic: f64,
    pub c_eed: f64,
    pub dbar_mic: f64,
}

pub fn diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::from("eps,t,ratio_tv,residual_excess,H_mic,C_EED,Dbar_mic\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.eps, r.t, r.ratio_tv, r.residual_excess, r.h_mic, r.c_eed, r.dbar_mic
        );
    }
    out
}

/// One certification line of the summary.
#[derive(Debug, Clone)]
pub struct Certification {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Certification {
    /// `value <= bound` style check.
    pub fn upper(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }

    /// Boolean check with a descriptive value.
    pub fn boolean(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            value: if passed { 1.0 } else { 0.0 },
            bound: 1.0,
            passed,
        }
    }
}

/// Machine-readable run summary: key=value lines, certification lines, one
/// volatile timestamp line at the end.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub scenario: String,
    pub scalars: Vec<(String, f64)>,
    pub notes: Vec<(String, String)>,
    pub table: Vec<String>,
    pub certifications: Vec<Certification>,
    pub config_echo: String,
    pub wall_ms: u128,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.certifications.iter().all(|c| c.passed)
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.scalars.push((name.into(), v));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# run summary");
        let _ = writeln!(out, "scenario={}", self.scenario);
        let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
        for (k, v) in &self.notes {
            let _ = writeln!(out, "{k}={v}");
        }
        for (k, v) in &self.scalars {
            let _ = writeln!(out, "{k}={v:.12e}");
        }
        for line in &self.table {
            let _ = writeln!(out, "table {line}");
        }
        for c in &self.certifications {
            let _ = writeln!(
                out,
                "cert name={} value={:.12e} bound={:.12e} pass={}",
                c.name, c.value, c.bound, c.passed
            );
        }
        let _ = writeln!(out, "all_certifications_passed={}", self.all_passed());
        let _ = writeln!(out, "config_echo_begin");
        for line in self.config_echo.lines() {
            let _ = writeln!(out, "  {line}");
        }
        let _ = writeln!(out, "config_echo_end");
        // the single volatile line, kept last so diffs modulo it are stable
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(out, "timestamp=unix:{now} wall_ms={}", self.wall_ms);
        out
    }
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
