//! Per-iteration run records, their CSV serialization, and the JSON metadata
//! sidecar. Trace CSVs are written with 17 significant digits so that
//! identical runs produce byte-identical files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bregman::Point;
use crate::error::{Error, Result};
use crate::schedules::{ThetaMode, ToleranceSchedule};

use super::StopReason;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Ibpg,
    Vibpg,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverKind::Ibpg => write!(f, "ibpg"),
            SolverKind::Vibpg => write!(f, "vibpg"),
        }
    }
}

/// Run configuration captured for reproducibility.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub solver: SolverKind,
    pub instance: String,
    pub nrows: usize,
    pub ncols: usize,
    pub l: f64,
    pub tau: f64,
    pub gamma: f64,
    pub theta_mode: Option<ThetaMode>,
    pub tolerances: ToleranceSchedule,
    pub seed: u64,
    pub f_star: Option<f64>,
    pub budget_outer: u64,
    pub budget_inner: u64,
}

/// One outer iteration. `fval` is the objective at the new feasible iterate
/// (`x̃^{k+1}` for iBPG, `x^{k+1}` for v-iBPG); `nfval` is the normalized gap
/// against the reference value when one is available, NaN otherwise. `theta`
/// is NaN for iBPG rows. `nu_claimed` is carried in memory for the bound
/// checkers but is not a CSV column.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub k: usize,
    pub fval: f64,
    pub nfval: f64,
    pub mu_measured: f64,
    pub delta_norm: f64,
    pub inner_iters: u64,
    pub cum_inner_iters: u64,
    pub theta: f64,
    pub bound_rhs_last: f64,
    pub bound_rhs_avg: f64,
    pub nu_claimed: f64,
}

/// Full iterate history of a run, kept only when requested.
#[derive(Clone, Debug, Default)]
pub struct RetainedIterates {
    /// Interior iterates: `x^k` (iBPG) or `z^k` (v-iBPG), indices `0..=K`.
    pub anchors: Vec<Point>,
    /// Feasible oracle outputs: `x̃^k` (iBPG, `0..=K`) or `z̃^k` (v-iBPG,
    /// index 0 holds the starting `x⁰` and `k ≥ 1` the oracle outputs).
    pub feasibles: Vec<Point>,
    /// v-iBPG convex-combination outputs `x^k`, indices `0..=K`; empty for iBPG.
    pub outputs: Vec<Point>,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub meta: RunMeta,
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
    pub retained: Option<RetainedIterates>,
}

/// The JSON sidecar document stored next to each trace CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub meta: RunMeta,
    pub stop: StopReason,
    pub rows: usize,
    pub cum_inner_iters: u64,
}

impl RunTrace {
    pub fn final_row(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn cum_inner(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.cum_inner_iters)
    }

    pub fn sidecar(&self) -> TraceSidecar {
        TraceSidecar {
            meta: self.meta.clone(),
            stop: self.stop,
            rows: self.rows.len(),
            cum_inner_iters: self.cum_inner(),
        }
    }

    /// Writes the CSV and its metadata sidecar (`<path>` and
    /// `<path minus .csv>.meta.json`).
    pub fn write_files(&self, csv_path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(csv_path)?);
        write_csv(&mut out, &self.rows)?;
        out.flush()?;
        let meta_path = sidecar_path(csv_path);
        let file = BufWriter::new(File::create(meta_path)?);
        serde_json::to_writer_pretty(file, &self.sidecar())?;
        Ok(())
    }
}

pub(crate) fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

const CSV_HEADER: &str =
    "k,fval,nfval,mu_measured,delta_norm,inner_iters,cum_inner_iters,theta,bound_rhs_last,bound_rhs_avg";

fn fmt17(v: f64) -> String {
    // 17 significant decimal digits round-trip any f64.
    format!("{v:.16e}")
}

fn write_csv<W: Write>(out: &mut W, rows: &[TraceRow]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt17(r.fval),
            fmt17(r.nfval),
            fmt17(r.mu_measured),
            fmt17(r.delta_norm),
            r.inner_iters,
            r.cum_inner_iters,
            fmt17(r.theta),
            fmt17(r.bound_rhs_last),
            fmt17(r.bound_rhs_avg),
        )?;
    }
    Ok(())
}

/// Reads rows back from a trace CSV. The ν column is not serialized, so it
/// comes back as zero; readers of foreign traces only consume the plotted
/// quantities.
pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let file = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != CSV_HEADER {
                return Err(Error::Parse(format!(
                    "unexpected trace header in {}",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Parse(format!(
                "trace row {lineno} has {} fields, expected 10",
                fields.len()
            )));
        }
        let fv = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {lineno} field {i}: {e}")))
        };
        rows.push(TraceRow {
            k: fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("row {lineno} k: {e}")))?,
            fval: fv(1)?,
            nfval: fv(2)?,
            mu_measured: fv(3)?,
            delta_norm: fv(4)?,
            inner_iters: fields[5]
                .parse()
                .map_err(|e| Error::Parse(format!("row {lineno} inner: {e}")))?,
            cum_inner_iters: fields[6]
                .parse()
                .map_err(|e| Error::Parse(format!("row {lineno} cum inner: {e}")))?,
            theta: fv(7)?,
            bound_rhs_last: fv(8)?,
            bound_rhs_avg: fv(9)?,
            nu_claimed: 0.0,
        });
    }
    Ok(rows)
}

/// Reads the sidecar belonging to a trace CSV.
pub fn read_sidecar(csv_path: &Path) -> Result<TraceSidecar> {
    let file = BufReader::new(File::open(sidecar_path(csv_path))?);
    Ok(serde_json::from_reader(file)?)
}
