//! Plot-data emission: per-trace series files (gap against outer iterations
//! and against cumulative Sinkhorn iterations) plus an optional bare-bones
//! SVG chart.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::solver::{read_trace_csv, TraceRow};

/// Outer-iteration axis cap on the emitted series; long runs are truncated
/// for readability while the inner-iteration series keeps everything.
pub const OUT_AXIS_CAP: usize = 20_000;

pub struct PlotFiles {
    pub series: Vec<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn series_label(csv: &Path) -> String {
    csv.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into())
}

fn write_series(
    path: &Path,
    header: (&str, &str),
    points: impl Iterator<Item = (f64, f64)>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{},{}", header.0, header.1)?;
    for (x, y) in points {
        writeln!(out, "{x},{y:.16e}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes, for every trace, `<stem>_out.csv` (gap vs outer iteration, capped)
/// and `<stem>_sink.csv` (gap vs cumulative inner iterations) into `out_dir`;
/// optionally a combined `<name>.svg` chart of the inner-iteration series.
pub fn emit_plot_data(
    traces: &[PathBuf],
    out_dir: &Path,
    name: &str,
    with_svg: bool,
) -> Result<PlotFiles> {
    if traces.is_empty() {
        return Err(Error::Config("no traces given".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut svg_series = Vec::new();
    for csv in traces {
        let rows = read_trace_csv(csv)?;
        let label = series_label(csv);
        let out_path = out_dir.join(format!("{label}_out.csv"));
        write_series(
            &out_path,
            ("out", "nfval"),
            rows.iter()
                .filter(|r| r.k < OUT_AXIS_CAP)
                .map(|r| (r.k as f64, r.nfval)),
        )?;
        files.push(out_path);
        let sink_path = out_dir.join(format!("{label}_sink.csv"));
        write_series(
            &sink_path,
            ("sink", "nfval"),
            rows.iter().map(|r| (r.cum_inner_iters as f64, r.nfval)),
        )?;
        files.push(sink_path);
        svg_series.push((label, rows));
    }
    let svg = if with_svg {
        let path = out_dir.join(format!("{name}.svg"));
        write_svg(&path, name, &svg_series)?;
        Some(path)
    } else {
        None
    };
    Ok(PlotFiles { series: files, svg })
}

const SVG_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal log-y line chart of the gap against cumulative inner iterations.
fn write_svg(path: &Path, title: &str, series: &[(String, Vec<TraceRow>)]) -> Result<()> {
    let (w, h) = (800.0_f64, 560.0_f64);
    let (ml, mr, mt, mb) = (70.0, 20.0, 40.0, 50.0);
    let mut x_max = 1.0_f64;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, rows) in series {
        for r in rows {
            x_max = x_max.max(r.cum_inner_iters as f64);
            if r.nfval.is_finite() && r.nfval > 0.0 {
                y_min = y_min.min(r.nfval);
                y_max = y_max.max(r.nfval);
            }
        }
    }
    if !y_min.is_finite() {
        y_min = 1e-10;
        y_max = 1.0;
    }
    let (ly_min, ly_max) = (y_min.log10().floor(), y_max.log10().ceil().max(y_min.log10().floor() + 1.0));
    let sx = |x: f64| ml + (x / x_max) * (w - ml - mr);
    let sy = |y: f64| {
        let ly = y.max(1e-300).log10().clamp(ly_min, ly_max);
        h - mb - (ly - ly_min) / (ly_max - ly_min) * (h - mt - mb)
    };

    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )?;
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2.0,
        xml_escape(title)
    )?;
    // Axes.
    writeln!(
        out,
        r#"<line x1="{ml}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#,
        y0 = h - mb,
        x1 = w - mr
    )?;
    writeln!(
        out,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{y0}" stroke="black"/>"#,
        y0 = h - mb
    )?;
    // Decade gridlines and labels.
    let mut dec = ly_min;
    while dec <= ly_max + 0.5 {
        let y = sy(10f64.powf(dec));
        writeln!(
            out,
            r#"<line x1="{ml}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#dddddd"/>"#,
            x1 = w - mr
        )?;
        writeln!(
            out,
            r#"<text x="{x}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="end">1e{dec:.0}</text>"#,
            x = ml - 6.0
        )?;
        dec += 1.0;
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">cumulative inner iterations</text>"#,
        (ml + w - mr) / 2.0,
        h - 14.0
    )?;
    for (idx, (label, rows)) in series.iter().enumerate() {
        let color = SVG_COLORS[idx % SVG_COLORS.len()];
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| r.nfval.is_finite())
            .map(|r| format!("{:.1},{:.1}", sx(r.cum_inner_iters as f64), sy(r.nfval)))
            .collect();
        if !pts.is_empty() {
            writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            )?;
        }
        let ly = mt + 16.0 * idx as f64 + 8.0;
        writeln!(
            out,
            r#"<line x1="{x}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            x = w - mr - 170.0,
            x2 = w - mr - 146.0
        )?;
        writeln!(
            out,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11">{}</text>"#,
            xml_escape(label),
            x = w - mr - 140.0,
            y = ly + 4.0
        )?;
    }
    writeln!(out, "</svg>")?;
    out.flush()?;
    Ok(())
}
