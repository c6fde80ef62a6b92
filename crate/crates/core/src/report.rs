//! Error analysis against reference solutions, plus CSV/SVG artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::integrators::SolutionTrace;
use crate::training::TrainRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("traces differ in length ({dnn} vs {reference})")]
    LengthMismatch { dnn: usize, reference: usize },
    #[error("time grids differ first at index {index}: {dnn} vs {reference}")]
    GridMismatch { index: usize, dnn: f64, reference: f64 },
    #[error("nothing to report: {0} is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Pointwise signed error `dnn − reference` and its absolute summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub grid: Vec<f64>,
    pub dnn_values: Vec<f64>,
    pub ref_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub rms_error: f64,
}

pub fn compare(dnn: &SolutionTrace, reference: &SolutionTrace) -> Result<ComparisonReport, ReportError> {
    if dnn.len() != reference.len() {
        return Err(ReportError::LengthMismatch {
            dnn: dnn.len(),
            reference: reference.len(),
        });
    }
    if dnn.is_empty() {
        return Err(ReportError::Empty("trace"));
    }
    if let Some(index) = dnn.times.iter().zip(&reference.times).position(|(a, b)| a != b) {
        return Err(ReportError::GridMismatch {
            index,
            dnn: dnn.times[index],
            reference: reference.times[index],
        });
    }
    let errors: Vec<f64> = dnn.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect();
    let n = errors.len() as f64;
    let max_abs_error = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let mean_abs_error = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let rms_error = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    Ok(ComparisonReport {
        grid: dnn.times.clone(),
        dnn_values: dnn.values.clone(),
        ref_values: reference.values.clone(),
        errors,
        max_abs_error,
        mean_abs_error,
        rms_error,
    })
}

/// Writes `<stem>.csv` (`t,u_dnn,u_ref,error`) and `<stem>.svg` (overlay and
/// error panels) into `dir`. Returns the CSV path.
pub fn write_comparison(report: &ComparisonReport, dir: &Path, stem: &str) -> Result<PathBuf, ReportError> {
    if report.grid.is_empty() {
        return Err(ReportError::Empty("comparison report"));
    }
    let mut csv = String::from("t,u_dnn,u_ref,error\n");
    for i in 0..report.grid.len() {
        writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            report.grid[i], report.dnn_values[i], report.ref_values[i], report.errors[i]
        )
        .unwrap();
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv)?;

    let pts = |ys: &[f64]| report.grid.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
    let overlay = LinePlot {
        title: "Solution: network vs reference".into(),
        x_label: "t".into(),
        y_label: "u".into(),
        log_y: false,
        series: vec![
            Series::new("network", "#d62728", pts(&report.dnn_values)),
            Series::new("reference", "#1f77b4", pts(&report.ref_values)),
        ],
    };
    let error = LinePlot {
        title: format!("Error (max |e| = {:.3e})", report.max_abs_error),
        x_label: "t".into(),
        y_label: "u_dnn - u_ref".into(),
        log_y: false,
        series: vec![Series::new("error", "#2ca02c", pts(&report.errors))],
    };
    fs::write(dir.join(format!("{stem}.svg")), stack_panels(&[overlay, error]))?;
    Ok(csv_path)
}

/// Writes `history.csv` (`epoch,train_loss,valid_loss`) and `history.svg`
/// (log-scale loss curves) into `dir`.
pub fn write_loss_history(record: &TrainRecord, dir: &Path) -> Result<PathBuf, ReportError> {
    if record.train_loss_history.is_empty() {
        return Err(ReportError::Empty("loss history"));
    }
    let mut csv = String::from("epoch,train_loss,valid_loss\n");
    for (tr, va) in record.train_loss_history.iter().zip(&record.valid_loss_history) {
        writeln!(csv, "{},{:.16e},{:.16e}", tr.epoch, tr.loss, va.loss).unwrap();
    }
    let path = dir.join("history.csv");
    fs::write(&path, csv)?;

    let curve = |h: &[crate::training::LossPoint]| h.iter().map(|p| (p.epoch as f64, p.loss)).collect();
    let plot = LinePlot {
        title: "Loss history".into(),
        x_label: "epoch".into(),
        y_label: "loss".into(),
        log_y: true,
        series: vec![
            Series::new("train", "#1f77b4", curve(&record.train_loss_history)),
            Series::new("validation", "#ff7f0e", curve(&record.valid_loss_history)),
        ],
    };
    fs::write(dir.join("history.svg"), stack_panels(&[plot]))?;
    Ok(path)
}

/// Horizontal bar chart, one bar per label.
pub fn bar_chart_svg(title: &str, unit: &str, bars: &[(String, f64)]) -> String {
    let (w, bar_h, gap, left, top) = (640.0, 28.0, 12.0, 90.0, 40.0);
    let h = top + bars.len() as f64 * (bar_h + gap) + 20.0;
    let max = bars.iter().map(|b| b.1).filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let scale = if max > 0.0 { (w - left - 120.0) / max } else { 0.0 };
    let mut svg = svg_open(w, h);
    writeln!(svg, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#, w / 2.0, escape(title)).unwrap();
    for (i, (label, value)) in bars.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let len = if value.is_finite() { value * scale } else { 0.0 };
        writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="13">{}</text>"#, left - 8.0, y + bar_h * 0.7, escape(label)).unwrap();
        writeln!(svg, r##"<rect x="{left:.1}" y="{y:.1}" width="{len:.2}" height="{bar_h:.1}" fill="#4c72b0"/>"##).unwrap();
        writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12">{:.3} {}</text>"#, left + len + 6.0, y + bar_h * 0.7, value, escape(unit)).unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

struct Series {
    name: String,
    color: &'static str,
    points: Vec<(f64, f64)>,
}

impl Series {
    fn new(name: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), color, points }
    }
}

struct LinePlot {
    title: String,
    x_label: String,
    y_label: String,
    log_y: bool,
    series: Vec<Series>,
}

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 320.0;

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn stack_panels(panels: &[LinePlot]) -> String {
    let mut svg = svg_open(PANEL_W, PANEL_H * panels.len() as f64);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut svg, p, i as f64 * PANEL_H);
    }
    svg.push_str("</svg>\n");
    svg
}

fn render_panel(svg: &mut String, plot: &LinePlot, y_off: f64) {
    let (ml, mr, mt, mb) = (80.0, 130.0, 36.0, 46.0);
    let (pw, ph) = (PANEL_W - ml - mr, PANEL_H - mt - mb);
    let ty = |y: f64| if plot.log_y { y.max(f64::MIN_POSITIVE).log10() } else { y };

    let all = plot.series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && ty(p.1).is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| y_off + mt + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph;

    writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, y_off + 22.0, escape(&plot.title)).unwrap();
    writeln!(svg, r##"<rect x="{ml:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##, y_off + mt).unwrap();
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let px = sx(fx);
        let py = y_off + mt + (1.0 - k as f64 / 4.0) * ph;
        let ylabel = if plot.log_y { format!("1e{fy:.1}") } else { format!("{fy:.3e}") };
        writeln!(svg, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="11">{fx:.3}</text>"#, y_off + mt + ph + 16.0).unwrap();
        writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{ylabel}</text>"#, ml - 6.0, py + 4.0).unwrap();
    }
    writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#, ml + pw / 2.0, y_off + PANEL_H - 10.0, escape(&plot.x_label)).unwrap();
    writeln!(svg, r#"<text x="16" y="{:.1}" font-size="12" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#, y_off + mt + ph / 2.0, y_off + mt + ph / 2.0, escape(&plot.y_label)).unwrap();

    for (i, s) in plot.series.iter().enumerate() {
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && ty(p.1).is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        writeln!(svg, r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#, s.color, coords.join(" ")).unwrap();
        let ly = y_off + mt + 14.0 + 18.0 * i as f64;
        writeln!(svg, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#, ml + pw + 10.0, ml + pw + 30.0, s.color).unwrap();
        writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#, ml + pw + 36.0, ly + 4.0, escape(&s.name)).unwrap();
    }
}
