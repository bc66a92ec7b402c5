//! Self-contained SVG plots of regret curves.

use std::fmt::Write as _;
use std::path::Path;

use mumab_core::{theoretical_bound, ProtocolParams};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Cumulative regret against the step index.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
}

/// Reads a run trace (`cum_regret` column) or a sweep curve (`mean`, and
/// `stderr` when present).
pub fn read_curve(path: &Path) -> Result<Curve> {
    let invalid = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => invalid(format!("{other:?}")),
    })?;
    let headers = r.headers().map_err(|e| invalid(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let t_col = col("t").ok_or_else(|| invalid("missing column t".into()))?;
    let y_col = col("cum_regret")
        .or_else(|| col("mean"))
        .ok_or_else(|| invalid("needs a cum_regret or mean column".into()))?;
    let e_col = col("stderr");

    let mut curve = Curve {
        t: Vec::new(),
        y: Vec::new(),
        stderr: e_col.map(|_| Vec::new()),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| invalid(format!("row {}: bad number in column {}", line + 2, c + 1)))
        };
        curve.t.push(field(t_col)?);
        curve.y.push(field(y_col)?);
        if let (Some(c), Some(v)) = (e_col, curve.stderr.as_mut()) {
            v.push(field(c)?);
        }
    }
    if curve.t.is_empty() {
        return Err(invalid("no data rows".into()));
    }
    if curve.t.iter().any(|&t| t < 1.0) || curve.t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            "t must start at 1 or later and strictly increase".into(),
        ));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlotReport {
    pub points: usize,
    pub monotone: bool,
    /// Whether the bound lies strictly above every curve point.
    pub bound_above_curve: Option<bool>,
}

pub struct PlotOptions<'a> {
    pub log_panel: bool,
    pub bound: Option<&'a ProtocolParams>,
    pub title: String,
}

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 340.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const MAX_POINTS: usize = 1500;

struct Panel {
    x0: f64,
    x_min: f64,
    x_max: f64,
    y_max: f64,
    log_x: bool,
}

impl Panel {
    fn fx(&self, t: f64) -> f64 {
        let (a, b, v) = if self.log_x {
            (self.x_min.ln(), self.x_max.ln(), t.ln())
        } else {
            (self.x_min, self.x_max, t)
        };
        let frac = if b > a { (v - a) / (b - a) } else { 0.5 };
        self.x0 + MARGIN_L + frac * (PANEL_W - MARGIN_L - MARGIN_R)
    }

    fn fy(&self, y: f64) -> f64 {
        let frac = if self.y_max > 0.0 {
            y / self.y_max
        } else {
            0.0
        };
        MARGIN_T + (1.0 - frac) * (PANEL_H - MARGIN_T - MARGIN_B)
    }
}

fn nice_step(range: f64) -> f64 {
    if range <= 0.0 {
        return 1.0;
    }
    let raw = range / 5.0;
    let p = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|f| f * p)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * p)
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

/// Indices of at most `MAX_POINTS` samples spread evenly in panel space,
/// always keeping the first and last.
fn sample(t: &[f64], log_x: bool) -> Vec<usize> {
    if t.len() <= MAX_POINTS {
        return (0..t.len()).collect();
    }
    let key = |v: f64| if log_x { v.ln() } else { v };
    let (a, b) = (key(t[0]), key(t[t.len() - 1]));
    let mut out = vec![0];
    let mut next = 1;
    for (i, &ti) in t.iter().enumerate().skip(1) {
        let target = a + (b - a) * next as f64 / (MAX_POINTS - 1) as f64;
        if key(ti) >= target {
            out.push(i);
            while a + (b - a) * next as f64 / (MAX_POINTS - 1) as f64 <= key(ti) {
                next += 1;
            }
        }
    }
    if *out.last().unwrap() != t.len() - 1 {
        out.push(t.len() - 1);
    }
    out
}

fn polyline(svg: &mut String, pts: impl Iterator<Item = (f64, f64)>, style: &str) {
    svg.push_str("<polyline fill=\"none\" ");
    svg.push_str(style);
    svg.push_str(" points=\"");
    for (i, (x, y)) in pts.enumerate() {
        if i > 0 {
            svg.push(' ');
        }
        let _ = write!(svg, "{x:.2},{y:.2}");
    }
    svg.push_str("\"/>\n");
}

fn draw_panel(
    svg: &mut String,
    panel: &Panel,
    curve: &Curve,
    bound: Option<&ProtocolParams>,
    title: &str,
) {
    let left = panel.x0 + MARGIN_L;
    let right = panel.x0 + PANEL_W - MARGIN_R;
    let top = MARGIN_T;
    let bottom = PANEL_H - MARGIN_B;
    let _ = writeln!(
        svg,
        "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"white\" stroke=\"#444\"/>",
        right - left,
        bottom - top
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
        (left + right) / 2.0
    );

    let step = nice_step(panel.y_max);
    let mut v = 0.0;
    while v <= panel.y_max * (1.0 + 1e-12) {
        let y = panel.fy(v);
        let _ = writeln!(
            svg,
            "<line x1=\"{left:.2}\" y1=\"{y:.2}\" x2=\"{right:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{}</text>",
            left - 6.0,
            y + 4.0,
            label(v)
        );
        v += step;
    }
    if panel.log_x {
        let mut e = panel.x_min.log10().ceil() as i32;
        while 10f64.powi(e) <= panel.x_max {
            let x = panel.fx(10f64.powi(e));
            let _ = writeln!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{top:.2}\" x2=\"{x:.2}\" y2=\"{bottom:.2}\" stroke=\"#ddd\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">1e{e}</text>",
                bottom + 16.0
            );
            e += 1;
        }
    } else {
        let step = nice_step(panel.x_max);
        let mut v = 0.0;
        while v <= panel.x_max * (1.0 + 1e-12) {
            if v >= panel.x_min {
                let x = panel.fx(v);
                let _ = writeln!(
                    svg,
                    "<line x1=\"{x:.2}\" y1=\"{top:.2}\" x2=\"{x:.2}\" y2=\"{bottom:.2}\" stroke=\"#ddd\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
                    bottom + 16.0,
                    label(v)
                );
            }
            v += step;
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
        (left + right) / 2.0,
        PANEL_H - 12.0,
        if panel.log_x {
            "t (steps, log scale)"
        } else {
            "t (steps)"
        }
    );
    let _ = writeln!(
        svg,
        "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 {x:.2} {y:.2})\">cumulative regret</text>",
        x = panel.x0 + 16.0,
        y = (top + bottom) / 2.0
    );

    let idx = sample(&curve.t, panel.log_x);
    if let Some(err) = &curve.stderr {
        let upper = idx
            .iter()
            .map(|&i| (panel.fx(curve.t[i]), panel.fy(curve.y[i] + err[i])));
        let lower = idx.iter().rev().map(|&i| {
            (
                panel.fx(curve.t[i]),
                panel.fy((curve.y[i] - err[i]).max(0.0)),
            )
        });
        svg.push_str("<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" points=\"");
        for (n, (x, y)) in upper.chain(lower).enumerate() {
            if n > 0 {
                svg.push(' ');
            }
            let _ = write!(svg, "{x:.2},{y:.2}");
        }
        svg.push_str("\"/>\n");
    }
    polyline(
        svg,
        idx.iter()
            .map(|&i| (panel.fx(curve.t[i]), panel.fy(curve.y[i]))),
        "stroke=\"#1f77b4\" stroke-width=\"1.8\"",
    );
    if let Some(p) = bound {
        polyline(
            svg,
            idx.iter().map(|&i| {
                (
                    panel.fx(curve.t[i]),
                    panel.fy(theoretical_bound(p, curve.t[i] as u64)),
                )
            }),
            "stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"",
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"#d62728\">closed-form bound</text>",
            left + 8.0,
            top + 16.0
        );
    }
}

/// Renders the linear panel, plus a log-x panel when requested or when a
/// bound is overlaid.
pub fn render(curve: &Curve, opts: &PlotOptions) -> (String, PlotReport) {
    let monotone = curve.y.windows(2).all(|w| w[1] >= w[0]);
    let bound_above_curve = opts.bound.map(|p| {
        curve
            .t
            .iter()
            .zip(&curve.y)
            .all(|(&t, &y)| theoretical_bound(p, t as u64) > y)
    });
    let with_log = opts.log_panel || opts.bound.is_some();
    let width = if with_log { 2.0 * PANEL_W } else { PANEL_W };

    let y_top = |with_bound: bool| {
        let mut top = curve
            .y
            .iter()
            .zip(curve.stderr.iter().flatten().chain(std::iter::repeat(&0.0)))
            .map(|(y, e)| y + e)
            .fold(0.0, f64::max);
        if let (true, Some(p)) = (with_bound, opts.bound) {
            top = top.max(theoretical_bound(p, *curve.t.last().unwrap() as u64));
        }
        if top <= 0.0 {
            1.0
        } else {
            top * 1.05
        }
    };
    let x_min = curve.t[0];
    let x_max = *curve.t.last().unwrap();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{PANEL_H:.0}\" viewBox=\"0 0 {width:.0} {PANEL_H:.0}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"100%\" height=\"100%\" fill=\"#fafafa\"/>"
    );
    let linear = Panel {
        x0: 0.0,
        x_min: x_min.min(0.0),
        x_max,
        y_max: y_top(false),
        log_x: false,
    };
    draw_panel(&mut svg, &linear, curve, None, &opts.title);
    if with_log {
        let log = Panel {
            x0: PANEL_W,
            x_min,
            x_max: x_max.max(x_min * 10.0),
            y_max: y_top(true),
            log_x: true,
        };
        draw_panel(&mut svg, &log, curve, opts.bound, "log-x view");
    }
    svg.push_str("</svg>\n");
    (
        svg,
        PlotReport {
            points: curve.t.len(),
            monotone,
            bound_above_curve,
        },
    )
}
