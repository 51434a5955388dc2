//! Deterministic SVG figures built from run diagnostics.
//!
//! Every drawn element carries a class (and, where useful, `data-*`
//! attributes in data coordinates) so figures can be checked structurally.

use std::fmt::Write;

use horizon_core::diagnostics::{reliability_summary, ReliabilitySummary, RELIABILITY_WINDOW};

use crate::error::{LabError, Result};
use crate::runner::SeedRun;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 190.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const PANEL_GAP: f64 = 46.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Mean and sample standard deviation across seeds at each update index.
/// Seeds shorter than the longest run, and non-finite entries, are skipped;
/// an index with no data has a NaN mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SeriesStats {
    pub fn from_series(series: &[Vec<f64>]) -> Self {
        let len = series.iter().map(Vec::len).max().unwrap_or(0);
        let mut mean = Vec::with_capacity(len);
        let mut std = Vec::with_capacity(len);
        for u in 0..len {
            let vals: Vec<f64> = series.iter().filter_map(|s| s.get(u).copied()).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                mean.push(f64::NAN);
                std.push(f64::NAN);
                continue;
            }
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let s = if vals.len() > 1 {
                (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            mean.push(m);
            std.push(s);
        }
        Self { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn column(runs: &[SeedRun], f: impl Fn(&horizon_core::diagnostics::DiagnosticsRecord) -> f64) -> Vec<Vec<f64>> {
    runs.iter().map(|r| r.records.iter().map(&f).collect()).collect()
}

fn require_runs(runs: &[SeedRun], what: &str) -> Result<()> {
    if runs.iter().all(|r| r.records.is_empty()) {
        return Err(LabError::Report(format!("no {what} diagnostics to plot")));
    }
    Ok(())
}

fn head_count(runs: &[SeedRun]) -> Result<usize> {
    let k = runs.iter().flat_map(|r| r.records.first()).map(|r| r.weight_means.len()).max().unwrap_or(0);
    if k == 0 {
        return Err(LabError::Report("diagnostics have no w_mean_* columns".into()));
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    top: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    log_y: bool,
}

impl Panel {
    fn left() -> f64 {
        MARGIN_LEFT
    }

    fn right() -> f64 {
        WIDTH - MARGIN_RIGHT
    }

    fn x(&self, u: f64) -> f64 {
        let span = self.x_max.max(1.0);
        Self::left() + (Self::right() - Self::left()) * (u / span)
    }

    fn ty(&self, v: f64) -> f64 {
        if self.log_y {
            v.max(f64::MIN_POSITIVE).log10()
        } else {
            v
        }
    }

    fn y(&self, v: f64) -> f64 {
        let (lo, hi) = (self.ty(self.y_min), self.ty(self.y_max));
        let frac = ((self.ty(v) - lo) / (hi - lo)).clamp(0.0, 1.0);
        self.top + PANEL_HEIGHT * (1.0 - frac)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Svg {
    body: String,
    height: f64,
}

impl Svg {
    fn new(panels: usize) -> Self {
        let height = MARGIN_TOP + panels as f64 * (PANEL_HEIGHT + PANEL_GAP);
        Self {
            body: String::new(),
            height,
        }
    }

    fn panel_top(i: usize) -> f64 {
        MARGIN_TOP + i as f64 * (PANEL_HEIGHT + PANEL_GAP)
    }

    fn finish(self, title: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{h}" viewBox="0 0 {WIDTH} {h}" font-family="sans-serif" font-size="11">"#,
            h = self.height
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text class="title" x="{}" y="20" font-size="14">{}</text>"#, MARGIN_LEFT, escape(title));
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn axes(out: &mut String, p: &Panel, name: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r##"<rect class="frame" x="{}" y="{}" width="{}" height="{PANEL_HEIGHT}" fill="none" stroke="#444"/>"##,
        fmt(Panel::left()),
        fmt(p.top),
        fmt(Panel::right() - Panel::left()),
    );
    let _ = writeln!(out, r#"<text class="panel-title" x="{}" y="{}">{}</text>"#, fmt(Panel::left()), fmt(p.top - 6.0), escape(name));
    let ticks = if p.log_y {
        vec![p.y_min, (p.y_min * p.y_max).sqrt(), p.y_max]
    } else {
        vec![p.y_min, 0.5 * (p.y_min + p.y_max), p.y_max]
    };
    for t in ticks {
        let label = if p.log_y || t.abs() >= 1e4 || (t != 0.0 && t.abs() < 1e-2) {
            format!("{t:.1e}")
        } else {
            format!("{t:.3}")
        };
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{}" y="{}" text-anchor="end">{label}</text>"#,
            fmt(Panel::left() - 4.0),
            fmt(p.y(t) + 4.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
        fmt(p.top + PANEL_HEIGHT / 2.0),
        fmt(p.top + PANEL_HEIGHT / 2.0),
        escape(y_label)
    );
    let _ = writeln!(
        out,
        r#"<text class="tick" x="{}" y="{}" text-anchor="end">update {}</text>"#,
        fmt(Panel::right()),
        fmt(p.top + PANEL_HEIGHT + 14.0),
        p.x_max
    );
}

/// Path through the finite points of `values`, broken at gaps.
fn trace_path(p: &Panel, values: &[f64]) -> String {
    let mut d = String::new();
    let mut pen_down = false;
    for (u, v) in values.iter().enumerate() {
        if !v.is_finite() || (p.log_y && *v <= 0.0) {
            pen_down = false;
            continue;
        }
        let _ = write!(d, "{}{} {} ", if pen_down { "L" } else { "M" }, fmt(p.x(u as f64)), fmt(p.y(*v)));
        pen_down = true;
    }
    d.trim_end().to_string()
}

fn trace(out: &mut String, p: &Panel, values: &[f64], class: &str, attrs: &str, style: &str) {
    let _ = writeln!(
        out,
        r#"<path class="{class}" {attrs} d="{}" fill="none" {style}/>"#,
        trace_path(p, values)
    );
}

fn band(out: &mut String, p: &Panel, stats: &SeriesStats, class: &str, attrs: &str, color: &str) {
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (u, (m, s)) in stats.mean.iter().zip(&stats.std).enumerate() {
        if m.is_finite() && s.is_finite() {
            upper.push(format!("{},{}", fmt(p.x(u as f64)), fmt(p.y(m + s))));
            lower.push(format!("{},{}", fmt(p.x(u as f64)), fmt(p.y(m - s))));
        }
    }
    lower.reverse();
    upper.extend(lower);
    let _ = writeln!(
        out,
        r#"<polygon class="{class}" {attrs} points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
        upper.join(" ")
    );
}

fn baseline(out: &mut String, p: &Panel, value: f64, label: &str) {
    let y = fmt(p.y(value));
    let _ = writeln!(
        out,
        r##"<line class="baseline" data-value="{value}" x1="{}" x2="{}" y1="{y}" y2="{y}" stroke="#555" stroke-dasharray="5 4"/>"##,
        fmt(Panel::left()),
        fmt(Panel::right()),
    );
    let _ = writeln!(
        out,
        r#"<text class="baseline-label" x="{}" y="{}" text-anchor="end">{}</text>"#,
        fmt(Panel::right() - 4.0),
        fmt(p.y(value) - 4.0),
        escape(label)
    );
}

fn legend(out: &mut String, top: f64, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let x = Panel::left() + 8.0 + 120.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text></g>"#,
            fmt(x),
            fmt(top + 6.0),
            fmt(x + 14.0),
            fmt(top + 15.0),
            escape(label)
        );
    }
}

/// A panel group with per-seed traces, the across-seed mean, and a ±1 std
/// band when there is more than one seed.
fn seed_panel(
    svg: &mut Svg,
    index: usize,
    name: &str,
    series: &[Vec<f64>],
    range: Option<(f64, f64)>,
    baseline_at: Option<(f64, &str)>,
) {
    let stats = SeriesStats::from_series(series);
    let x_max = stats.len().saturating_sub(1) as f64;
    let (y_min, y_max) = range.unwrap_or_else(|| padded_range(series.iter().flatten().copied()));
    let p = Panel {
        top: Svg::panel_top(index),
        x_max,
        y_min,
        y_max,
        log_y: false,
    };
    let out = &mut svg.body;
    let _ = writeln!(out, r#"<g class="panel" data-panel="{name}">"#);
    axes(out, &p, name, name);
    if series.len() > 1 {
        band(out, &p, &stats, "band", "", PALETTE[0]);
    }
    for (i, s) in series.iter().enumerate() {
        trace(out, &p, s, "seed-trace", &format!(r#"data-seed-index="{i}""#), r##"stroke="#9ab" stroke-width="0.8""##);
    }
    trace(out, &p, &stats.mean, "mean-trace", "", &format!(r#"stroke="{}" stroke-width="2""#, PALETTE[0]));
    if let Some((value, label)) = baseline_at {
        baseline(out, &p, value, label);
    }
    out.push_str("</g>\n");
}

/// Return, HackRate and router entropy for attention-mode runs.
pub fn triad_figure(runs: &[SeedRun]) -> Result<String> {
    require_runs(runs, "attention-mode")?;
    let k = head_count(runs)? as f64;
    let mut svg = Svg::new(3);
    let returns = column(runs, |r| r.mean_return);
    let hack = column(runs, |r| r.hack_rate.unwrap_or(f64::NAN));
    let entropy = column(runs, |r| r.router_entropy);
    seed_panel(&mut svg, 0, "return", &returns, None, None);
    seed_panel(&mut svg, 1, "hack_rate", &hack, Some((0.0, 1.0)), Some((1.0 / k, "random baseline 1/K")));
    seed_panel(
        &mut svg,
        2,
        "router_entropy",
        &entropy,
        Some((0.0, k.ln() * 1.08)),
        Some((k.ln(), "maximum entropy ln K")),
    );
    Ok(svg.finish(&format!("Attention routing diagnostics ({} seeds)", runs.len())))
}

/// The data behind the error-routing figure.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRoutingData {
    pub returns: SeriesStats,
    /// One entry per head.
    pub weights: Vec<SeriesStats>,
}

impl ErrorRoutingData {
    pub fn from_runs(runs: &[SeedRun]) -> Result<Self> {
        require_runs(runs, "error-mode")?;
        let k = head_count(runs)?;
        Ok(Self {
            returns: SeriesStats::from_series(&column(runs, |r| r.mean_return)),
            weights: (0..k)
                .map(|i| SeriesStats::from_series(&column(runs, |r| r.weight_means.get(i).copied().unwrap_or(f64::NAN))))
                .collect(),
        })
    }
}

/// Return and per-head mean routing weight, each with ±1 std bands.
pub fn error_routing_figure(runs: &[SeedRun], gammas: Option<&[f64]>) -> Result<String> {
    let data = ErrorRoutingData::from_runs(runs)?;
    let mut svg = Svg::new(2);
    let x_max = data.returns.len().saturating_sub(1) as f64;

    let (y_min, y_max) = padded_range(
        data.returns
            .mean
            .iter()
            .zip(&data.returns.std)
            .flat_map(|(m, s)| [m - s, m + s]),
    );
    let p = Panel {
        top: Svg::panel_top(0),
        x_max,
        y_min,
        y_max,
        log_y: false,
    };
    let out = &mut svg.body;
    let _ = writeln!(out, r#"<g class="panel" data-panel="return">"#);
    axes(out, &p, "return", "return");
    band(out, &p, &data.returns, "band", "", PALETTE[0]);
    trace(out, &p, &data.returns.mean, "mean-trace", "", &format!(r#"stroke="{}" stroke-width="2""#, PALETTE[0]));
    out.push_str("</g>\n");

    let p = Panel {
        top: Svg::panel_top(1),
        x_max,
        y_min: 0.0,
        y_max: 1.0,
        log_y: false,
    };
    let _ = writeln!(out, r#"<g class="panel" data-panel="weights">"#);
    axes(out, &p, "mean routing weight", "weight");
    let mut entries = Vec::new();
    for (i, w) in data.weights.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let attrs = format!(r#"data-head="{i}""#);
        band(out, &p, w, "weight-band", &attrs, color);
        trace(out, &p, &w.mean, "weight-trace", &attrs, &format!(r#"stroke="{color}" stroke-width="2""#));
        let label = match gammas.and_then(|g| g.get(i)) {
            Some(g) => format!("gamma={g}"),
            None => format!("head {i}"),
        };
        entries.push((label, color));
    }
    legend(out, p.top, &entries);
    out.push_str("</g>\n");
    Ok(svg.finish(&format!("Error-based routing ({} seeds)", runs.len())))
}

/// Reliability statistics for each named condition.
pub fn reliability_data(conditions: &[(String, Vec<SeedRun>)]) -> Result<Vec<(String, ReliabilitySummary)>> {
    conditions
        .iter()
        .map(|(name, runs)| {
            let curves: Vec<_> = runs.iter().map(SeedRun::curve).collect();
            reliability_summary(&curves, RELIABILITY_WINDOW)
                .map(|s| (name.clone(), s))
                .map_err(|e| LabError::Report(format!("{name}: {e}")))
        })
        .collect()
}

/// Per-seed final returns, mean ± std diamonds and worst-seed bars.
pub fn reliability_figure(conditions: &[(String, Vec<SeedRun>)]) -> Result<String> {
    if conditions.len() < 2 {
        return Err(LabError::Report(format!(
            "reliability figure needs at least two conditions, got {}",
            conditions.len()
        )));
    }
    let data = reliability_data(conditions)?;
    let mut svg = Svg::new(1);
    let (y_min, y_max) = padded_range(data.iter().flat_map(|(_, s)| {
        s.per_seed.iter().copied().chain([s.mean - s.std, s.mean + s.std])
    }));
    let p = Panel {
        top: Svg::panel_top(0),
        x_max: data.len() as f64,
        y_min,
        y_max,
        log_y: false,
    };
    let out = &mut svg.body;
    let _ = writeln!(out, r#"<g class="panel" data-panel="reliability">"#);
    axes(out, &p, "final return (last 10% of updates)", "return");
    for (i, (name, s)) in data.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = p.x(i as f64 + 0.5);
        let _ = writeln!(out, r#"<g class="condition" data-condition="{}">"#, escape(name));
        let _ = writeln!(
            out,
            r#"<line class="worst-bar" data-value="{}" x1="{}" x2="{}" y1="{y}" y2="{y}" stroke="{color}" stroke-width="4" stroke-opacity="0.6"/>"#,
            s.worst,
            fmt(cx - 60.0),
            fmt(cx + 60.0),
            y = fmt(p.y(s.worst)),
        );
        for (j, v) in s.per_seed.iter().enumerate() {
            let jitter = (j as f64 - (s.per_seed.len() as f64 - 1.0) / 2.0) * 6.0;
            let _ = writeln!(
                out,
                r#"<circle class="seed-point" data-value="{v}" cx="{}" cy="{}" r="3.5" fill="{color}" fill-opacity="0.7"/>"#,
                fmt(cx - 24.0 + jitter),
                fmt(p.y(*v))
            );
        }
        let _ = writeln!(
            out,
            r#"<line class="error-bar" data-low="{}" data-high="{}" x1="{x}" x2="{x}" y1="{}" y2="{}" stroke="black"/>"#,
            s.mean - s.std,
            s.mean + s.std,
            fmt(p.y(s.mean - s.std)),
            fmt(p.y(s.mean + s.std)),
            x = fmt(cx + 24.0),
        );
        let (dx, dy) = (cx + 24.0, p.y(s.mean));
        let _ = writeln!(
            out,
            r#"<path class="mean-marker" data-value="{}" d="M {} {} L {} {} L {} {} L {} {} Z" fill="black"/>"#,
            s.mean,
            fmt(dx),
            fmt(dy - 6.0),
            fmt(dx + 6.0),
            fmt(dy),
            fmt(dx),
            fmt(dy + 6.0),
            fmt(dx - 6.0),
            fmt(dy),
        );
        let _ = writeln!(
            out,
            r#"<text class="condition-label" x="{}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(cx),
            fmt(p.top + PANEL_HEIGHT + 14.0),
            escape(name)
        );
        out.push_str("</g>\n");
    }
    out.push_str("</g>\n");
    Ok(svg.finish("Final-return reliability across seeds"))
}

/// Long-head advantage variance per condition on a log axis. The curves are
/// shown side by side; no separation between them is implied.
pub fn variance_figure(conditions: &[(String, Vec<SeedRun>)]) -> Result<String> {
    if conditions.is_empty() {
        return Err(LabError::Report("variance figure needs at least one condition".into()));
    }
    let mut stats = Vec::new();
    for (name, runs) in conditions {
        require_runs(runs, name)?;
        stats.push((name, SeriesStats::from_series(&column(runs, |r| r.long_adv_var.unwrap_or(f64::NAN)))));
    }
    let positive = stats.iter().flat_map(|(_, s)| s.mean.iter().copied()).filter(|v| v.is_finite() && *v > 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in positive {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (lo, hi) = (1e-3, 1.0);
    }
    if hi / lo < 10.0 {
        lo /= 3.0;
        hi *= 3.0;
    }
    let x_max = stats.iter().map(|(_, s)| s.len()).max().unwrap_or(1).saturating_sub(1) as f64;
    let p = Panel {
        top: Svg::panel_top(0),
        x_max,
        y_min: lo,
        y_max: hi,
        log_y: true,
    };
    let mut svg = Svg::new(1);
    let out = &mut svg.body;
    let _ = writeln!(out, r#"<g class="panel" data-panel="long_adv_var">"#);
    axes(out, &p, "long-head advantage variance (seed mean)", "variance");
    let mut entries = Vec::new();
    for (i, (name, s)) in stats.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        trace(
            out,
            &p,
            &s.mean,
            "variance-trace",
            &format!(r#"data-condition="{}""#, escape(name)),
            &format!(r#"stroke="{color}" stroke-width="1.6""#),
        );
        entries.push((name.to_string(), color));
    }
    legend(out, p.top, &entries);
    out.push_str("</g>\n");
    Ok(svg.finish("Long-head advantage variance"))
}
