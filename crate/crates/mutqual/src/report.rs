//! Quality tables and SVG figures.
//!
//! Figures are plain SVG text with every coordinate rounded to two decimals,
//! so identical input produces identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mutqual_core::domain::MutantQuality;
use mutqual_core::selection::{
    compute_thresholds, label_quadrant, quadrant_counts, validate_holdout, Quadrant,
    QuadrantThresholds, SelectionReport,
};

use crate::error::{Error, Result};
use crate::pipeline::sanitize;
use crate::table::write_quality_csv;

/// Every styling constant used by the figures.
pub struct Style {
    pub width: f64,
    pub height: f64,
    pub margin_left: f64,
    pub margin_right: f64,
    pub margin_top: f64,
    pub margin_bottom: f64,
    pub font_family: &'static str,
    pub font_size: f64,
    pub title_size: f64,
    pub axis_color: &'static str,
    pub grid_color: &'static str,
    pub box_fill: &'static str,
    pub box_stroke: &'static str,
    pub median_color: &'static str,
    pub point_radius: f64,
    pub quadrant_colors: [&'static str; 4],
    pub bar_fill: &'static str,
    pub series_colors: [&'static str; 3],
}

pub const STYLE: Style = Style {
    width: 720.0,
    height: 440.0,
    margin_left: 64.0,
    margin_right: 150.0,
    margin_top: 40.0,
    margin_bottom: 70.0,
    font_family: "sans-serif",
    font_size: 11.0,
    title_size: 14.0,
    axis_color: "#333333",
    grid_color: "#dddddd",
    box_fill: "#9ecae1",
    box_stroke: "#3182bd",
    median_color: "#d62728",
    point_radius: 3.0,
    quadrant_colors: ["#2ca02c", "#ff7f0e", "#1f77b4", "#7f7f7f"],
    bar_fill: "#6baed6",
    series_colors: ["#1f77b4", "#2ca02c", "#d62728"],
};

/// Thresholds at which the retained-mutant and relative-change figures are drawn,
/// in addition to the selection's own.
pub const TAU_GRID: [f64; 3] = [0.20, 0.25, 0.30];

pub fn emit_quality_csv(path: &Path, qualities: &[MutantQuality]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(Error::io(path))?;
    write_quality_csv(std::io::BufWriter::new(file), qualities).map_err(Error::io(path))
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

struct Svg {
    buf: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let s = &STYLE;
        let mut buf = String::new();
        let _ = writeln!(
            buf,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"{f}\" font-size=\"{fs}\">",
            w = s.width,
            h = s.height,
            f = s.font_family,
            fs = s.font_size
        );
        let _ = writeln!(buf, "<rect x=\"0\" y=\"0\" width=\"{:.0}\" height=\"{:.0}\" fill=\"#ffffff\"/>", s.width, s.height);
        let mut svg = Svg { buf };
        svg.text(s.width / 2.0, s.margin_top / 2.0 + 5.0, "middle", s.title_size, title);
        svg
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.buf,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\"{extra}/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: &str) {
        let _ = writeln!(
            self.buf,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\" stroke=\"{stroke}\"/>"
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.buf,
            "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{fill}\" fill-opacity=\"0.7\"/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: f64, content: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-size=\"{size}\">{}</text>",
            escape_xml(content)
        );
    }

    fn rotated_text(&mut self, x: f64, y: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" transform=\"rotate(-45 {x:.2} {y:.2})\">{}</text>",
            escape_xml(content)
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        let mut pts = String::new();
        for (i, (x, y)) in points.iter().enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{x:.2},{y:.2}");
        }
        let _ = writeln!(
            self.buf,
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"2\"/>"
        );
    }

    fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// Linear mapping from data space onto the plot area.
#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn standard(lo: f64, hi: f64) -> Self {
        let s = &STYLE;
        Frame {
            x0: s.margin_left,
            x1: s.width - s.margin_right,
            y0: s.margin_top,
            y1: s.height - s.margin_bottom,
            lo,
            hi,
        }
    }

    fn y(&self, v: f64) -> f64 {
        let t = if self.hi > self.lo { (v - self.lo) / (self.hi - self.lo) } else { 0.5 };
        self.y1 - t * (self.y1 - self.y0)
    }

    fn x_unit(&self, v: f64) -> f64 {
        self.x0 + v * (self.x1 - self.x0)
    }

    /// Horizontal grid lines and tick labels on the y axis.
    fn y_axis(&self, svg: &mut Svg, label: &str, ticks: &[f64]) {
        let s = &STYLE;
        for &t in ticks {
            let y = self.y(t);
            svg.line(self.x0, y, self.x1, y, s.grid_color, "");
            svg.text(self.x0 - 6.0, y + 4.0, "end", s.font_size, &format!("{t:.2}"));
        }
        svg.line(self.x0, self.y0, self.x0, self.y1, s.axis_color, "");
        svg.line(self.x0, self.y1, self.x1, self.y1, s.axis_color, "");
        let (x, y) = (16.0, (self.y0 + self.y1) / 2.0);
        let _ = writeln!(
            svg.buf,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {x:.2} {y:.2})\">{}</text>",
            escape_xml(label)
        );
    }
}

const UNIT_TICKS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let reach = 1.5 * (q3 - q1);
    let inside = |x: &&f64| **x >= q1 - reach && **x <= q3 + reach;
    let whisker_lo = *v.iter().find(inside).expect("q1 lies inside");
    let whisker_hi = *v.iter().rev().find(inside).expect("q3 lies inside");
    let outliers = v.iter().copied().filter(|x| !inside(&x)).collect();
    Some(BoxStats {
        count: v.len(),
        q1,
        median,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
    })
}

/// Per-operator values of one metric, in operator order.
pub fn operator_groups(
    qualities: &[MutantQuality],
    dataset_id: &str,
    metric: impl Fn(&MutantQuality) -> Option<f64>,
) -> BTreeMap<String, Vec<f64>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for q in qualities.iter().filter(|q| q.dataset_id == dataset_id) {
        let entry = groups.entry(q.operator_id().to_string()).or_default();
        entry.extend(metric(q));
    }
    groups
}

fn box_plot_svg(title: &str, axis: &str, groups: &BTreeMap<String, Vec<f64>>) -> String {
    let s = &STYLE;
    let mut svg = Svg::new(title);
    let frame = Frame::standard(0.0, 1.0);
    frame.y_axis(&mut svg, axis, &UNIT_TICKS);
    let slot = (frame.x1 - frame.x0) / groups.len().max(1) as f64;
    let half = (slot * 0.3).min(24.0);
    for (i, (op, values)) in groups.iter().enumerate() {
        let cx = frame.x0 + slot * (i as f64 + 0.5);
        svg.rotated_text(cx, frame.y1 + 14.0, "end", &format!("{op} (n={})", values.len()));
        let Some(b) = box_stats(values) else { continue };
        let dashed = " stroke-dasharray=\"3,2\"";
        svg.line(cx, frame.y(b.whisker_lo), cx, frame.y(b.q1), s.box_stroke, dashed);
        svg.line(cx, frame.y(b.q3), cx, frame.y(b.whisker_hi), s.box_stroke, dashed);
        for w in [b.whisker_lo, b.whisker_hi] {
            svg.line(cx - half / 2.0, frame.y(w), cx + half / 2.0, frame.y(w), s.box_stroke, "");
        }
        let top = frame.y(b.q3);
        svg.rect(cx - half, top, 2.0 * half, frame.y(b.q1) - top, s.box_fill, s.box_stroke);
        svg.line(cx - half, frame.y(b.median), cx + half, frame.y(b.median), s.median_color, " stroke-width=\"2\"");
        for o in &b.outliers {
            svg.circle(cx, frame.y(*o), s.point_radius, s.box_stroke);
        }
    }
    svg.finish()
}

fn scatter_svg(title: &str, qualities: &[MutantQuality], th: &QuadrantThresholds) -> String {
    let s = &STYLE;
    let mut svg = Svg::new(title);
    let frame = Frame::standard(0.0, 1.0);
    frame.y_axis(&mut svg, "EQ", &UNIT_TICKS);
    for &t in &UNIT_TICKS {
        svg.text(frame.x_unit(t), frame.y1 + 16.0, "middle", s.font_size, &format!("{t:.2}"));
    }
    svg.text((frame.x0 + frame.x1) / 2.0, frame.y1 + 36.0, "middle", s.font_size, "IQ");
    for q in qualities {
        if let (Some(eq), Ok(label)) = (q.eq, label_quadrant(q, th)) {
            svg.circle(frame.x_unit(q.iq), frame.y(eq), s.point_radius, s.quadrant_colors[label.index()]);
        }
    }
    let dashed = " stroke-dasharray=\"6,3\" stroke-width=\"1.5\"";
    let mx = frame.x_unit(th.median_iq);
    svg.line(mx, frame.y0, mx, frame.y1, s.median_color, dashed);
    let my = frame.y(th.median_eq);
    svg.line(frame.x0, my, frame.x1, my, s.median_color, dashed);

    let counts = quadrant_counts(qualities, th);
    let lx = frame.x1 + 16.0;
    svg.text(lx, frame.y0 + 4.0, "start", s.font_size, "quadrant counts");
    for quadrant in Quadrant::ALL {
        let y = frame.y0 + 22.0 + 18.0 * quadrant.index() as f64;
        svg.circle(lx + 4.0, y - 4.0, s.point_radius + 1.0, s.quadrant_colors[quadrant.index()]);
        svg.text(lx + 14.0, y, "start", s.font_size, &format!("{}: {}", quadrant.as_str(), counts[quadrant.index()]));
    }
    svg.text(lx, frame.y0 + 100.0, "start", s.font_size, &format!("median IQ {:.3}", th.median_iq));
    svg.text(lx, frame.y0 + 118.0, "start", s.font_size, &format!("median EQ {:.3}", th.median_eq));
    svg.finish()
}

fn tau_values(selection: &SelectionReport) -> Vec<f64> {
    let mut taus: Vec<f64> = TAU_GRID.to_vec();
    if !taus.iter().any(|t| (t - selection.tau).abs() < 1e-12) {
        taus.push(selection.tau);
    }
    taus.sort_by(f64::total_cmp);
    taus
}

fn retained_mutants(qualities: &[MutantQuality], retained: &BTreeSet<String>) -> usize {
    qualities.iter().filter(|q| retained.contains(&q.family_id)).count()
}

fn retained_bar_svg(qualities: &[MutantQuality], selection: &SelectionReport) -> String {
    let s = &STYLE;
    let mut svg = Svg::new("Retained mutants by tau");
    let total = qualities.len();
    let hi = (total.max(1)) as f64;
    let frame = Frame::standard(0.0, hi);
    let ticks: Vec<f64> = (0..=4).map(|i| hi * i as f64 / 4.0).collect();
    frame.y_axis(&mut svg, "mutants", &[]);
    for t in ticks {
        let y = frame.y(t);
        svg.line(frame.x0, y, frame.x1, y, s.grid_color, "");
        svg.text(frame.x0 - 6.0, y + 4.0, "end", s.font_size, &format!("{t:.0}"));
    }
    let taus = tau_values(selection);
    let slot = (frame.x1 - frame.x0) / taus.len() as f64;
    for (i, &tau) in taus.iter().enumerate() {
        let kept = retained_mutants(qualities, &selection.retained_at(tau, selection.retention));
        let cx = frame.x0 + slot * (i as f64 + 0.5);
        let top = frame.y(kept as f64);
        svg.rect(cx - slot * 0.3, top, slot * 0.6, frame.y1 - top, s.bar_fill, s.box_stroke);
        svg.text(cx, top - 4.0, "middle", s.font_size, &kept.to_string());
        svg.text(cx, frame.y1 + 16.0, "middle", s.font_size, &format!("tau={tau:.2}"));
    }
    let by = frame.y(total as f64);
    svg.line(frame.x0, by, frame.x1, by, s.median_color, " stroke-dasharray=\"6,3\"");
    svg.text(frame.x1 + 6.0, by + 4.0, "start", s.font_size, &format!("all: {total}"));
    svg.finish()
}

fn relative_change_svg(qualities: &[MutantQuality], selection: &SelectionReport) -> String {
    let s = &STYLE;
    let mut svg = Svg::new("Relative change after selection");
    let taus = tau_values(selection);
    let series: Vec<[Option<f64>; 3]> = taus
        .iter()
        .map(|&tau| {
            let kept = selection.retained_at(tau, selection.retention);
            match validate_holdout(qualities, &kept) {
                Ok(v) => [v.relative_changes.median_iq, v.relative_changes.median_eq, v.relative_changes.hh],
                Err(_) => [None; 3],
            }
        })
        .collect();
    let extent = series
        .iter()
        .flatten()
        .flatten()
        .fold(0.1f64, |m, v| m.max(v.abs()));
    let frame = Frame::standard(-extent, extent);
    let ticks: Vec<f64> = (-2..=2).map(|i| extent * i as f64 / 2.0).collect();
    frame.y_axis(&mut svg, "relative change", &[]);
    for t in ticks {
        let y = frame.y(t);
        svg.line(frame.x0, y, frame.x1, y, s.grid_color, "");
        svg.text(frame.x0 - 6.0, y + 4.0, "end", s.font_size, &format!("{:+.0}%", t * 100.0));
    }
    let zero = frame.y(0.0);
    svg.line(frame.x0, zero, frame.x1, zero, s.axis_color, " stroke-dasharray=\"6,3\"");
    let slot = (frame.x1 - frame.x0) / taus.len() as f64;
    let x_at = |i: usize| frame.x0 + slot * (i as f64 + 0.5);
    for (i, tau) in taus.iter().enumerate() {
        svg.text(x_at(i), frame.y1 + 16.0, "middle", s.font_size, &format!("tau={tau:.2}"));
    }
    let names = ["median IQ", "median EQ", "HH proportion"];
    for (k, name) in names.iter().enumerate() {
        let color = s.series_colors[k];
        let points: Vec<(f64, f64)> = series
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row[k].map(|v| (x_at(i), frame.y(v))))
            .collect();
        if points.len() > 1 {
            svg.polyline(&points, color);
        }
        for (x, y) in &points {
            svg.circle(*x, *y, s.point_radius, color);
        }
        let ly = frame.y0 + 18.0 * k as f64 + 4.0;
        svg.line(frame.x1 + 12.0, ly - 4.0, frame.x1 + 30.0, ly - 4.0, color, " stroke-width=\"2\"");
        svg.text(frame.x1 + 36.0, ly, "start", s.font_size, name);
    }
    svg.finish()
}

fn write_figure(out_dir: &Path, name: String, content: String, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = out_dir.join(name);
    std::fs::write(&path, content).map_err(Error::io(&path))?;
    written.push(path);
    Ok(())
}

/// Thresholds for each dataset that has at least one EQ value.
pub fn figure_thresholds(qualities: &[MutantQuality]) -> BTreeMap<String, QuadrantThresholds> {
    let datasets: BTreeSet<&str> = qualities.iter().map(|q| q.dataset_id.as_str()).collect();
    datasets
        .into_iter()
        .filter_map(|d| compute_thresholds(qualities, d).ok().map(|t| (d.to_string(), t)))
        .collect()
}

/// Writes every figure into `out_dir` and returns the written paths in order.
///
/// Per dataset: `box_iq_<ds>.svg`, `box_eq_<ds>.svg` and, when thresholds are
/// given for it, `quadrant_<ds>.svg`. With a selection report also
/// `retained_by_tau.svg` and `relative_change.svg`.
pub fn emit_figures(
    qualities: &[MutantQuality],
    thresholds: &BTreeMap<String, QuadrantThresholds>,
    selection: Option<&SelectionReport>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if qualities.is_empty() {
        return Err(Error::EmptyInput);
    }
    std::fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let datasets: BTreeSet<&str> = qualities.iter().map(|q| q.dataset_id.as_str()).collect();
    let mut written = Vec::new();
    for ds in datasets {
        let file = sanitize(ds);
        let iq = operator_groups(qualities, ds, |q| Some(q.iq));
        write_figure(out_dir, format!("box_iq_{file}.svg"), box_plot_svg(&format!("IQ by operator: {ds}"), "IQ", &iq), &mut written)?;
        let eq = operator_groups(qualities, ds, |q| q.eq);
        write_figure(out_dir, format!("box_eq_{file}.svg"), box_plot_svg(&format!("EQ by operator: {ds}"), "EQ", &eq), &mut written)?;
        if let Some(th) = thresholds.get(ds) {
            let subset: Vec<MutantQuality> = qualities.iter().filter(|q| q.dataset_id == ds).cloned().collect();
            write_figure(out_dir, format!("quadrant_{file}.svg"), scatter_svg(&format!("IQ-EQ quadrants: {ds}"), &subset, th), &mut written)?;
        }
    }
    if let Some(sel) = selection {
        let labeled: Vec<MutantQuality> = qualities.iter().filter(|q| !q.family_id.is_empty()).cloned().collect();
        write_figure(out_dir, "retained_by_tau.svg".into(), retained_bar_svg(&labeled, sel), &mut written)?;
        write_figure(out_dir, "relative_change.svg".into(), relative_change_svg(&labeled, sel), &mut written)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let b = box_stats(&[0.0, 0.1, 0.2, 0.3, 1.0]).unwrap();
        assert_eq!(b.median, 0.2);
        assert!((b.q1 - 0.1).abs() < 1e-15 && (b.q3 - 0.3).abs() < 1e-15);
        assert_eq!(b.outliers, vec![1.0]);
        assert_eq!(b.whisker_hi, 0.3);
        assert!(box_stats(&[]).is_none());
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape_xml("a<b & 'c'"), "a&lt;b &amp; &apos;c&apos;");
    }
}
