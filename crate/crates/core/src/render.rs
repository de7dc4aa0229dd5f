//! SVG output for tours, simulation traces and force curves.

use std::fmt::Write as _;

use thiserror::Error;

use crate::instances::{CityInstance, Point};
use crate::ljf::LjfShape;
use crate::sim::Snapshot;
use crate::tour::Tour;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("invalid render spec: {0}")]
    InvalidSpec(String),
    #[error("trace has no snapshots")]
    EmptyTrace,
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("tour has {tour} cities but the instance has {instance}")]
    Mismatch { tour: usize, instance: usize },
}

/// Canvas size, styling and frame stride.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub margin: f64,
    pub point_radius: f64,
    pub stroke_width: f64,
    pub background: String,
    pub point_fill: String,
    pub path_stroke: String,
    pub wall_stroke: String,
    pub bubble_fill: String,
    /// Trace rendering keeps every `stride`-th snapshot.
    pub stride: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            width: 600,
            height: 600,
            margin: 20.0,
            point_radius: 4.0,
            stroke_width: 1.5,
            background: "#ffffff".into(),
            point_fill: "#c0392b".into(),
            path_stroke: "#2c3e50".into(),
            wall_stroke: "#7f8c8d".into(),
            bubble_fill: "#85c1e9".into(),
            stride: 1,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidSpec("width and height must be positive".into()));
        }
        if self.stride == 0 {
            return Err(RenderError::InvalidSpec("stride must be at least 1".into()));
        }
        let inner = f64::from(self.width.min(self.height)) - 2.0 * self.margin;
        if !(self.margin >= 0.0) || !(inner > 0.0) {
            return Err(RenderError::InvalidSpec("margin leaves no drawing area".into()));
        }
        if !(self.point_radius >= 0.0) || !(self.stroke_width >= 0.0) {
            return Err(RenderError::InvalidSpec("radii and widths must be non-negative".into()));
        }
        Ok(())
    }
}

/// Uniform map from a world box to the canvas, y pointing up.
struct Viewport {
    min: Point,
    scale: f64,
    offset: Point,
    height: f64,
}

impl Viewport {
    fn fit(min: Point, max: Point, spec: &RenderSpec) -> Self {
        let w = f64::from(spec.width) - 2.0 * spec.margin;
        let h = f64::from(spec.height) - 2.0 * spec.margin;
        let span_x = (max.x - min.x).max(f64::MIN_POSITIVE);
        let span_y = (max.y - min.y).max(f64::MIN_POSITIVE);
        let scale = if max.x - min.x == 0.0 && max.y - min.y == 0.0 { 1.0 } else { (w / span_x).min(h / span_y) };
        let offset = Point::new(
            spec.margin + 0.5 * (w - (max.x - min.x) * scale),
            spec.margin + 0.5 * (h - (max.y - min.y) * scale),
        );
        Self { min, scale, offset, height: f64::from(spec.height) }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        let x = self.offset.x + (p.x - self.min.x) * self.scale;
        let y = self.height - (self.offset.y + (p.y - self.min.y) * self.scale);
        (x, y)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(spec: &RenderSpec, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="{}"/>"#, spec.width, spec.height, escape(&spec.background));
    s
}

fn bounds(points: impl IntoIterator<Item = Point>) -> Option<(Point, Point)> {
    let mut it = points.into_iter();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), p| {
        (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y)))
    }))
}

/// Cities as dots joined by the closed tour.
pub fn render_tour_svg(inst: &CityInstance, tour: &Tour, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    if tour.order().len() != inst.len() {
        return Err(RenderError::Mismatch { tour: tour.order().len(), instance: inst.len() });
    }
    let (min, max) = bounds(inst.cities().iter().copied()).ok_or(RenderError::NonFinite)?;
    let vp = Viewport::fit(min, max, spec);
    let mut s = open(spec, &format!("{} cost={:.3}", inst.name(), tour.cost()));
    let mut d = String::new();
    for (k, &i) in tour.order().iter().enumerate() {
        let (x, y) = vp.map(inst.cities()[i]);
        let _ = write!(d, "{}{x:.3},{y:.3} ", if k == 0 { "M" } else { "L" });
    }
    d.push('Z');
    let _ = writeln!(
        s,
        r#"<path d="{d}" fill="none" stroke="{}" stroke-width="{}" stroke-linejoin="round"/>"#,
        escape(&spec.path_stroke),
        spec.stroke_width
    );
    let _ = writeln!(s, r#"<g fill="{}">"#, escape(&spec.point_fill));
    for p in inst.cities() {
        let (x, y) = vp.map(*p);
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{}"/>"#, spec.point_radius);
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

/// One frame per `spec.stride` snapshots (the first snapshot is always
/// kept). All frames share the same viewport, centred on the origin.
pub fn render_trace_svgs(trace: &[Snapshot], spec: &RenderSpec) -> Result<Vec<(u64, String)>, RenderError> {
    spec.validate()?;
    if trace.is_empty() {
        return Err(RenderError::EmptyTrace);
    }
    let mut extent: f64 = 0.0;
    for snap in trace {
        if !snap.r_outer.is_finite() || !snap.r_inner.is_finite() {
            return Err(RenderError::NonFinite);
        }
        extent = extent.max(snap.r_outer);
        for p in &snap.positions {
            if !p.is_finite() {
                return Err(RenderError::NonFinite);
            }
            extent = extent.max(p.x.abs()).max(p.y.abs());
        }
    }
    let extent = if extent > 0.0 { extent } else { 1.0 };
    let vp = Viewport::fit(Point::new(-extent, -extent), Point::new(extent, extent), spec);
    Ok(trace.iter().step_by(spec.stride).map(|snap| (snap.step, trace_frame(snap, &vp, spec))).collect())
}

fn trace_frame(snap: &Snapshot, vp: &Viewport, spec: &RenderSpec) -> String {
    let mut s = open(spec, &format!("step {}", snap.step));
    let (cx, cy) = vp.map(Point::ORIGIN);
    let _ = writeln!(s, r#"<g fill="none" stroke="{}" stroke-width="{}">"#, escape(&spec.wall_stroke), spec.stroke_width);
    let _ = writeln!(s, r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{:.3}"/>"#, snap.r_outer * vp.scale);
    if snap.r_inner > 0.0 {
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{:.3}" stroke-dasharray="4 3"/>"#,
            snap.r_inner * vp.scale
        );
    }
    s.push_str("</g>\n");
    if !snap.bubbles.is_empty() {
        let _ = writeln!(s, r#"<g fill="{}" fill-opacity="0.5">"#, escape(&spec.bubble_fill));
        for b in &snap.bubbles {
            let (x, y) = vp.map(b.center);
            let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{:.3}"/>"#, b.radius * vp.scale);
        }
        s.push_str("</g>\n");
    }
    let _ = writeln!(s, r#"<g fill="{}">"#, escape(&spec.point_fill));
    for p in &snap.positions {
        let (x, y) = vp.map(*p);
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="{}"/>"#, spec.point_radius);
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="12">step {}</text>"#,
        spec.margin,
        spec.margin,
        snap.step
    );
    s.push_str("</svg>\n");
    s
}

/// Force curve `F(r)` on `(0, r_max]`, with the axis `F = 0` and markers at
/// `L` and `r_min`. The vertical range is clipped to a few multiples of `M`
/// so the repulsive branch near zero does not flatten the plot.
pub fn render_ljf_svg(shape: &LjfShape, r_max: f64, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.validate()?;
    if !(r_max > shape.l) || !r_max.is_finite() {
        return Err(RenderError::InvalidSpec("r_max must exceed L".into()));
    }
    const SAMPLES: usize = 400;
    let r_lo = 0.5 * shape.l;
    let clip = 4.0 * shape.m;
    let pts: Vec<Point> = (0..=SAMPLES)
        .map(|k| {
            let r = r_lo + (r_max - r_lo) * k as f64 / SAMPLES as f64;
            let f = shape.force(r);
            Point::new(r, if f.is_finite() { f.clamp(-clip, clip) } else { clip })
        })
        .collect();
    let (mut min, mut max) = bounds(pts.iter().copied()).ok_or(RenderError::NonFinite)?;
    min.x = 0.0;
    min.y = min.y.min(-1.05 * shape.m);
    max.y = max.y.max(0.0);
    let vp = Viewport::fit(min, max, spec);
    let mut s = open(spec, &format!("F(r) L={} r_min={} M={} delta={}", shape.l, shape.r_min, shape.m, shape.delta));
    let (x0, y0) = vp.map(Point::new(0.0, 0.0));
    let (x1, _) = vp.map(Point::new(r_max, 0.0));
    let _ = writeln!(
        s,
        r#"<line x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y0:.3}" stroke="{}" stroke-width="1"/>"#,
        escape(&spec.wall_stroke)
    );
    for (label, r) in [("L", shape.l), ("r_min", shape.r_min)] {
        let (x, y) = vp.map(Point::new(r, 0.0));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="{}" stroke-dasharray="3 3"/>"#,
            spec.margin,
            f64::from(spec.height) - spec.margin,
            escape(&spec.wall_stroke)
        );
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" font-family="monospace" font-size="12">{label}</text>"#, x + 3.0, y - 4.0);
    }
    let mut d = String::new();
    for (k, p) in pts.iter().enumerate() {
        let (x, y) = vp.map(*p);
        let _ = write!(d, "{}{x:.3},{y:.3} ", if k == 0 { "M" } else { "L" });
    }
    let _ = writeln!(
        s,
        r#"<path d="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
        d.trim_end(),
        escape(&spec.path_stroke),
        spec.stroke_width
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_grid;
    use crate::sim::Bubble;

    #[test]
    fn spec_validation() {
        assert!(RenderSpec::default().validate().is_ok());
        assert!(RenderSpec { stride: 0, ..RenderSpec::default() }.validate().is_err());
        assert!(RenderSpec { width: 0, ..RenderSpec::default() }.validate().is_err());
        assert!(RenderSpec { margin: 400.0, ..RenderSpec::default() }.validate().is_err());
    }

    #[test]
    fn tour_svg_has_all_cities() {
        let inst = gen_grid(3, 3).unwrap();
        let tour = Tour::new(&inst, (0..9).collect()).unwrap();
        let svg = render_tour_svg(&inst, &tour, &RenderSpec::default()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 9);
        assert!(svg.contains("Z\""));
    }

    #[test]
    fn trace_stride() {
        let snap = |step| Snapshot {
            step,
            positions: vec![Point::new(0.5, 0.0), Point::new(-0.5, 0.2)],
            r_inner: 0.1,
            r_outer: 1.05,
            bubbles: vec![Bubble { center: Point::ORIGIN, radius: 0.2 }],
        };
        let trace: Vec<Snapshot> = (0..5).map(snap).collect();
        let frames = render_trace_svgs(&trace, &RenderSpec { stride: 2, ..RenderSpec::default() }).unwrap();
        assert_eq!(frames.iter().map(|f| f.0).collect::<Vec<_>>(), [0, 2, 4]);
        assert_eq!(frames[0].1.matches("<circle").count(), 2 + 2 + 1);
        assert_eq!(render_trace_svgs(&[], &RenderSpec::default()), Err(RenderError::EmptyTrace));
    }

    #[test]
    fn title_is_escaped() {
        let inst = CityInstance::new("a<b&c", vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)])
            .unwrap();
        let tour = Tour::new(&inst, vec![0, 1, 2]).unwrap();
        let svg = render_tour_svg(&inst, &tour, &RenderSpec::default()).unwrap();
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
