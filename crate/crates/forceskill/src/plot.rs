//! Deterministic SVG figures with a CSV of the plotted series.

use std::fmt::Write as _;

use forceskill_core::demo::Demonstration;
use forceskill_core::skill::SkillModel;

use crate::exec_log::LogFile;

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 220.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const GAP: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a step line (value held until the next point).
    pub step: bool,
    pub dashed: bool,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, step: false, dashed: false }
    }

    pub fn step(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, step: true, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
    /// x positions of vertical markers.
    pub markers: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub panels: Vec<Panel>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Tick step from {1, 2, 5} × 10^k giving about five ticks.
fn tick_step(lo: f64, hi: f64) -> f64 {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let m = raw / mag;
    let f = if m < 1.5 {
        1.0
    } else if m < 3.5 {
        2.0
    } else if m < 7.5 {
        5.0
    } else {
        10.0
    };
    f * mag
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.starts_with("-") && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    fn x_bounds(&self) -> (f64, f64) {
        bounds(self.panels.iter().flat_map(|p| {
            p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0)).chain(p.markers.iter().copied())
        }))
    }

    pub fn height(&self) -> f64 {
        TOP + self.panels.len() as f64 * (PANEL_HEIGHT + GAP)
    }

    pub fn to_svg(&self) -> String {
        let mut o = String::new();
        let h = self.height();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{h}" viewBox="0 0 {WIDTH} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{h}" fill="white"/>"#);
        let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, esc(&self.title));
        let (x0, x1) = self.x_bounds();
        let xs = tick_step(x0, x1);
        let pw = WIDTH - LEFT - RIGHT;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        for (pi, panel) in self.panels.iter().enumerate() {
            let top = TOP + pi as f64 * (PANEL_HEIGHT + GAP);
            let (y0, y1) = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|q| q.1)));
            let ys = tick_step(y0, y1);
            let sy = |y: f64| top + PANEL_HEIGHT - (y - y0) / (y1 - y0) * PANEL_HEIGHT;
            let _ = writeln!(
                o,
                r##"<rect x="{LEFT}" y="{top}" width="{pw}" height="{PANEL_HEIGHT}" fill="none" stroke="#444"/>"##
            );
            let mut t = (y0 / ys).ceil() * ys;
            while t <= y1 + 1e-9 * ys {
                let y = sy(t);
                let _ = writeln!(o, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
                let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 5.0, y + 4.0, tick_label(t, ys));
                t += ys;
            }
            let mut t = (x0 / xs).ceil() * xs;
            while t <= x1 + 1e-9 * xs {
                let x = sx(t);
                let yb = top + PANEL_HEIGHT;
                let _ = writeln!(o, r##"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/>"##, yb + 4.0);
                let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, yb + 16.0, tick_label(t, xs));
                t += xs;
            }
            let _ = writeln!(
                o,
                r#"<text x="15" y="{:.2}" transform="rotate(-90 15 {:.2})" text-anchor="middle">{}</text>"#,
                top + PANEL_HEIGHT / 2.0,
                top + PANEL_HEIGHT / 2.0,
                esc(&panel.y_label)
            );
            for m in &panel.markers {
                let x = sx(*m);
                let _ = writeln!(
                    o,
                    r##"<line x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="2,3"/>"##,
                    top + PANEL_HEIGHT
                );
            }
            for (si, s) in panel.series.iter().enumerate() {
                let color = PALETTE[si % PALETTE.len()];
                let mut pts = String::new();
                let mut prev: Option<(f64, f64)> = None;
                for &(x, y) in &s.points {
                    if s.step {
                        if let Some((_, py)) = prev {
                            let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(py));
                        }
                    }
                    let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
                    prev = Some((x, y));
                }
                let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
                let _ = writeln!(
                    o,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    pts.trim_end()
                );
                let ly = top + 14.0 + si as f64 * 14.0;
                let lx = LEFT + pw - 150.0;
                let _ = writeln!(o, r#"<line x1="{lx}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, ly - 4.0, lx + 20.0, ly - 4.0);
                let _ = writeln!(o, r#"<text x="{}" y="{ly:.2}">{}</text>"#, lx + 25.0, esc(&s.name));
            }
        }
        let _ = writeln!(o, r#"<text x="{}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, h - 12.0, esc(&self.x_label));
        o.push_str("</svg>\n");
        o
    }

    /// Long-format CSV: `panel,series,x,y`.
    pub fn to_csv(&self) -> String {
        let mut o = String::from("panel,series,x,y\n");
        for p in &self.panels {
            for s in &p.series {
                for (x, y) in &s.points {
                    let _ = writeln!(o, "{},{},{x:?},{y:?}", p.y_label, s.name);
                }
            }
        }
        o
    }
}

const AXES: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];

/// Demonstration, its attractor and an execution along one axis, with the
/// matching force.
pub fn trajectory_figure(demo: &Demonstration, attractor: &[[f64; 3]], log: Option<&LogFile>, axis: usize) -> Figure {
    let axis = axis.min(2);
    let t0 = demo.points[0].time;
    let name = AXES[axis];
    let mut pos = vec![
        Series::line("demonstration", demo.points.iter().map(|p| (p.time - t0, p.pose.position[axis])).collect()),
        Series::line("attractor", demo.points.iter().zip(attractor).map(|(p, a)| (p.time - t0, a[axis])).collect()).dashed(),
    ];
    let mut force = vec![Series::line("demonstration", demo.points.iter().map(|p| (p.time - t0, p.wrench[axis])).collect())];
    if let Some(l) = log {
        pos.push(Series::line("execution", l.rows.iter().map(|r| (r.time, r.pose.position[axis])).collect()));
        pos.push(Series::line("reference", l.rows.iter().map(|r| (r.time, r.reference[axis])).collect()).dashed());
        force.push(Series::line("execution", l.rows.iter().map(|r| (r.time, r.wrench[axis])).collect()));
    }
    Figure {
        title: format!("{name} trajectory: {}", demo.id),
        x_label: "time (s)".into(),
        panels: vec![
            Panel { y_label: format!("position {name} (m)"), series: pos, markers: vec![] },
            Panel { y_label: format!("force {name} (N)"), series: force, markers: vec![] },
        ],
    }
}

/// Stiffness diagonal per tangent dimension, over an execution if given or
/// over the component index otherwise.
pub fn stiffness_figure(skill: &SkillModel, log: Option<&LogFile>) -> Figure {
    let k = &skill.stiffness.stiffness;
    let n = k.first().map_or(0, |m| m.nrows());
    let series = (0..n)
        .map(|d| {
            let pts = match log {
                Some(l) => l.rows.iter().map(|r| (r.time, k[r.stiffness_id.min(k.len() - 1)][(d, d)])).collect(),
                None => {
                    let mut v: Vec<(f64, f64)> = k.iter().enumerate().map(|(i, m)| (i as f64, m[(d, d)])).collect();
                    if let Some(&(_, last)) = v.last() {
                        v.push((k.len() as f64, last));
                    }
                    v
                }
            };
            Series::step(format!("K {}", AXES.get(d).copied().unwrap_or("?")), pts)
        })
        .collect();
    Figure {
        title: "stiffness profile".into(),
        x_label: if log.is_some() { "time (s)".into() } else { "component".into() },
        panels: vec![Panel { y_label: "stiffness (N/m, N·m/rad)".into(), series, markers: vec![] }],
    }
}

/// Position and active component over an execution, with replanning marks.
pub fn adaptation_figure(log: &LogFile) -> Figure {
    let markers: Vec<f64> = log.rows.iter().filter(|r| r.replan != 0).map(|r| r.time).collect();
    let mut pos = Vec::new();
    for (a, name) in AXES.iter().enumerate().take(3) {
        pos.push(Series::line(format!("{name} executed"), log.rows.iter().map(|r| (r.time, r.pose.position[a])).collect()));
    }
    for (a, name) in AXES.iter().enumerate().take(3) {
        pos.push(Series::line(format!("{name} reference"), log.rows.iter().map(|r| (r.time, r.reference[a])).collect()).dashed());
    }
    let comp = Series::step(
        "component",
        log.rows.iter().map(|r| (r.time, r.component.map_or(-1.0, |c| c as f64))).collect(),
    );
    Figure {
        title: format!("adaptation timeline ({})", log.outcome),
        x_label: "time (s)".into(),
        panels: vec![
            Panel { y_label: "position (m)".into(), series: pos, markers: markers.clone() },
            Panel { y_label: "component (-1 transition)".into(), series: vec![comp], markers },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(0.0, 10.0), 2.0);
        assert_eq!(tick_step(0.0, 0.1), 0.02);
        assert_eq!(tick_label(0.04, 0.02), "0.04");
        assert_eq!(tick_label(-0.0, 0.5), "0.0");
    }

    #[test]
    fn flat_series_gets_a_range() {
        let (lo, hi) = bounds([3.0, 3.0].into_iter());
        assert!(lo < 3.0 && hi > 3.0);
    }
}
