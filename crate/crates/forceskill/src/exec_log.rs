//! Execution log files.
//!
//! One tick per line. The first 33 columns follow the demonstration format
//! (`t x dx ddx f p`), then:
//!
//! | field | count | meaning |
//! |-------|-------|---------|
//! | `F` | 6 | commanded wrench |
//! | `y` | 7 | reference attractor pose |
//! | `va` | 7 | virtual attractor pose |
//! | `component` | 1 | active component, `-1` during a transition |
//! | `stiffness` | 1 | id of the stiffness in use |
//! | `replan` | 1 | `0`, or the reason of a replan adopted at this tick: `1` scene, `2` deviation, `3` wrench |
//!
//! Position-only models are written with an identity orientation and zero
//! angular terms. Header comments carry the outcome and the replanning events.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use forceskill_core::execution::{ExecutionLog, Outcome, ReplanReason};
use forceskill_core::manifold::{Geometry, Pose, Vector};
use forceskill_core::sequencing::TRANSITION;

use crate::error::{io_err, IoError, Result};

pub const COLUMNS: usize = 33 + 6 + 7 + 7 + 3;

fn pose7(geometry: &Geometry, v: &Vector) -> [f64; 7] {
    match geometry {
        Geometry::Pose => std::array::from_fn(|i| v[i]),
        Geometry::Euclidean(_) => {
            let mut p = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
            for (i, x) in v.iter().take(3).enumerate() {
                p[i] = *x;
            }
            p
        }
    }
}

fn six(v: &Vector) -> [f64; 6] {
    std::array::from_fn(|i| v.get(i).copied().unwrap_or(0.0))
}

fn reason_code(r: ReplanReason) -> u8 {
    match r {
        ReplanReason::SceneChange => 1,
        ReplanReason::Deviation => 2,
        ReplanReason::Wrench => 3,
    }
}

pub fn outcome_str(o: &Outcome) -> String {
    match o {
        Outcome::GoalReached => "goal_reached".into(),
        Outcome::HorizonExhausted => "horizon_exhausted".into(),
        Outcome::Aborted(m) => format!("aborted: {m}"),
    }
}

fn segments_str(segs: &[(usize, usize)]) -> String {
    segs.iter().map(|(k, d)| format!("{k}x{d}")).collect::<Vec<_>>().join(",")
}

pub fn write_log(log: &ExecutionLog) -> String {
    let mut out = String::from("# forceskill execution log\n");
    let _ = writeln!(out, "# dt: {:?}", log.dt);
    let _ = writeln!(out, "# outcome: {}", outcome_str(&log.outcome));
    let _ = writeln!(out, "# plan: {}", segments_str(&log.initial_segments));
    for r in &log.replans {
        let _ = writeln!(
            out,
            "# replan: tick={} reason={} transition={} plan={}",
            r.tick,
            r.reason.as_str(),
            r.transition_steps,
            segments_str(&r.segments)
        );
    }
    out.push_str("# t x(7) dx(6) ddx(6) f(6) p(7) F(6) y(7) va(7) component stiffness replan\n");
    let g = &log.geometry;
    let mut replans = log.replans.iter().peekable();
    for (i, t) in log.ticks.iter().enumerate() {
        let mut flag = 0;
        while let Some(r) = replans.peek() {
            if r.tick == i {
                flag = reason_code(r.reason);
                replans.next();
            } else {
                break;
            }
        }
        let q = t.object.orientation.quaternion();
        let object = [t.object.position.x, t.object.position.y, t.object.position.z, q.w, q.i, q.j, q.k];
        let _ = write!(out, "{:?}", t.time);
        let fields = pose7(g, &t.pose)
            .into_iter()
            .chain(six(&t.twist))
            .chain(six(&t.accel))
            .chain(six(&t.wrench))
            .chain(object)
            .chain(six(&t.command))
            .chain(pose7(g, &t.reference))
            .chain(pose7(g, &t.virtual_attractor));
        for v in fields {
            let _ = write!(out, " {v:?}");
        }
        let component = if t.component == TRANSITION { -1 } else { t.component as i64 };
        let _ = writeln!(out, " {component} {} {flag}", t.stiffness_id);
    }
    out
}

pub fn save_log(path: &Path, log: &ExecutionLog) -> Result<()> {
    fs::write(path, write_log(log)).map_err(io_err(path))
}

/// One parsed tick.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub time: f64,
    pub pose: Pose,
    pub wrench: [f64; 6],
    pub command: [f64; 6],
    pub reference: [f64; 7],
    pub component: Option<usize>,
    pub stiffness_id: usize,
    pub replan: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogFile {
    pub outcome: String,
    pub rows: Vec<LogRow>,
}

pub fn parse_log(text: &str, path: &Path) -> Result<LogFile> {
    let err = |line: usize, message: String| IoError::Parse { path: path.to_path_buf(), line, message };
    let mut outcome = String::new();
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(o) = c.trim().strip_prefix("outcome:") {
                outcome = o.trim().to_string();
            }
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(i + 1, format!("`{s}` is not a number"))))
            .collect::<Result<_>>()?;
        if v.len() != COLUMNS {
            return Err(err(i + 1, format!("expected {COLUMNS} fields, found {}", v.len())));
        }
        let p = |a: usize| -> [f64; 7] { std::array::from_fn(|j| v[a + j]) };
        let s = |a: usize| -> [f64; 6] { std::array::from_fn(|j| v[a + j]) };
        let x = p(1);
        let q = nalgebra::Quaternion::new(x[3], x[4], x[5], x[6]);
        rows.push(LogRow {
            time: v[0],
            pose: Pose::new(nalgebra::Vector3::new(x[0], x[1], x[2]), nalgebra::UnitQuaternion::new_normalize(q)),
            wrench: s(20),
            command: s(33),
            reference: p(39),
            component: if v[53] < 0.0 { None } else { Some(v[53] as usize) },
            stiffness_id: v[54] as usize,
            replan: v[55] as u8,
        });
    }
    Ok(LogFile { outcome, rows })
}

pub fn load_log(path: &Path) -> Result<LogFile> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_log(&text, path)
}
