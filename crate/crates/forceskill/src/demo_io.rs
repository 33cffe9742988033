//! Demonstration log files.
//!
//! One sample per line, whitespace or comma separated, in this order:
//!
//! | field | count | unit |
//! |-------|-------|------|
//! | `t` | 1 | s |
//! | `x` | 7 | end-effector position (m) and orientation quaternion `w x y z` |
//! | `dx` | 6 | linear (m/s) and angular (rad/s) velocity, global frame |
//! | `ddx` | 6 | linear (m/s²) and angular (rad/s²) acceleration, global frame |
//! | `f` | 6 | force (N) and torque (N·m) applied by the environment, global frame |
//! | `p` | 7 | object position and orientation, as `x` |
//!
//! `ddx` may be left out of every line of a demonstration (27 fields), in
//! which case it is recomputed from the twist. Lines starting with `#` are
//! comments; `# demo: <id>` starts a new demonstration, so a file may hold
//! several.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use forceskill_core::demo::{fill_accelerations, Demonstration, ObservationPoint};
use forceskill_core::manifold::Pose;
use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{io_err, IoError, Result};

pub const FIELDS: usize = 33;
pub const FIELDS_WITHOUT_ACCEL: usize = 27;
pub const EXTENSION: &str = "demo";

const QUAT_TOLERANCE: f64 = 1e-6;

fn parse_pose(v: &[f64]) -> std::result::Result<Pose, String> {
    let q = Quaternion::new(v[3], v[4], v[5], v[6]);
    let n = q.norm();
    if (n - 1.0).abs() > QUAT_TOLERANCE {
        return Err(format!("quaternion norm {n} is not 1"));
    }
    let q = if n == 1.0 { UnitQuaternion::new_unchecked(q) } else { UnitQuaternion::new_normalize(q) };
    Ok(Pose::new(Vector3::new(v[0], v[1], v[2]), q))
}

fn parse_line(line: &str) -> std::result::Result<(ObservationPoint, bool), String> {
    let values = line
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect::<std::result::Result<Vec<f64>, String>>()?;
    let has_accel = match values.len() {
        FIELDS => true,
        FIELDS_WITHOUT_ACCEL => false,
        n => return Err(format!("expected {FIELDS} or {FIELDS_WITHOUT_ACCEL} fields, found {n}")),
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(format!("field {} is not finite", i + 1));
    }
    let six = |at: usize| Vector6::from_column_slice(&values[at..at + 6]);
    let (accel, rest) = if has_accel { (six(14), 20) } else { (Vector6::zeros(), 14) };
    Ok((
        ObservationPoint {
            time: values[0],
            pose: parse_pose(&values[1..8])?,
            twist: six(8),
            accel,
            wrench: six(rest),
            object: parse_pose(&values[rest + 6..rest + 13])?,
        },
        has_accel,
    ))
}

struct Block {
    id: String,
    first_line: usize,
    points: Vec<ObservationPoint>,
    accel: Option<bool>,
}

/// Parses the demonstrations of one file. `default_id` names a leading block
/// without a `# demo:` header.
pub fn parse_demos(text: &str, default_id: &str, path: &Path) -> Result<Vec<Demonstration>> {
    let err = |line: usize, message: String| IoError::Parse { path: path.to_path_buf(), line, message };
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("demo:") {
                blocks.push(Block { id: id.trim().to_string(), first_line: line_no, points: vec![], accel: None });
            }
            continue;
        }
        if blocks.is_empty() {
            blocks.push(Block { id: default_id.to_string(), first_line: line_no, points: vec![], accel: None });
        }
        let block = blocks.last_mut().expect("a block exists");
        let (p, has_accel) = parse_line(line).map_err(|m| err(line_no, m))?;
        match block.accel {
            None => block.accel = Some(has_accel),
            Some(a) if a != has_accel => {
                return Err(err(line_no, "accelerations present on some lines only".into()));
            }
            _ => {}
        }
        block.points.push(p);
    }
    blocks
        .into_iter()
        .filter(|b| !b.points.is_empty())
        .map(|mut b| {
            if b.accel == Some(false) {
                fill_accelerations(&mut b.points);
            }
            Demonstration::new(b.id, b.points).map_err(|e| err(b.first_line, e.to_string()))
        })
        .collect()
}

fn push_fields(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for v in values {
        // Debug formatting is the shortest representation that reads back exactly
        let _ = write!(out, " {v:?}");
    }
}

fn pose_fields(p: &Pose) -> [f64; 7] {
    let q = p.orientation.quaternion();
    [p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k]
}

/// Serializes demonstrations with full precision.
pub fn write_demos(demos: &[Demonstration]) -> String {
    let mut out = String::from("# forceskill demonstration log\n# t x(7) dx(6) ddx(6) f(6) p(7)\n");
    for d in demos {
        let _ = writeln!(out, "# demo: {}", d.id);
        for p in &d.points {
            let _ = write!(out, "{:?}", p.time);
            push_fields(&mut out, pose_fields(&p.pose));
            push_fields(&mut out, p.twist.iter().copied());
            push_fields(&mut out, p.accel.iter().copied());
            push_fields(&mut out, p.wrench.iter().copied());
            push_fields(&mut out, pose_fields(&p.object));
            out.push('\n');
        }
    }
    out
}

pub fn load_demo_file(path: &Path) -> Result<Vec<Demonstration>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("demo");
    parse_demos(&text, stem, path)
}

pub fn save_demo_file(path: &Path, demos: &[Demonstration]) -> Result<()> {
    fs::write(path, write_demos(demos)).map_err(io_err(path))
}

/// Demonstration files of a directory, sorted by name.
pub fn demo_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Err(IoError::NoDemonstrations(dir.to_path_buf())),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == EXTENSION) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// All demonstrations of a directory (or of a single file).
pub fn load_demos(path: &Path) -> Result<Vec<Demonstration>> {
    let files = if path.is_file() { vec![path.to_path_buf()] } else { demo_files(path)? };
    let mut demos = Vec::new();
    for f in &files {
        demos.extend(load_demo_file(f)?);
    }
    if demos.is_empty() {
        return Err(IoError::NoDemonstrations(path.to_path_buf()));
    }
    Ok(demos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> String {
        let mut v = vec!["0.5".to_string()];
        v.extend(["0.1", "0.2", "0.3", "1", "0", "0", "0"].map(String::from));
        v.extend(std::iter::repeat_n("0".to_string(), n - 15));
        v.extend(["0", "0", "0", "1", "0", "0", "0"].map(String::from));
        v.join(" ")
    }

    #[test]
    fn field_counts() {
        assert!(parse_line(&line(FIELDS)).unwrap().1);
        assert!(!parse_line(&line(FIELDS_WITHOUT_ACCEL)).unwrap().1);
        assert!(parse_line(&line(30)).unwrap_err().contains("expected 33 or 27"));
    }

    #[test]
    fn non_unit_quaternion_is_rejected() {
        let l = line(FIELDS).replacen(" 1 ", " 2 ", 1);
        assert!(parse_line(&l).unwrap_err().contains("quaternion"));
    }

    #[test]
    fn bad_number_names_the_token() {
        let l = line(FIELDS).replacen("0.2", "zero", 1);
        assert!(parse_line(&l).unwrap_err().contains("`zero`"));
    }
}
