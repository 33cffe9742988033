//! Multi-modal demonstrations, scenes and frame projection.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{Vector3, Vector6};

use crate::error::{invalid, Error, Result};
use crate::manifold::{Frame, Geometry, Pose, Vector};

/// Frame name for the robot pose at the first sample.
pub const ROBOT_FRAME: &str = "robot";
/// Frame name for the object pose at the first sample.
pub const OBJECT_FRAME: &str = "object";
/// Frame name for the identity frame.
pub const GLOBAL_FRAME: &str = "global";

/// One timed sample `(x, ẋ, ẍ, f, p)`.
///
/// Twists, accelerations and wrenches are `[linear; angular]` and expressed
/// in the global frame. The wrench is the one applied by the environment on
/// the end-effector.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPoint {
    pub time: f64,
    pub pose: Pose,
    pub twist: Vector6<f64>,
    pub accel: Vector6<f64>,
    pub wrench: Vector6<f64>,
    pub object: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub id: String,
    pub sample_rate: f64,
    pub points: Vec<ObservationPoint>,
}

/// Named task-parameter frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    frames: Vec<(String, Frame)>,
}

/// State sample in model coordinates, see [`state_samples`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateSample {
    pub x: Vector,
    pub xd: Vector,
    pub xdd: Vector,
    pub f: Vector,
}

impl ObservationPoint {
    pub fn at_rest(time: f64, pose: Pose, object: Pose) -> Self {
        ObservationPoint {
            time,
            pose,
            twist: Vector6::zeros(),
            accel: Vector6::zeros(),
            wrench: Vector6::zeros(),
            object,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
            && self.pose.is_finite()
            && self.object.is_finite()
            && self.twist.iter().chain(self.accel.iter()).chain(self.wrench.iter()).all(|v| v.is_finite())
    }
}

impl Demonstration {
    /// Builds a demonstration, checking length and time monotonicity.
    /// The sample rate is taken from the mean sample spacing.
    pub fn new(id: impl Into<String>, points: Vec<ObservationPoint>) -> Result<Self> {
        let id = id.into();
        if points.len() < 2 {
            return Err(invalid(format!("demonstration `{id}` has fewer than 2 samples")));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(invalid(format!(
                    "demonstration `{id}`: time not strictly increasing at sample {}",
                    i + 1
                )));
            }
        }
        let span = points[points.len() - 1].time - points[0].time;
        let mut sample_rate = (points.len() - 1) as f64 / span;
        let rounded = sample_rate.round();
        if (sample_rate - rounded).abs() < 1e-6 * sample_rate {
            sample_rate = rounded;
        }
        Ok(Demonstration { id, sample_rate, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Scene of this demonstration for the given frame names.
    ///
    /// `robot` is the first robot pose, `object` the first object pose and
    /// `global` the identity.
    pub fn scene(&self, frame_names: &[String]) -> Result<Scene> {
        let first = &self.points[0];
        let mut frames = Vec::with_capacity(frame_names.len());
        for name in frame_names {
            let f = match name.as_str() {
                ROBOT_FRAME => Frame::from_pose(&first.pose),
                OBJECT_FRAME => Frame::from_pose(&first.object),
                GLOBAL_FRAME => Frame::identity(),
                other => return Err(invalid(format!("unknown frame kind `{other}`"))),
            };
            frames.push((name.clone(), f));
        }
        Scene::new(frames)
    }
}

/// Replaces accelerations by central differences of the twist, smoothed by a
/// centered 5-sample moving average.
pub fn fill_accelerations(points: &mut [ObservationPoint]) {
    let n = points.len();
    if n < 2 {
        return;
    }
    let raw: Vec<Vector6<f64>> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (points[hi].twist - points[lo].twist) / (points[hi].time - points[lo].time)
        })
        .collect();
    for i in 0..n {
        let (lo, hi) = (i.saturating_sub(2), (i + 2).min(n - 1));
        let sum: Vector6<f64> = raw[lo..=hi].iter().sum();
        points[i].accel = sum / (hi - lo + 1) as f64;
    }
}

impl Scene {
    pub fn new(frames: Vec<(String, Frame)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(invalid("scene needs at least one frame"));
        }
        for (i, (name, _)) in frames.iter().enumerate() {
            if frames[..i].iter().any(|(n, _)| n == name) {
                return Err(invalid(format!("duplicate frame name `{name}`")));
            }
        }
        Ok(Scene { frames })
    }

    pub fn frames(&self) -> &[(String, Frame)] {
        &self.frames
    }

    pub fn get(&self, name: &str) -> Option<&Frame> {
        self.frames.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    /// Frames in the order of `names`.
    pub fn ordered(&self, names: &[String]) -> Result<Vec<Frame>> {
        names
            .iter()
            .map(|n| self.get(n).copied().ok_or_else(|| Error::MissingFrame(n.clone())))
            .collect()
    }

    pub fn set(&mut self, name: &str, frame: Frame) {
        match self.frames.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = frame,
            None => self.frames.push((name.to_string(), frame)),
        }
    }

    /// Every frame pre-composed with `g`.
    pub fn transformed(&self, g: &Frame) -> Scene {
        Scene {
            frames: self.frames.iter().map(|(n, f)| (n.clone(), g.compose(f))).collect(),
        }
    }
}

fn rotate6(r: &nalgebra::Matrix3<f64>, v: &Vector6<f64>) -> Vector6<f64> {
    let lin = r * Vector3::new(v[0], v[1], v[2]);
    let ang = r * Vector3::new(v[3], v[4], v[5]);
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// The demonstration as seen from one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTrajectory {
    pub frame: String,
    pub points: Vec<ObservationPoint>,
}

/// Re-expresses every sample of `demo` in each frame of `scene`.
pub fn project_to_frames(demo: &Demonstration, scene: &Scene) -> Vec<LocalTrajectory> {
    scene
        .frames()
        .iter()
        .map(|(name, f)| LocalTrajectory {
            frame: name.clone(),
            points: demo.points.iter().map(|p| to_local(f, p)).collect(),
        })
        .collect()
}

/// Inverse of the per-sample projection.
pub fn to_global(f: &Frame, p: &ObservationPoint) -> ObservationPoint {
    let r = f.rotation_matrix();
    ObservationPoint {
        time: p.time,
        pose: f.apply_pose(&p.pose),
        twist: rotate6(&r, &p.twist),
        accel: rotate6(&r, &p.accel),
        wrench: rotate6(&r, &p.wrench),
        object: f.apply_pose(&p.object),
    }
}

pub fn to_local(f: &Frame, p: &ObservationPoint) -> ObservationPoint {
    let rt = f.rotation_matrix().transpose();
    ObservationPoint {
        time: p.time,
        pose: f.unapply_pose(&p.pose),
        twist: rotate6(&rt, &p.twist),
        accel: rotate6(&rt, &p.accel),
        wrench: rotate6(&rt, &p.wrench),
        object: f.unapply_pose(&p.object),
    }
}

/// Converts observations into model coordinates.
///
/// `Pose` keeps the full 7/6-dimensional data; `Euclidean(3)` keeps positions
/// and the linear parts of twist, acceleration and wrench.
pub fn state_samples(demo: &Demonstration, geometry: &Geometry) -> Result<Vec<StateSample>> {
    demo.points.iter().map(|p| state_sample(p, geometry)).collect()
}

pub fn state_sample(p: &ObservationPoint, geometry: &Geometry) -> Result<StateSample> {
    match geometry {
        Geometry::Pose => Ok(StateSample {
            x: p.pose.to_point(),
            xd: Vector::from_column_slice(p.twist.as_slice()),
            xdd: Vector::from_column_slice(p.accel.as_slice()),
            f: Vector::from_column_slice(p.wrench.as_slice()),
        }),
        Geometry::Euclidean(3) => Ok(StateSample {
            x: Vector::from_column_slice(p.pose.position.as_slice()),
            xd: Vector::from_column_slice(&p.twist.as_slice()[..3]),
            xdd: Vector::from_column_slice(&p.accel.as_slice()[..3]),
            f: Vector::from_column_slice(&p.wrench.as_slice()[..3]),
        }),
        Geometry::Euclidean(n) => Err(invalid(format!(
            "demonstrations cannot be read in {n}-dimensional Euclidean mode"
        ))),
    }
}

/// Model-space point of a pose.
pub fn pose_point(pose: &Pose, geometry: &Geometry) -> Result<Vector> {
    match geometry {
        Geometry::Pose => Ok(pose.to_point()),
        Geometry::Euclidean(3) => Ok(Vector::from_column_slice(pose.position.as_slice())),
        Geometry::Euclidean(n) => Err(invalid(format!("no pose embedding in R^{n}"))),
    }
}

// ---------------------------------------------------------------------------
// validation

#[derive(Clone, Debug, PartialEq)]
pub enum IssueKind {
    NonFinite,
    DtJitter { dt: f64 },
    TwistMismatch { error: f64 },
    WrenchSpike { jump: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub index: usize,
    pub kind: IssueKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationConfig {
    /// Allowed relative deviation of a sample spacing from `1 / sample_rate`.
    pub dt_jitter: f64,
    /// Allowed twist/finite-difference mismatch on top of the acceleration slack (m/s, rad/s).
    pub twist_tolerance: f64,
    /// Minimum wrench jump against both neighbours to count as a spike (N, N·m).
    pub wrench_spike: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            dt_jitter: 0.01,
            twist_tolerance: 0.05,
            wrench_spike: 50.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.issues.iter().map(|i| i.index).collect()
    }
}

fn twist_of_step(a: &ObservationPoint, b: &ObservationPoint) -> Vector6<f64> {
    let dt = b.time - a.time;
    let lin = (b.pose.position - a.pose.position) / dt;
    let ang = crate::manifold::rotation_between(&b.pose.orientation, &a.pose.orientation) / dt;
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Checks sample spacing, twist consistency against finite-differenced poses
/// and isolated wrench spikes. Never fails; problems are reported.
pub fn validate_demo(demo: &Demonstration, cfg: &ValidationConfig) -> ValidationReport {
    let mut issues = Vec::new();
    let pts = &demo.points;
    let nominal = demo.dt();
    for (i, p) in pts.iter().enumerate() {
        if !p.is_finite() {
            issues.push(Issue { index: i, kind: IssueKind::NonFinite });
        }
    }
    for i in 1..pts.len() {
        let dt = pts[i].time - pts[i - 1].time;
        if (dt - nominal).abs() > cfg.dt_jitter * nominal {
            issues.push(Issue { index: i, kind: IssueKind::DtJitter { dt } });
        }
    }
    let bad = |i: usize| !pts[i].is_finite();
    let diffs: Vec<Option<Vector6<f64>>> = (0..pts.len().saturating_sub(1))
        .map(|i| (!bad(i) && !bad(i + 1)).then(|| twist_of_step(&pts[i], &pts[i + 1])))
        .collect();
    for i in 0..pts.len() {
        if bad(i) {
            continue;
        }
        let before = if i > 0 { diffs[i - 1] } else { None };
        let after = diffs.get(i).copied().flatten();
        let error = [before, after]
            .into_iter()
            .flatten()
            .map(|fd| (pts[i].twist - fd).norm())
            .fold(f64::INFINITY, f64::min);
        let slack = pts[i].accel.norm() * nominal;
        if error.is_finite() && error > cfg.twist_tolerance + slack {
            issues.push(Issue { index: i, kind: IssueKind::TwistMismatch { error } });
        }
    }
    for i in 1..pts.len().saturating_sub(1) {
        if bad(i - 1) || bad(i) || bad(i + 1) {
            continue;
        }
        let before = (pts[i].wrench - pts[i - 1].wrench).norm();
        let after = (pts[i].wrench - pts[i + 1].wrench).norm();
        if before > cfg.wrench_spike && after > cfg.wrench_spike {
            issues.push(Issue {
                index: i,
                kind: IssueKind::WrenchSpike { jump: before.min(after) },
            });
        }
    }
    issues.sort_by_key(|i| i.index);
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn moving_demo(n: usize) -> Demonstration {
        let dt = 0.01;
        let v = 0.1;
        let pts = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let mut p = ObservationPoint::at_rest(
                    t,
                    Pose::from_position(Vector3::new(v * t, 0.0, 0.3)),
                    Pose::identity(),
                );
                p.twist[0] = v;
                p
            })
            .collect();
        Demonstration::new("m", pts).unwrap()
    }

    #[test]
    fn rejects_short_and_non_monotone() {
        let p = ObservationPoint::at_rest(0.0, Pose::identity(), Pose::identity());
        assert!(Demonstration::new("a", vec![p.clone()]).is_err());
        assert!(Demonstration::new("a", vec![p.clone(), p]).is_err());
    }

    #[test]
    fn sample_rate_from_spacing() {
        assert_eq!(moving_demo(50).sample_rate, 100.0);
    }

    #[test]
    fn clean_demo_has_empty_report() {
        assert!(validate_demo(&moving_demo(40), &ValidationConfig::default()).is_clean());
    }

    #[test]
    fn nan_wrench_is_flagged() {
        let mut d = moving_demo(20);
        d.points[7].wrench[2] = f64::NAN;
        let r = validate_demo(&d, &ValidationConfig::default());
        assert_eq!(r.flagged(), vec![7]);
        assert_eq!(r.issues[0].kind, IssueKind::NonFinite);
    }

    #[test]
    fn corrupted_twist_is_flagged() {
        let mut d = moving_demo(30);
        d.points[12].twist[1] = 0.8;
        let r = validate_demo(&d, &ValidationConfig::default());
        assert_eq!(r.flagged(), vec![12]);
    }

    #[test]
    fn wrench_spike_is_flagged() {
        let mut d = moving_demo(30);
        d.points[5].wrench[2] = 200.0;
        let r = validate_demo(&d, &ValidationConfig::default());
        assert_eq!(r.flagged(), vec![5]);
    }

    #[test]
    fn identity_frame_projection_is_noop() {
        let d = moving_demo(10);
        let scene = Scene::new(vec![("g".into(), Frame::identity())]).unwrap();
        let local = project_to_frames(&d, &scene);
        assert_eq!(local[0].points, d.points);
    }

    #[test]
    fn translation_frame_projection() {
        let mut d = moving_demo(10);
        d.points[3].wrench = Vector6::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3);
        let b = Vector3::new(0.5, 0.25, -1.0);
        let scene = Scene::new(vec![("o".into(), Frame::from_translation(b))]).unwrap();
        let local = &project_to_frames(&d, &scene)[0];
        for (l, g) in local.points.iter().zip(&d.points) {
            assert_eq!(l.pose.position, g.pose.position - b);
            assert_eq!(l.pose.orientation, g.pose.orientation);
            assert_eq!(l.wrench, g.wrench);
        }
    }

    #[test]
    fn acceleration_fill_of_constant_ramp() {
        let mut d = moving_demo(20);
        for (i, p) in d.points.iter_mut().enumerate() {
            p.twist[2] = 0.5 * i as f64 * 0.01;
        }
        fill_accelerations(&mut d.points);
        for p in &d.points {
            assert!((p.accel[2] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn scene_rejects_duplicates_and_unknown_kinds() {
        assert!(Scene::new(vec![("a".into(), Frame::identity()), ("a".into(), Frame::identity())]).is_err());
        assert!(Scene::new(vec![]).is_err());
        let d = moving_demo(5);
        assert!(d.scene(&["table".into()]).is_err());
        let s = d.scene(&[ROBOT_FRAME.into(), GLOBAL_FRAME.into()]).unwrap();
        assert!(matches!(s.ordered(&["object".into()]), Err(Error::MissingFrame(_))));
    }
}
