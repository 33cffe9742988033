//! Simulated Cartesian impedance plant and the online execution loop.
//!
//! The plant is a rigid body whose internal dynamics are exactly compensated:
//! `M ẍ = F + f`, with `F` the commanded wrench and `f` the wrench applied by
//! the environment. It is integrated with semi-implicit Euler.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::attractor::{attractor_from_compliance, invert_stiffness};
use crate::demo::{Demonstration, ObservationPoint, Scene, StateSample};
use crate::error::{invalid, Error, Result};
use crate::manifold::{Frame, GaussianDensity, Geometry, ManifoldGaussian, Matrix, Pose, Vector};
use crate::sequencing::{
    most_likely_sequence, prepend_transition, DecodeEvidence, DecodeModel, ReferenceTrajectory, TransitionComponent,
    TransitionConfig, TRANSITION,
};
use crate::skill::SkillModel;

/// Rigid-body parameters of the plant.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlantConfig {
    pub mass: f64,
    /// Isotropic rotational inertia.
    pub rotational_inertia: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig { mass: 1.0, rotational_inertia: 0.01 }
    }
}

impl PlantConfig {
    /// Diagonal of the inertia matrix in tangent coordinates.
    pub fn inertia(&self, geometry: &Geometry) -> Vector {
        match geometry {
            Geometry::Pose => Vector::from_vec(vec![
                self.mass,
                self.mass,
                self.mass,
                self.rotational_inertia,
                self.rotational_inertia,
                self.rotational_inertia,
            ]),
            Geometry::Euclidean(n) => Vector::from_element(*n, self.mass),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    pub pose: Vector,
    pub twist: Vector,
    /// Acceleration of the last step.
    pub accel: Vector,
    /// Wrench sensed during the last step.
    pub wrench: Vector,
}

impl PlantState {
    pub fn at_rest(geometry: &Geometry, pose: Vector) -> Self {
        let n = geometry.tangent_dim();
        PlantState { pose, twist: Vector::zeros(n), accel: Vector::zeros(n), wrench: Vector::zeros(n) }
    }

    pub fn is_finite(&self) -> bool {
        [&self.pose, &self.twist, &self.accel, &self.wrench]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Unilateral contact plane.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ContactPlane {
    pub point: Vector3<f64>,
    /// Unit normal pointing out of the surface.
    pub normal: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Environment {
    pub plane: Option<ContactPlane>,
    pub stiffness: f64,
    pub damping: f64,
    /// Tangential viscous friction while in contact.
    pub friction: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Environment { plane: None, stiffness: 1e4, damping: 100.0, friction: 0.0 }
    }
}

impl Environment {
    pub fn free_space() -> Self {
        Environment::default()
    }

    pub fn with_plane(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("contact normal must be nonzero"));
        }
        Ok(Environment { plane: Some(ContactPlane { point, normal: normal / n }), ..Environment::default() })
    }
}

/// Wrench applied by the environment at the given state.
pub fn contact_wrench(geometry: &Geometry, env: &Environment, pose: &Vector, twist: &Vector) -> Vector {
    let n = geometry.tangent_dim();
    let mut out = Vector::zeros(n);
    let Some(plane) = env.plane else { return out };
    let lin = n.min(3);
    let mut p = Vector3::zeros();
    let mut v = Vector3::zeros();
    for i in 0..lin {
        p[i] = pose[i];
        v[i] = twist[i];
    }
    let depth = -(p - plane.point).dot(&plane.normal);
    if depth <= 0.0 {
        return out;
    }
    let vn = v.dot(&plane.normal);
    let push = (env.stiffness * depth - env.damping * vn).max(0.0);
    let f = plane.normal * push - (v - plane.normal * vn) * env.friction;
    for i in 0..lin {
        out[i] = f[i];
    }
    out
}

/// `F = K log_x(y*) + D (ẏ* - ẋ) + M ÿ*`.
#[allow(clippy::too_many_arguments)]
pub fn control_wrench(
    geometry: &Geometry,
    y: &Vector,
    yd: &Vector,
    ydd: &Vector,
    state: &PlantState,
    stiffness: &Matrix,
    damping: &Matrix,
    inertia: &Vector,
) -> Vector {
    stiffness * geometry.log(y, &state.pose) + damping * (yd - &state.twist) + inertia.component_mul(ydd)
}

/// One semi-implicit Euler step under `command` plus the environment wrench and
/// an additional sensed `external` wrench.
pub fn plant_step(
    geometry: &Geometry,
    state: &PlantState,
    command: &Vector,
    env: &Environment,
    external: &Vector,
    plant: &PlantConfig,
    dt: f64,
) -> PlantState {
    let sensed = contact_wrench(geometry, env, &state.pose, &state.twist) + external;
    let accel = (command + &sensed).component_div(&plant.inertia(geometry));
    let twist = &state.twist + &accel * dt;
    let pose = geometry.exp(&(&twist * dt), &state.pose);
    PlantState { pose, twist, accel, wrench: sensed }
}

// ---------------------------------------------------------------------------
// scripted disturbances

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Disturbance {
    /// The end-effector is held displaced by `magnitude` along tangent `axis`
    /// for the window. The holding force is not sensed.
    PositionPulse { start: f64, duration: f64, axis: usize, magnitude: f64 },
    /// Additional sensed wrench during the window.
    WrenchPulse { start: f64, duration: f64, wrench: Vec<f64> },
    /// A task frame moves at `time`.
    FrameShift { time: f64, frame: String, translation: [f64; 3] },
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DisturbanceScript {
    #[cfg_attr(feature = "serde", serde(default))]
    pub events: Vec<Disturbance>,
}

impl DisturbanceScript {
    pub fn check(&self, geometry: &Geometry, horizon: f64) -> Result<()> {
        let n = geometry.tangent_dim();
        for e in &self.events {
            let (start, end) = match e {
                Disturbance::PositionPulse { start, duration, axis, .. } => {
                    if *axis >= n {
                        return Err(invalid(format!("pulse axis {axis} out of range")));
                    }
                    (*start, start + duration)
                }
                Disturbance::WrenchPulse { start, duration, wrench } => {
                    if wrench.len() != n {
                        return Err(Error::Dimension { expected: n, got: wrench.len() });
                    }
                    (*start, start + duration)
                }
                Disturbance::FrameShift { time, .. } => (*time, *time),
            };
            if !(start >= 0.0) || !(end >= start) || end > horizon {
                return Err(invalid(format!("disturbance window [{start}, {end}] outside the episode")));
            }
        }
        Ok(())
    }

    fn in_window(t: f64, start: f64, duration: f64, dt: f64) -> bool {
        t >= start - 0.5 * dt && t < start + duration - 0.5 * dt
    }

    /// Displacement applied by a position pulse active at `t`.
    fn hold(&self, t: f64, dt: f64) -> Option<(usize, f64)> {
        self.events.iter().find_map(|e| match e {
            Disturbance::PositionPulse { start, duration, axis, magnitude }
                if Self::in_window(t, *start, *duration, dt) =>
            {
                Some((*axis, *magnitude))
            }
            _ => None,
        })
    }

    fn external(&self, t: f64, dt: f64, n: usize) -> Vector {
        let mut w = Vector::zeros(n);
        for e in &self.events {
            if let Disturbance::WrenchPulse { start, duration, wrench } = e {
                if Self::in_window(t, *start, *duration, dt) {
                    w += Vector::from_column_slice(wrench);
                }
            }
        }
        w
    }

    fn shifts_at(&self, t: f64, dt: f64) -> Vec<(&str, [f64; 3])> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Disturbance::FrameShift { time, frame, translation } if (t - time).abs() < 0.5 * dt => {
                    Some((frame.as_str(), *translation))
                }
                _ => None,
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// episode

/// Damping used during execution.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DampingMode {
    /// The training damping.
    #[default]
    Fixed,
    /// `2 sqrt(M K)` for each stiffness.
    Critical,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ExecutionConfig {
    pub dt: f64,
    /// Episode length in ticks; `None` uses twice the nominal skill length.
    pub max_steps: Option<usize>,
    /// Planned length in ticks; `None` uses the nominal skill length.
    pub plan_steps: Option<usize>,
    pub plant: PlantConfig,
    pub damping: DampingMode,
    pub lqt_weight: f64,
    pub transition: TransitionConfig,
    pub replanning: bool,
    /// Distance between the virtual attractor and the one implied by the reference.
    pub deviation_threshold: f64,
    /// Deviation of the sensed wrench from the component mean.
    pub wrench_threshold: f64,
    /// Time the wrench deviation has to persist, seconds.
    pub wrench_window: f64,
    /// Time after entering a component before its wrench is compared, seconds.
    pub wrench_grace: f64,
    /// Minimum time between deviation-triggered replans, seconds.
    pub cooldown: f64,
    pub goal_position_tolerance: f64,
    pub goal_orientation_tolerance: f64,
    /// Manual offset added to the object frame translation.
    pub object_frame_shift: [f64; 3],
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            dt: 0.01,
            max_steps: None,
            plan_steps: None,
            plant: PlantConfig::default(),
            damping: DampingMode::Fixed,
            lqt_weight: 1e-4,
            transition: TransitionConfig::default(),
            replanning: true,
            deviation_threshold: 0.03,
            wrench_threshold: 10.0,
            wrench_window: 0.1,
            wrench_grace: 0.5,
            cooldown: 0.5,
            goal_position_tolerance: 0.005,
            goal_orientation_tolerance: 0.05,
            object_frame_shift: [0.0; 3],
        }
    }
}

/// Where the episode should end, in attractor space.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Goal {
    /// The global mean of the component the demonstrations end in.
    #[default]
    Model,
    /// A point expressed in a named frame (global when `None`).
    Point { point: Vector, frame: Option<String> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplanReason {
    SceneChange,
    Deviation,
    Wrench,
}

impl ReplanReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReplanReason::SceneChange => "scene",
            ReplanReason::Deviation => "deviation",
            ReplanReason::Wrench => "wrench",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplanEvent {
    pub tick: usize,
    pub reason: ReplanReason,
    pub transition_steps: usize,
    /// Decoded sequence in run-length form, without the transition.
    pub segments: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub pose: Vector,
    pub twist: Vector,
    pub accel: Vector,
    pub wrench: Vector,
    pub command: Vector,
    pub reference: Vector,
    pub component: usize,
    pub stiffness_id: usize,
    pub virtual_attractor: Vector,
    /// Object frame of the scene at this tick (identity without one).
    pub object: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    GoalReached,
    HorizonExhausted,
    Aborted(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionLog {
    pub geometry: Geometry,
    pub dt: f64,
    pub ticks: Vec<TickRecord>,
    pub replans: Vec<ReplanEvent>,
    /// Segments of the initial plan.
    pub initial_segments: Vec<(usize, usize)>,
    pub outcome: Outcome,
}

struct Plan {
    start_tick: usize,
    reference: ReferenceTrajectory,
    transition: Option<TransitionComponent>,
    goal: Vector,
}

impl Plan {
    fn end_tick(&self) -> usize {
        self.start_tick + self.reference.len()
    }
}

struct Episode<'a> {
    skill: &'a SkillModel,
    cfg: &'a ExecutionConfig,
    geometry: Geometry,
    compliance: Vec<Matrix>,
    damping: Vec<Matrix>,
    goal: &'a Goal,
    scene: Scene,
    globals: Vec<ManifoldGaussian>,
    plans: Vec<Plan>,
    plan_of_tick: Vec<usize>,
}

fn matrix_sqrt_psd(m: &Matrix) -> Matrix {
    let eig = ((m + m.transpose()) * 0.5).symmetric_eigen();
    let s = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// `2 M^½ (M^-½ K M^-½)^½ M^½` for diagonal `M`.
pub fn critical_damping(stiffness: &Matrix, inertia: &Vector) -> Matrix {
    let sq = inertia.map(f64::sqrt);
    let isq = sq.map(|v| 1.0 / v);
    let scaled = Matrix::from_diagonal(&isq) * stiffness * Matrix::from_diagonal(&isq);
    Matrix::from_diagonal(&sq) * matrix_sqrt_psd(&scaled) * Matrix::from_diagonal(&sq) * 2.0
}

impl<'a> Episode<'a> {
    fn frames(&self) -> Result<Vec<Frame>> {
        let mut scene = self.scene.clone();
        let s = self.cfg.object_frame_shift;
        if s != [0.0; 3] {
            if let Some(f) = scene.get(crate::demo::OBJECT_FRAME).copied() {
                scene.set(crate::demo::OBJECT_FRAME, Frame::new(f.rotation, f.translation + Vector3::from(s)));
            }
        }
        scene.ordered(&self.skill.model.frame_names)
    }

    fn update_globals(&mut self) -> Result<()> {
        self.globals = self.skill.model.global_components(&self.frames()?)?;
        Ok(())
    }

    fn goal_point(&self, final_component: usize) -> Result<Option<Vector>> {
        match self.goal {
            Goal::Model => Ok(Some(self.globals[final_component].mean.clone())),
            Goal::Point { point, frame } => {
                let f = match frame {
                    None => Frame::identity(),
                    Some(name) => *self.scene.get(name).ok_or_else(|| Error::MissingFrame(name.clone()))?,
                };
                Ok(Some(self.geometry.frame_apply(&f, point)))
            }
        }
    }

    fn end_observation(&self) -> Result<Option<Vector>> {
        self.goal_point(self.skill.final_component)
    }

    fn decode_model<'b>(&'b self, max_durations: &'b [usize], priors: &'b [f64]) -> DecodeModel<'b> {
        DecodeModel {
            geometry: &self.geometry,
            globals: &self.globals,
            priors,
            transitions: &self.skill.model.transitions,
            durations: &self.skill.model.durations,
            max_durations,
        }
    }

    fn gaussian<'b>(&'b self, plan: &'b Plan, component: usize) -> &'b ManifoldGaussian {
        if component == TRANSITION {
            &plan.transition.as_ref().expect("transition steps carry a transition").gaussian
        } else {
            &self.globals[component]
        }
    }

    /// Builds a plan from a decoded sequence, optionally led by a transition.
    fn build_plan(
        &self,
        steps: &[usize],
        transition: Option<TransitionComponent>,
        start: &PlantState,
        start_tick: usize,
    ) -> Result<Plan> {
        let tmp = Plan {
            start_tick,
            reference: ReferenceTrajectory {
                times: vec![],
                points: vec![],
                velocities: vec![],
                accelerations: vec![],
                components: vec![],
                stiffness_ids: vec![],
            },
            transition,
            goal: start.pose.clone(),
        };
        let gaussians: Vec<&ManifoldGaussian> = steps.iter().map(|&k| self.gaussian(&tmp, k)).collect();
        let stiffness_ids: Vec<usize> = steps
            .iter()
            .map(|&k| if k == TRANSITION { tmp.transition.as_ref().map_or(0, |t| t.stiffness) } else { k })
            .collect();
        let reference = crate::sequencing::lqt_reference(
            &self.geometry,
            &gaussians,
            steps,
            &stiffness_ids,
            &start.pose,
            &start.twist,
            start_tick as f64 * self.cfg.dt,
            self.cfg.dt,
            self.cfg.lqt_weight,
        )?;
        let goal = self.goal_point(self.skill.final_component)?.expect("goal point");
        Ok(Plan { start_tick, reference, transition: tmp.transition, goal })
    }

    fn virtual_attractor(&self, sample: &StateSample, stiffness_id: usize) -> Vector {
        attractor_from_compliance(&self.geometry, sample, &self.compliance[stiffness_id], &self.damping[stiffness_id])
    }

    /// Attractor implied by tracking the reference perfectly.
    fn expected_attractor(&self, y: &Vector, yd: &Vector, ydd: &Vector, stiffness_id: usize) -> Vector {
        let drive = &self.damping[stiffness_id] * yd + ydd;
        self.geometry.exp(&(&self.compliance[stiffness_id] * drive), y)
    }

    /// The executed past enters the new plan through the component it ends
    /// in: the plan either continues it or moves on to a successor.
    fn replan_priors(&self, plan: &Plan, executing: Option<usize>) -> Vec<f64> {
        let r = &plan.reference.components;
        let first = r.iter().copied().find(|&k| k != TRANSITION).unwrap_or(0);
        let current = match executing {
            Some(k) if k != TRANSITION => k,
            _ => first,
        };
        let a = &self.skill.model.transitions;
        let k_count = self.skill.model.num_components();
        let mut p: Vec<f64> = (0..k_count).map(|k| if k == current { 0.5 } else { 0.5 * a[(current, k)] }).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    fn replan(
        &mut self,
        tick: usize,
        state: &PlantState,
        log: &[TickRecord],
        reasons: &[ReplanReason],
    ) -> Result<Option<ReplanEvent>> {
        if reasons.is_empty() {
            return Ok(None);
        }
        let reason = reasons[0];
        self.update_globals()?;
        let current = self.plans.last().expect("an initial plan exists");
        let (latest, stiffness_now) = match log.last() {
            Some(r) => (r.virtual_attractor.clone(), r.stiffness_id),
            None => (state.pose.clone(), current.reference.stiffness_ids[0]),
        };
        let mut past = 0.0;
        for (i, r) in log.iter().enumerate() {
            let plan = &self.plans[self.plan_of_tick[i]];
            past += GaussianDensity::new(self.gaussian(plan, r.component))?.log_density(&self.geometry, &r.virtual_attractor);
        }
        let horizon = current.end_tick().saturating_sub(tick).max(1);
        let max_d: Vec<usize> = self.skill.model.durations.iter().map(|d| d.max_duration()).collect();
        let end = self.end_observation()?;
        let priors = self.replan_priors(current, log.last().map(|r| r.component));
        let elapsed = dwell(log);
        let decoded = most_likely_sequence(
            &self.decode_model(&max_d, &priors),
            horizon,
            &DecodeEvidence { start: Some(&latest), end: end.as_ref(), past_log_likelihood: past, elapsed },
        )?;
        let first = decoded.sequence.steps[0];
        let (steps, transition) = prepend_transition(
            &self.geometry,
            &decoded.sequence,
            &state.pose,
            &latest,
            stiffness_now,
            &self.globals[first].cov,
            self.cfg.dt,
            &self.cfg.transition,
        )?;
        let plan = self.build_plan(&steps.steps, Some(transition.clone()), state, tick)?;
        self.plans.push(plan);
        Ok(Some(ReplanEvent {
            tick,
            reason,
            transition_steps: transition.duration,
            segments: decoded.sequence.segments(),
        }))
    }
}

/// Running component and how long it has been active, counting the
/// transition steps that led back into it.
fn dwell(log: &[TickRecord]) -> Option<(usize, usize)> {
    let k = log.iter().rev().map(|r| r.component).find(|&c| c != TRANSITION)?;
    if log.last().map(|r| r.component) != Some(k) {
        return None;
    }
    let e = log.iter().rev().take_while(|r| r.component == k || r.component == TRANSITION).count();
    Some((k, e))
}

/// Runs one closed-loop episode of `skill` in `scene` starting from `start`.
///
/// Setup failures (missing frames, inconsistent inputs) are errors; failures
/// after the first tick end the episode with [`Outcome::Aborted`].
pub fn run_episode(
    skill: &SkillModel,
    scene: &Scene,
    start: &PlantState,
    goal: &Goal,
    script: &DisturbanceScript,
    env: &Environment,
    cfg: &ExecutionConfig,
) -> Result<ExecutionLog> {
    let geometry = skill.model.geometry;
    geometry.check_point(&start.pose)?;
    if !(cfg.dt > 0.0) {
        return Err(invalid("time step must be positive"));
    }
    let plan_steps = cfg.plan_steps.unwrap_or(skill.nominal_steps).max(1);
    let max_steps = cfg.max_steps.unwrap_or(2 * plan_steps).max(1);
    script.check(&geometry, max_steps as f64 * cfg.dt)?;
    let n = geometry.tangent_dim();
    let inertia = cfg.plant.inertia(&geometry);
    let mut compliance = Vec::with_capacity(skill.stiffness.stiffness.len());
    let mut damping = Vec::with_capacity(skill.stiffness.stiffness.len());
    for k in &skill.stiffness.stiffness {
        compliance.push(invert_stiffness(k)?);
        damping.push(match cfg.damping {
            DampingMode::Fixed => skill.damping.clone(),
            DampingMode::Critical => critical_damping(k, &inertia),
        });
    }
    let mut ep = Episode {
        skill,
        cfg,
        geometry,
        compliance,
        damping,
        goal,
        scene: scene.clone(),
        globals: Vec::new(),
        plans: Vec::new(),
        plan_of_tick: Vec::new(),
    };
    ep.update_globals()?;

    // initial synthesis
    let max_d: Vec<usize> = skill.model.durations.iter().map(|d| d.max_duration()).collect();
    let end = ep.end_observation()?;
    let decoded = most_likely_sequence(
        &ep.decode_model(&max_d, &skill.model.priors),
        plan_steps,
        &DecodeEvidence { start: Some(&start.pose), end: end.as_ref(), ..Default::default() },
    )?;
    let initial = ep.build_plan(&decoded.sequence.steps, None, start, 0)?;
    ep.plans.push(initial);

    let mut log = ExecutionLog {
        geometry,
        dt: cfg.dt,
        ticks: Vec::with_capacity(max_steps),
        replans: Vec::new(),
        initial_segments: decoded.sequence.segments(),
        outcome: Outcome::HorizonExhausted,
    };
    let mut state = start.clone();
    let mut hold_origin: Option<Vector> = None;
    let mut wrench_run = 0usize;
    let mut last_replan: Option<usize> = None;
    let wrench_ticks = (cfg.wrench_window / cfg.dt).round().max(1.0) as usize;
    let cooldown_ticks = (cfg.cooldown / cfg.dt).round() as usize;
    let grace_ticks = (cfg.wrench_grace / cfg.dt).round() as usize;
    let mut entered = 0usize;

    for tick in 0..max_steps {
        let t = tick as f64 * cfg.dt;
        let mut reasons = Vec::new();
        for (frame, shift) in script.shifts_at(t, cfg.dt) {
            let f = *ep.scene.get(frame).ok_or_else(|| Error::MissingFrame(frame.to_string()))?;
            ep.scene.set(frame, Frame::new(f.rotation, f.translation + Vector3::from(shift)));
            reasons.push(ReplanReason::SceneChange);
        }
        if cfg.replanning {
            let cooled = last_replan.is_none_or(|r| tick >= r + cooldown_ticks);
            if let Some(prev) = log.ticks.last() {
                let plan = ep.plans.last().expect("plan");
                let i = (tick - 1).saturating_sub(plan.start_tick).min(plan.reference.len() - 1);
                let r = &plan.reference;
                let expected = ep.expected_attractor(&r.points[i], &r.velocities[i], &r.accelerations[i], prev.stiffness_id);
                let deviation = geometry.log(&prev.virtual_attractor, &expected).norm();
                if deviation > cfg.deviation_threshold && cooled {
                    reasons.push(ReplanReason::Deviation);
                }
                if log.ticks.len() < 2 || log.ticks[log.ticks.len() - 2].component != prev.component {
                    entered = tick - 1;
                }
                if prev.component != TRANSITION && tick > entered + grace_ticks {
                    let dw = (&prev.wrench - &skill.wrench_means[prev.component]).norm();
                    wrench_run = if dw > cfg.wrench_threshold { wrench_run + 1 } else { 0 };
                } else {
                    wrench_run = 0;
                }
                if wrench_run >= wrench_ticks && cooled {
                    reasons.push(ReplanReason::Wrench);
                    wrench_run = 0;
                }
            }
        }
        if !reasons.is_empty() {
            if !cfg.replanning && reasons.iter().all(|r| *r == ReplanReason::SceneChange) {
                ep.update_globals()?;
            } else {
                match ep.replan(tick, &state, &log.ticks, &reasons) {
                    Ok(Some(ev)) => {
                        log.replans.push(ev);
                        last_replan = Some(tick);
                    }
                    Ok(None) => {}
                    Err(e) => {
                        log.outcome = Outcome::Aborted(format!("replanning failed at tick {tick}: {e}"));
                        return Ok(log);
                    }
                }
            }
        }

        let plan_idx = ep.plans.len() - 1;
        let plan = &ep.plans[plan_idx];
        let i = tick - plan.start_tick;
        let finished = i >= plan.reference.len();
        let i = i.min(plan.reference.len() - 1);
        let r = &plan.reference;
        let (y, yd, ydd) = if finished {
            (r.points[i].clone(), Vector::zeros(n), Vector::zeros(n))
        } else {
            (r.points[i].clone(), r.velocities[i].clone(), r.accelerations[i].clone())
        };
        let sid = r.stiffness_ids[i];
        let component = r.components[i];
        let goal_point = plan.goal.clone();
        let command = control_wrench(&geometry, &y, &yd, &ydd, &state, &skill.stiffness.stiffness[sid], &ep.damping[sid], &inertia);

        let external = script.external(t, cfg.dt, n);
        let next = match script.hold(t, cfg.dt) {
            Some((axis, magnitude)) => {
                let origin = hold_origin.get_or_insert_with(|| state.pose.clone()).clone();
                let mut offset = Vector::zeros(n);
                offset[axis] = magnitude;
                let held = geometry.exp(&offset, &origin);
                let zero = Vector::zeros(n);
                let sensed = contact_wrench(&geometry, env, &held, &zero) + &external;
                // the sample logged for this tick is the held one
                state = PlantState { pose: held.clone(), twist: zero.clone(), accel: zero.clone(), wrench: sensed.clone() };
                PlantState { pose: held, twist: zero.clone(), accel: zero, wrench: sensed }
            }
            None => {
                hold_origin = None;
                plant_step(&geometry, &state, &command, env, &external, &cfg.plant, cfg.dt)
            }
        };
        let sample = StateSample { x: state.pose.clone(), xd: state.twist.clone(), xdd: next.accel.clone(), f: next.wrench.clone() };
        let va = ep.virtual_attractor(&sample, sid);
        log.ticks.push(TickRecord {
            time: t,
            pose: state.pose.clone(),
            twist: state.twist.clone(),
            accel: next.accel.clone(),
            wrench: next.wrench.clone(),
            command,
            reference: y,
            component,
            stiffness_id: sid,
            virtual_attractor: va.clone(),
            object: ep.scene.get(crate::demo::OBJECT_FRAME).map_or(Pose::identity(), Frame::to_pose),
        });
        ep.plan_of_tick.push(plan_idx);
        if !next.is_finite() {
            log.outcome = Outcome::Aborted(format!("non-finite plant state at tick {tick}"));
            return Ok(log);
        }
        state = next;
        if finished {
            let d = geometry.log(&va, &goal_point);
            let (pos, rot) = split_norms(&geometry, &d);
            if pos <= cfg.goal_position_tolerance && rot <= cfg.goal_orientation_tolerance {
                log.outcome = Outcome::GoalReached;
                return Ok(log);
            }
        }
    }
    Ok(log)
}

/// Position and orientation norms of a tangent vector.
pub fn split_norms(geometry: &Geometry, v: &Vector) -> (f64, f64) {
    match geometry {
        Geometry::Pose => (v.rows(0, 3).norm(), v.rows(3, 3).norm()),
        Geometry::Euclidean(_) => (v.norm(), 0.0),
    }
}

// ---------------------------------------------------------------------------
// synthetic demonstrations

/// One stage of a scripted attractor: a ramp to `target` followed by a hold.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub target: Pose,
    /// Ramp time from the previous target, seconds.
    pub ramp: f64,
    /// Hold time at the target, seconds.
    pub hold: f64,
    /// 6×6 ground-truth stiffness.
    pub stiffness: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScript {
    pub id: String,
    pub start: Pose,
    pub object: Pose,
    pub stages: Vec<Stage>,
    pub damping: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub position_std: f64,
    pub wrench_std: f64,
    pub seed: u64,
}

/// Demonstration with the script that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDemo {
    pub demo: Demonstration,
    /// Scripted attractor per sample.
    pub attractors: Vec<Vector>,
    /// Ground-truth stiffness per sample.
    pub stiffness: Vec<Matrix>,
    /// Stage index per sample.
    pub stage: Vec<usize>,
}

/// Simulates the plant under `F = K (y - x) - D ẋ` following the script and
/// logs `(x, ẋ, ẍ, f, p)` at every tick.
pub fn generate_synthetic_demo(
    script: &SyntheticScript,
    env: &Environment,
    plant: &PlantConfig,
    dt: f64,
    noise: Option<NoiseConfig>,
) -> Result<SyntheticDemo> {
    if script.stages.is_empty() {
        return Err(invalid("synthetic script has no stages"));
    }
    if !(dt > 0.0) {
        return Err(invalid("time step must be positive"));
    }
    let g = Geometry::Pose;
    let zero6 = Vector::zeros(6);
    let mut state = PlantState::at_rest(&g, script.start.to_point());
    let mut prev = script.start.to_point();
    let mut points = Vec::new();
    let mut attractors = Vec::new();
    let mut stiffness = Vec::new();
    let mut stage_of = Vec::new();
    let mut rng = noise.map(|n| ChaCha8Rng::seed_from_u64(n.seed));
    let mut tick = 0usize;
    for (si, stage) in script.stages.iter().enumerate() {
        if stage.stiffness.shape() != (6, 6) {
            return Err(Error::Dimension { expected: 6, got: stage.stiffness.nrows() });
        }
        let target = stage.target.to_point();
        let delta = g.log(&target, &prev);
        let ramp = (stage.ramp / dt).round() as usize;
        let hold = (stage.hold / dt).round() as usize;
        for j in 0..ramp + hold {
            let s = if j < ramp { (j + 1) as f64 / ramp as f64 } else { 1.0 };
            // smoothstep keeps the attractor velocity continuous
            let w = s * s * (3.0 - 2.0 * s);
            let y = g.exp(&(&delta * w), &prev);
            let command = &stage.stiffness * g.log(&y, &state.pose) - &script.damping * &state.twist;
            let next = plant_step(&g, &state, &command, env, &zero6, plant, dt);
            let mut pose = Pose::from_point(&state.pose);
            let mut wrench = next.wrench.clone();
            if let (Some(rng), Some(n)) = (rng.as_mut(), noise) {
                if n.position_std > 0.0 {
                    let d = Normal::new(0.0, n.position_std).map_err(|_| invalid("bad noise level"))?;
                    for i in 0..3 {
                        pose.position[i] += d.sample(rng);
                    }
                }
                if n.wrench_std > 0.0 {
                    let d = Normal::new(0.0, n.wrench_std).map_err(|_| invalid("bad noise level"))?;
                    for i in 0..6 {
                        wrench[i] += d.sample(rng);
                    }
                }
            }
            points.push(ObservationPoint {
                time: tick as f64 * dt,
                pose,
                twist: nalgebra::Vector6::from_iterator(state.twist.iter().copied()),
                accel: nalgebra::Vector6::from_iterator(next.accel.iter().copied()),
                wrench: nalgebra::Vector6::from_iterator(wrench.iter().copied()),
                object: script.object,
            });
            attractors.push(y);
            stiffness.push(stage.stiffness.clone());
            stage_of.push(si);
            state = next;
            tick += 1;
        }
        prev = target;
    }
    let mut demo = Demonstration::new(script.id.clone(), points)?;
    // the logged rate is exact by construction
    demo.sample_rate = 1.0 / dt;
    Ok(SyntheticDemo { demo, attractors, stiffness, stage: stage_of })
}
