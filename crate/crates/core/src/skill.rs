//! Training pipeline: demonstrations to a skill model.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::attractor::{attractor_trajectory, GainsSchedule, ImpedanceGains};
use crate::demo::{state_samples, Demonstration, Scene, GLOBAL_FRAME, OBJECT_FRAME, ROBOT_FRAME};
use crate::error::{invalid, Error, Result};
use crate::manifold::{Frame, Geometry, Matrix, Pose, Vector};
use crate::stiffness::{optimize_stiffness, StiffnessConfig, StiffnessData, StiffnessModel, StiffnessReport};
use crate::tphsmm::{em_fit, init_model, EmConfig, FitReport, InitStrategy, LocalDemo, Responsibilities, Topology, Tphsmm};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainingConfig {
    pub geometry: Geometry,
    pub frames: Vec<String>,
    pub components: usize,
    pub init: InitStrategy,
    pub topology: Topology,
    pub em: EmConfig,
    pub stiffness: StiffnessConfig,
    /// Isotropic stiffness used to compute the training attractors.
    pub initial_stiffness: f64,
    /// Isotropic damping of the demonstrations and of execution.
    pub damping: f64,
    /// Rounds of attractor recomputation with the learned stiffness.
    pub outer_iterations: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            geometry: Geometry::Pose,
            frames: vec![ROBOT_FRAME.to_string(), OBJECT_FRAME.to_string()],
            components: 6,
            init: InitStrategy::TimeSlice,
            topology: Topology::LeftToRight,
            em: EmConfig::default(),
            stiffness: StiffnessConfig::default(),
            initial_stiffness: 400.0,
            damping: 40.0,
            outer_iterations: 1,
        }
    }
}

impl TrainingConfig {
    pub fn check(&self) -> Result<()> {
        if self.components == 0 {
            return Err(invalid("at least one component is required"));
        }
        if self.frames.is_empty() {
            return Err(invalid("at least one task frame is required"));
        }
        for f in &self.frames {
            if ![ROBOT_FRAME, OBJECT_FRAME, GLOBAL_FRAME].contains(&f.as_str()) {
                return Err(invalid(format!("unknown frame kind `{f}`")));
            }
        }
        if !matches!(self.geometry, Geometry::Pose | Geometry::Euclidean(3)) {
            return Err(invalid("training supports pose and 3-D position models"));
        }
        if !(self.initial_stiffness > 0.0) || !(self.damping >= 0.0) {
            return Err(invalid("initial stiffness must be positive and damping non-negative"));
        }
        if self.outer_iterations == 0 {
            return Err(invalid("at least one outer iteration is required"));
        }
        Ok(())
    }

    pub fn initial_gains(&self) -> ImpedanceGains {
        ImpedanceGains::isotropic(self.geometry.tangent_dim(), self.initial_stiffness, self.damping)
    }
}

/// A learned skill.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SkillModel {
    pub model: Tphsmm,
    pub stiffness: StiffnessModel,
    pub damping: Matrix,
    /// Responsibility-weighted mean of the demonstrated wrench per component.
    pub wrench_means: Vec<Vector>,
    /// Component the demonstrations end in.
    pub final_component: usize,
    /// Mean demonstration length in samples.
    pub nominal_steps: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingReport {
    /// EM report of the last outer iteration.
    pub em: FitReport,
    pub stiffness: StiffnessReport,
    pub warnings: Vec<String>,
}

/// Training data derived from the demonstrations that does not depend on
/// the gains.
struct Prepared {
    frames: Vec<Vec<Frame>>,
    samples: Vec<Vec<crate::demo::StateSample>>,
}

fn prepare(demos: &[Demonstration], cfg: &TrainingConfig) -> Result<Prepared> {
    if demos.is_empty() {
        return Err(invalid("no demonstrations"));
    }
    let mut frames = Vec::with_capacity(demos.len());
    let mut samples = Vec::with_capacity(demos.len());
    for d in demos {
        let s = d.scene(&cfg.frames)?;
        frames.push(s.ordered(&cfg.frames)?);
        samples.push(state_samples(d, &cfg.geometry)?);
    }
    Ok(Prepared { frames, samples })
}

/// Attractor demonstrations seen from each frame.
pub fn local_demos(demos: &[Demonstration], schedules: &[GainsSchedule], cfg: &TrainingConfig) -> Result<Vec<LocalDemo>> {
    let prep = prepare(demos, cfg)?;
    local_from(demos, schedules, cfg, &prep)
}

fn local_from(demos: &[Demonstration], schedules: &[GainsSchedule], cfg: &TrainingConfig, prep: &Prepared) -> Result<Vec<LocalDemo>> {
    if schedules.len() != demos.len() {
        return Err(Error::Dimension { expected: demos.len(), got: schedules.len() });
    }
    demos
        .iter()
        .zip(schedules)
        .zip(&prep.frames)
        .map(|((d, s), f)| {
            let a = attractor_trajectory(&cfg.geometry, d, s)?;
            Ok(LocalDemo::new(&cfg.geometry, &a.points, f))
        })
        .collect()
}

/// Trains a skill with the configured constant initial gains.
pub fn train(demos: &[Demonstration], cfg: &TrainingConfig) -> Result<(SkillModel, TrainingReport)> {
    let schedules = vec![GainsSchedule::Constant(cfg.initial_gains()); demos.len()];
    train_with_schedules(demos, &schedules, cfg)
}

/// Trains a skill whose first attractor conversion uses `schedules`, one per
/// demonstration.
pub fn train_with_schedules(
    demos: &[Demonstration],
    schedules: &[GainsSchedule],
    cfg: &TrainingConfig,
) -> Result<(SkillModel, TrainingReport)> {
    cfg.check()?;
    let prep = prepare(demos, cfg)?;
    let gains = cfg.initial_gains();
    let mut report = TrainingReport::default();
    let mut schedules = schedules.to_vec();
    let mut previous: Option<Tphsmm> = None;
    let mut result = None;
    for outer in 0..cfg.outer_iterations {
        let locals = local_from(demos, &schedules, cfg, &prep)?;
        let start = match previous.take() {
            Some(m) => m,
            None => init_model(cfg.geometry, cfg.frames.clone(), &locals, cfg.components, cfg.init, cfg.topology, cfg.em.reg_floor)?,
        };
        let (model, resp, em) = em_fit(&start, &locals, &cfg.em)?;
        let data = stiffness_data(&model, &resp, &prep)?;
        let (stiffness, st) = optimize_stiffness(&cfg.geometry, &data, &gains.damping, &gains.stiffness, &cfg.stiffness)?;
        for w in &em.warnings {
            report.warnings.push(format!("round {outer}: {w}"));
        }
        for w in &st.warnings {
            report.warnings.push(format!("round {outer}: {w}"));
        }
        if outer + 1 < cfg.outer_iterations {
            schedules = resp
                .iter()
                .map(|r| {
                    GainsSchedule::PerSample(
                        (0..r.nrows())
                            .map(|t| ImpedanceGains::new(stiffness.stiffness[r.row(t).transpose().argmax().0].clone(), gains.damping.clone()))
                            .collect(),
                    )
                })
                .collect();
        }
        report.em = em;
        report.stiffness = st;
        previous = Some(model.clone());
        result = Some((model, resp, stiffness));
    }
    let (model, resp, stiffness) = result.expect("at least one outer iteration");
    let wrench_means = wrench_means(&resp, &prep, model.num_components());
    let mut last = Vector::zeros(model.num_components());
    for r in &resp {
        last += r.row(r.nrows() - 1).transpose();
    }
    let final_component = last.argmax().0;
    let nominal_steps = (demos.iter().map(Demonstration::len).sum::<usize>() as f64 / demos.len() as f64).round() as usize;
    let dt = demos.iter().map(Demonstration::dt).sum::<f64>() / demos.len() as f64;
    Ok((SkillModel { model, stiffness, damping: gains.damping, wrench_means, final_component, nominal_steps, dt }, report))
}

/// Per-demonstration inputs of the stiffness problem for a fitted model.
fn stiffness_data(model: &Tphsmm, resp: &Responsibilities, prep: &Prepared) -> Result<Vec<StiffnessData>> {
    prep.samples
        .iter()
        .zip(resp)
        .zip(&prep.frames)
        .map(|((s, r), f)| {
            let means = model.global_components(f)?.into_iter().map(|g| g.mean).collect();
            Ok(StiffnessData { samples: s.clone(), responsibilities: r.clone(), means })
        })
        .collect()
}

fn wrench_means(resp: &Responsibilities, prep: &Prepared, k_count: usize) -> Vec<Vector> {
    let n = prep.samples[0][0].f.len();
    (0..k_count)
        .map(|k| {
            let mut acc = Vector::zeros(n);
            let mut mass = 0.0;
            for (s, r) in prep.samples.iter().zip(resp) {
                for (t, x) in s.iter().enumerate() {
                    acc += &x.f * r[(t, k)];
                    mass += r[(t, k)];
                }
            }
            if mass > 0.0 {
                acc / mass
            } else {
                acc
            }
        })
        .collect()
}

impl SkillModel {
    /// Checks internal consistency after deserialization.
    pub fn check(&self) -> Result<()> {
        self.model.check()?;
        let k = self.model.num_components();
        let n = self.model.geometry.tangent_dim();
        if self.stiffness.stiffness.len() != k {
            return Err(Error::Dimension { expected: k, got: self.stiffness.stiffness.len() });
        }
        if self.wrench_means.len() != k {
            return Err(Error::Dimension { expected: k, got: self.wrench_means.len() });
        }
        for m in self.stiffness.stiffness.iter().chain(core::iter::once(&self.damping)) {
            if m.shape() != (n, n) {
                return Err(Error::Dimension { expected: n, got: m.nrows() });
            }
        }
        if self.final_component >= k {
            return Err(Error::UnknownComponent(self.final_component));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("skill time step must be positive"));
        }
        Ok(())
    }

    /// Scene for executing from `start` with the object at `object`.
    pub fn scene(&self, start: &Pose, object: &Pose) -> Result<Scene> {
        let frames = self
            .model
            .frame_names
            .iter()
            .map(|name| {
                let f = match name.as_str() {
                    ROBOT_FRAME => Frame::from_pose(start),
                    OBJECT_FRAME => Frame::from_pose(object),
                    GLOBAL_FRAME => Frame::identity(),
                    other => return Err(invalid(format!("unknown frame kind `{other}`"))),
                };
                Ok((name.clone(), f))
            })
            .collect::<Result<Vec<_>>>()?;
        Scene::new(frames)
    }
}
