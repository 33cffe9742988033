//! Scripted press skill used by the generator and the examples.
//!
//! The object sits on a horizontal surface through its origin. The robot
//! approaches a point above the object, presses into the surface with a
//! stiff vertical axis and retracts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::execution::{
    generate_synthetic_demo, Environment, NoiseConfig, PlantConfig, Stage, SyntheticDemo, SyntheticScript,
};
use crate::manifold::{Matrix, Pose, Vector};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PressParams {
    /// Height of the approach point above the surface.
    pub approach_height: f64,
    /// Depth of the press attractor below the surface.
    pub press_depth: f64,
    /// Height of the retract point above the surface.
    pub retract_height: f64,
    pub approach_stiffness: f64,
    /// Vertical stiffness while pressing.
    pub press_stiffness: f64,
    /// Lateral stiffness while pressing.
    pub press_lateral_stiffness: f64,
    pub retract_stiffness: f64,
    pub rotational_stiffness: f64,
    pub damping: f64,
    /// (ramp, hold) seconds per stage.
    pub timing: [(f64, f64); 3],
}

impl Default for PressParams {
    fn default() -> Self {
        PressParams {
            approach_height: 0.03,
            press_depth: 0.02,
            retract_height: 0.05,
            approach_stiffness: 400.0,
            press_stiffness: 800.0,
            press_lateral_stiffness: 200.0,
            retract_stiffness: 400.0,
            rotational_stiffness: 40.0,
            damping: 40.0,
            timing: [(1.5, 0.5), (0.5, 1.5), (1.0, 0.5)],
        }
    }
}

fn gains(lin: [f64; 3], rot: f64) -> Matrix {
    Matrix::from_diagonal(&Vector::from_vec(vec![lin[0], lin[1], lin[2], rot, rot, rot]))
}

impl PressParams {
    /// Ground-truth stiffness of each stage.
    pub fn stage_stiffness(&self) -> [Matrix; 3] {
        let r = self.rotational_stiffness;
        [
            gains([self.approach_stiffness; 3], r),
            gains([self.press_lateral_stiffness, self.press_lateral_stiffness, self.press_stiffness], r),
            gains([self.retract_stiffness; 3], r),
        ]
    }

    /// Attractor target of each stage for an object at `object`.
    pub fn targets(&self, object: &Pose, orientation: UnitQuaternion<f64>) -> [Pose; 3] {
        let at = |h: f64| Pose::new(object.position + object.orientation * Vector3::new(0.0, 0.0, h), orientation);
        [at(self.approach_height), at(-self.press_depth), at(self.retract_height)]
    }

    pub fn script(&self, id: impl Into<String>, start: Pose, object: Pose) -> SyntheticScript {
        let k = self.stage_stiffness();
        let targets = self.targets(&object, start.orientation);
        let stages = (0..3)
            .map(|i| Stage { target: targets[i], ramp: self.timing[i].0, hold: self.timing[i].1, stiffness: k[i].clone() })
            .collect();
        SyntheticScript {
            id: id.into(),
            start,
            object,
            stages,
            damping: Matrix::identity(6, 6) * self.damping,
        }
    }
}

/// Surface through the object origin, normal along the object z axis.
pub fn press_environment(object: &Pose) -> Result<Environment> {
    Environment::with_plane(object.position, object.orientation * Vector3::z())
}

/// Noise added to generated demonstrations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DemoNoise {
    pub position_std: f64,
    pub wrench_std: f64,
}

/// `count` press demonstrations. The first uses `object`; the others move it
/// uniformly within `spread` along x and y. Deterministic in `seed`.
#[allow(clippy::too_many_arguments)]
pub fn press_demos(
    params: &PressParams,
    start: Pose,
    object: Pose,
    spread: f64,
    count: usize,
    dt: f64,
    noise: DemoNoise,
    seed: u64,
) -> Result<Vec<SyntheticDemo>> {
    if !(spread >= 0.0) {
        return Err(invalid("object spread must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plant = PlantConfig::default();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut obj = object;
        if i > 0 && spread > 0.0 {
            obj.position.x += rng.random_range(-spread..=spread);
            obj.position.y += rng.random_range(-spread..=spread);
        }
        let noise_seed = rng.random::<u64>();
        let env = press_environment(&obj)?;
        let n = (noise.position_std > 0.0 || noise.wrench_std > 0.0).then_some(NoiseConfig {
            position_std: noise.position_std,
            wrench_std: noise.wrench_std,
            seed: noise_seed,
        });
        out.push(generate_synthetic_demo(&params.script(format!("press_{i:02}"), start, obj), &env, &plant, dt, n)?);
    }
    Ok(out)
}
