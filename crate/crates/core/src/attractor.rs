//! Virtual-attractor transform of pose/force data.
//!
//! `y = exp_x( K^-ρ (K^ν ẋ + ẍ - f) )`, with `f` the wrench applied by the
//! environment on the end-effector in the global frame.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use crate::demo::{state_samples, Demonstration, StateSample};
use crate::error::{invalid, Error, Result};
use crate::manifold::{Geometry, Matrix, Pose, Vector};

/// Smallest stiffness eigenvalue accepted for inversion.
pub const MIN_INVERTIBLE_STIFFNESS: f64 = 1e-6;

/// Stiffness and damping of the impedance law.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpedanceGains {
    pub stiffness: Matrix,
    pub damping: Matrix,
}

impl ImpedanceGains {
    pub fn new(stiffness: Matrix, damping: Matrix) -> Self {
        ImpedanceGains { stiffness, damping }
    }

    /// `k·I` and `d·I`.
    pub fn isotropic(dim: usize, k: f64, d: f64) -> Self {
        ImpedanceGains::new(Matrix::identity(dim, dim) * k, Matrix::identity(dim, dim) * d)
    }

    /// Inverse stiffness; fails when the smallest eigenvalue is below
    /// [`MIN_INVERTIBLE_STIFFNESS`].
    pub fn compliance(&self) -> Result<Matrix> {
        invert_stiffness(&self.stiffness)
    }
}

pub fn invert_stiffness(k: &Matrix) -> Result<Matrix> {
    let sym = (k + k.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= MIN_INVERTIBLE_STIFFNESS) {
        return Err(Error::SingularStiffness(min));
    }
    let inv = eig.eigenvalues.map(|v| 1.0 / v);
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

/// The generalized force `K^ν ẋ + ẍ - f` that the stiffness has to balance.
pub fn driving_term(sample: &StateSample, damping: &Matrix) -> Vector {
    damping * &sample.xd + &sample.xdd - &sample.f
}

/// Attractor with an already inverted stiffness.
pub fn attractor_from_compliance(geometry: &Geometry, sample: &StateSample, compliance: &Matrix, damping: &Matrix) -> Vector {
    let v = compliance * driving_term(sample, damping);
    geometry.exp(&v, &sample.x)
}

/// Attractor pose for one sample.
pub fn attractor_point(geometry: &Geometry, sample: &StateSample, gains: &ImpedanceGains) -> Result<Vector> {
    check_dims(geometry, sample, gains)?;
    let c = gains.compliance()?;
    Ok(attractor_from_compliance(geometry, sample, &c, &gains.damping))
}

fn check_dims(geometry: &Geometry, sample: &StateSample, gains: &ImpedanceGains) -> Result<()> {
    let n = geometry.tangent_dim();
    geometry.check_point(&sample.x)?;
    for len in [sample.xd.len(), sample.xdd.len(), sample.f.len(), gains.stiffness.nrows(), gains.damping.nrows()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    Ok(())
}

/// Gains used for each sample when converting a demonstration.
#[derive(Clone, Debug, PartialEq)]
pub enum GainsSchedule {
    Constant(ImpedanceGains),
    PerSample(Vec<ImpedanceGains>),
}

impl GainsSchedule {
    fn at(&self, i: usize) -> &ImpedanceGains {
        match self {
            GainsSchedule::Constant(g) => g,
            GainsSchedule::PerSample(gs) => &gs[i],
        }
    }
}

/// Attractor demonstration: attractor points with the matching object poses.
#[derive(Clone, Debug, PartialEq)]
pub struct AttractorTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vector>,
    pub objects: Vec<Pose>,
}

/// Pointwise attractor transform of a whole demonstration.
pub fn attractor_trajectory(geometry: &Geometry, demo: &Demonstration, schedule: &GainsSchedule) -> Result<AttractorTrajectory> {
    let samples = state_samples(demo, geometry)?;
    if let GainsSchedule::PerSample(gs) = schedule {
        if gs.len() != samples.len() {
            return Err(invalid("gain schedule length differs from demonstration length"));
        }
    }
    let constant = match schedule {
        GainsSchedule::Constant(g) => Some(g.compliance()?),
        GainsSchedule::PerSample(_) => None,
    };
    let mut points = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let g = schedule.at(i);
        check_dims(geometry, s, g)?;
        let c = match &constant {
            Some(c) => c.clone(),
            None => g.compliance()?,
        };
        points.push(attractor_from_compliance(geometry, s, &c, &g.damping));
    }
    Ok(AttractorTrajectory {
        times: demo.points.iter().map(|p| p.time).collect(),
        points,
        objects: demo.points.iter().map(|p| p.object).collect(),
    })
}

/// Virtual attractor observations of an executed segment.
///
/// `executed[ℓ]` is the id of the stiffness used at step `ℓ`; the matching
/// entry of `stiffness` is inverted, with the execution damping.
pub fn virtual_attractor_series(
    geometry: &Geometry,
    past: &[StateSample],
    executed: &[usize],
    stiffness: &[Matrix],
    damping: &Matrix,
) -> Result<Vec<Vector>> {
    if past.len() != executed.len() {
        return Err(invalid("one executed component id is needed per past sample"));
    }
    let mut compliance: Vec<Option<Matrix>> = alloc::vec![None; stiffness.len()];
    past.iter()
        .zip(executed)
        .map(|(s, &k)| {
            let slot = compliance.get_mut(k).ok_or(Error::UnknownComponent(k))?;
            if slot.is_none() {
                *slot = Some(invert_stiffness(&stiffness[k])?);
            }
            let c = slot.as_ref().expect("filled above");
            Ok(attractor_from_compliance(geometry, s, c, damping))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample1(x: f64, xd: f64, xdd: f64, f: f64) -> StateSample {
        let v = |a: f64| Vector::from_vec(vec![a]);
        StateSample { x: v(x), xd: v(xd), xdd: v(xdd), f: v(f) }
    }

    #[test]
    fn rest_without_force_is_identity() {
        let g = Geometry::Pose;
        let x = Pose::from_position(nalgebra::Vector3::new(0.3, 0.1, 0.2)).to_point();
        let s = StateSample { x: x.clone(), xd: Vector::zeros(6), xdd: Vector::zeros(6), f: Vector::zeros(6) };
        let y = attractor_point(&g, &s, &ImpedanceGains::isotropic(6, 400.0, 40.0)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn velocity_term_one_dimensional() {
        let g = Geometry::Euclidean(1);
        let y = attractor_point(&g, &sample1(0.2, 1.0, 0.0, 0.0), &ImpedanceGains::isotropic(1, 400.0, 40.0)).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn force_term_one_dimensional() {
        let g = Geometry::Euclidean(1);
        let y = attractor_point(&g, &sample1(0.0, 0.0, 0.0, -20.0), &ImpedanceGains::isotropic(1, 400.0, 40.0)).unwrap();
        assert!((y[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn singular_stiffness_is_rejected() {
        let g = Geometry::Euclidean(1);
        let r = attractor_point(&g, &sample1(0.0, 0.0, 0.0, 1.0), &ImpedanceGains::isotropic(1, 0.0, 40.0));
        assert!(matches!(r, Err(Error::SingularStiffness(_))));
    }

    #[test]
    fn inverse_of_static_impedance() {
        // K (y - x) + K^ν (0 - ẋ) - ẍ + f = 0 with y from the transform
        let g = Geometry::Euclidean(3);
        let k = Matrix::from_row_slice(3, 3, &[500.0, 20.0, 0.0, 20.0, 300.0, 10.0, 0.0, 10.0, 800.0]);
        let gains = ImpedanceGains::new(k.clone(), Matrix::identity(3, 3) * 40.0);
        let s = StateSample {
            x: Vector::from_vec(vec![0.1, 0.2, 0.3]),
            xd: Vector::from_vec(vec![0.05, -0.1, 0.0]),
            xdd: Vector::from_vec(vec![0.3, 0.0, -0.2]),
            f: Vector::from_vec(vec![1.0, -2.0, 15.0]),
        };
        let y = attractor_point(&g, &s, &gains).unwrap();
        let balance = &k * (&y - &s.x) - &gains.damping * &s.xd - &s.xdd + &s.f;
        assert!(balance.norm() < 1e-12);
    }

    #[test]
    fn virtual_series_rejects_unknown_component() {
        let g = Geometry::Euclidean(1);
        let past = vec![sample1(0.0, 0.0, 0.0, 0.0)];
        let k = vec![Matrix::from_element(1, 1, 400.0)];
        let d = Matrix::from_element(1, 1, 40.0);
        assert!(matches!(
            virtual_attractor_series(&g, &past, &[1], &k, &d),
            Err(Error::UnknownComponent(1))
        ));
        let y = virtual_attractor_series(&g, &past, &[0], &k, &d).unwrap();
        assert_eq!(y[0][0], 0.0);
    }
}
