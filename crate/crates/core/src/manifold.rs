//! State-space geometry: plain `R^n` and the pose manifold `R^3 x S^3`.
//!
//! Points are stored as flat vectors. A pose point is
//! `[px, py, pz, qw, qx, qy, qz]` with a unit quaternion whose scalar part is
//! non-negative. Pose tangent vectors are `[vx, vy, vz, wx, wy, wz]`, where the
//! angular part is a rotation vector expressed in the global (spatial) frame,
//! so `exp_b(v)` rotates the base orientation by `exp(w)` on the left.
//!
//! Covariances of a [`ManifoldGaussian`] live in the tangent space at its mean.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Tolerance on the mean update of the iterative manifold Gaussian product.
pub const PRODUCT_TOL: f64 = 1e-10;
/// Iteration cap of the manifold Gaussian product.
pub const PRODUCT_MAX_ITER: usize = 100;
/// Default covariance regularization floor.
pub const DEFAULT_REG_FLOOR: f64 = 1e-6;

/// Which state space a skill lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Geometry {
    /// Plain `R^n`; all operations reduce to vector arithmetic.
    Euclidean(usize),
    /// Position and unit-quaternion orientation.
    Pose,
}

/// Position plus orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

/// A task-parameter frame: rotation and translation w.r.t. the global frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

/// Gaussian on a manifold: mean point plus covariance in the tangent space at the mean.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ManifoldGaussian {
    pub mean: Vector,
    pub cov: Matrix,
}

// ---------------------------------------------------------------------------
// quaternion helpers

fn canonical(q: Quaternion<f64>) -> Quaternion<f64> {
    let flip = if q.w != 0.0 {
        q.w < 0.0
    } else {
        let first = [q.i, q.j, q.k].into_iter().find(|c| *c != 0.0).unwrap_or(0.0);
        first < 0.0
    };
    if flip {
        -q
    } else {
        q
    }
}

/// Rotation vector of a unit quaternion with non-negative scalar part.
fn quat_log(r: &Quaternion<f64>) -> Vector3<f64> {
    let (w, v) = if r.w < 0.0 { (-r.w, -r.imag()) } else { (r.w, r.imag()) };
    let s = v.norm();
    if s < 1e-8 {
        // 2 atan(s/w)/s expanded around s = 0
        return v * (2.0 / w * (1.0 - s * s / (3.0 * w * w)));
    }
    if w == 0.0 {
        // half-turn: pick the axis sign deterministically
        let first = [v.x, v.y, v.z].into_iter().find(|c| *c != 0.0).unwrap_or(1.0);
        let axis = if first < 0.0 { -v / s } else { v / s };
        return axis * core::f64::consts::PI;
    }
    v * (2.0 * s.atan2(w) / s)
}

fn quat_exp(w: &Vector3<f64>) -> Quaternion<f64> {
    let theta = w.norm();
    let half = 0.5 * theta;
    let k = if theta < 1e-8 {
        0.5 - theta * theta / 48.0
    } else {
        half.sin() / theta
    };
    Quaternion::new(half.cos(), w.x * k, w.y * k, w.z * k)
}

fn quat_at(p: &Vector) -> Quaternion<f64> {
    Quaternion::new(p[3], p[4], p[5], p[6])
}

fn unit(q: Quaternion<f64>) -> Quaternion<f64> {
    let n = q.norm();
    q / n
}

/// Rotation vector taking `b` to `a`, i.e. `log(a * b^-1)` after resolving the double cover.
pub fn rotation_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut qa = *a.quaternion();
    let qb = *b.quaternion();
    if qa.coords.dot(&qb.coords) < 0.0 {
        qa = -qa;
    }
    quat_log(&(qa * qb.conjugate()))
}

/// Unit quaternion for a rotation vector.
pub fn rotation_from_vector(w: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_unchecked(quat_exp(w))
}

// ---------------------------------------------------------------------------
// typed pose / frame

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose { position, orientation }
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_position(position: Vector3<f64>) -> Self {
        Pose::new(position, UnitQuaternion::identity())
    }

    /// Flat 7-vector with canonical quaternion sign.
    pub fn to_point(&self) -> Vector {
        let q = canonical(*self.orientation.quaternion());
        Vector::from_vec(alloc::vec![
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k
        ])
    }

    /// Reads a flat 7-vector, normalizing the quaternion.
    pub fn from_point(p: &Vector) -> Self {
        let q = canonical(unit(quat_at(p)));
        Pose::new(
            Vector3::new(p[0], p[1], p[2]),
            UnitQuaternion::new_unchecked(q),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

impl Frame {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Frame { rotation, translation }
    }

    pub fn identity() -> Self {
        Frame::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Frame::new(UnitQuaternion::identity(), translation)
    }

    /// Frame located at a pose.
    pub fn from_pose(p: &Pose) -> Self {
        Frame::new(p.orientation, p.position)
    }

    pub fn to_pose(&self) -> Pose {
        Pose::new(self.translation, self.rotation)
    }

    /// `self` applied after `inner`: `(self ∘ inner).apply(p) = self.apply(inner.apply(p))`.
    pub fn compose(&self, inner: &Frame) -> Frame {
        Frame::new(
            self.rotation * inner.rotation,
            self.rotation * inner.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Frame {
        let r = self.rotation.inverse();
        Frame::new(r, -(r * self.translation))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    pub fn apply_pose(&self, p: &Pose) -> Pose {
        Pose::new(
            self.rotation * p.position + self.translation,
            self.rotation * p.orientation,
        )
    }

    pub fn unapply_pose(&self, p: &Pose) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv * (p.position - self.translation), inv * p.orientation)
    }
}

// ---------------------------------------------------------------------------
// geometry operations

impl Geometry {
    /// Length of the flat point representation.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Geometry::Euclidean(n) => *n,
            Geometry::Pose => 7,
        }
    }

    /// Dimension of tangent vectors.
    pub fn tangent_dim(&self) -> usize {
        match self {
            Geometry::Euclidean(n) => *n,
            Geometry::Pose => 6,
        }
    }

    pub fn check_point(&self, p: &Vector) -> Result<()> {
        if p.len() != self.ambient_dim() {
            return Err(Error::Dimension {
                expected: self.ambient_dim(),
                got: p.len(),
            });
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(degenerate("non-finite point"));
        }
        Ok(())
    }

    /// Unit-normalizes the orientation part and fixes its sign.
    pub fn normalize(&self, p: &Vector) -> Vector {
        match self {
            Geometry::Euclidean(_) => p.clone(),
            Geometry::Pose => Pose::from_point(p).to_point(),
        }
    }

    /// Identity point (origin, identity orientation).
    pub fn origin(&self) -> Vector {
        match self {
            Geometry::Euclidean(n) => Vector::zeros(*n),
            Geometry::Pose => Pose::identity().to_point(),
        }
    }

    /// Logarithmic map: tangent vector at `base` pointing to `p`.
    pub fn log(&self, p: &Vector, base: &Vector) -> Vector {
        match self {
            Geometry::Euclidean(_) => p - base,
            Geometry::Pose => {
                let mut qp = quat_at(p);
                let qb = quat_at(base);
                if qp.coords.dot(&qb.coords) < 0.0 {
                    qp = -qp;
                }
                let w = if qp == qb {
                    Vector3::zeros()
                } else {
                    quat_log(&(qp * qb.conjugate()))
                };
                Vector::from_vec(alloc::vec![
                    p[0] - base[0],
                    p[1] - base[1],
                    p[2] - base[2],
                    w.x,
                    w.y,
                    w.z
                ])
            }
        }
    }

    /// Exponential map of tangent vector `v` at `base`.
    pub fn exp(&self, v: &Vector, base: &Vector) -> Vector {
        match self {
            Geometry::Euclidean(_) => base + v,
            Geometry::Pose => {
                let w = Vector3::new(v[3], v[4], v[5]);
                let q = canonical(unit(quat_exp(&w) * quat_at(base)));
                Vector::from_vec(alloc::vec![
                    base[0] + v[0],
                    base[1] + v[1],
                    base[2] + v[2],
                    q.w,
                    q.i,
                    q.j,
                    q.k
                ])
            }
        }
    }

    /// Geodesic distance.
    pub fn distance(&self, a: &Vector, b: &Vector) -> f64 {
        self.log(a, b).norm()
    }

    /// Parallel transport of `v` from the tangent space at `from` to the one at `to`.
    pub fn transport(&self, v: &Vector, from: &Vector, to: &Vector) -> Vector {
        match self {
            Geometry::Euclidean(_) => v.clone(),
            Geometry::Pose => {
                let a = quat_at(from);
                let mut b = quat_at(to);
                if a.coords.dot(&b.coords) < 0.0 {
                    b = -b;
                }
                // tangent of S^3 at `a` in R^4: 1/2 (0, w) * a
                let w = Quaternion::new(0.0, v[3], v[4], v[5]);
                let t = (w * a) * 0.5;
                let ab = a.coords.dot(&b.coords);
                let coef = t.coords.dot(&b.coords) / (1.0 + ab);
                let moved = t - (a + b) * coef;
                let w2 = (moved * b.conjugate()) * 2.0;
                Vector::from_vec(alloc::vec![v[0], v[1], v[2], w2.i, w2.j, w2.k])
            }
        }
    }

    /// Matrix of the linear map `transport(., from, to)`.
    pub fn transport_matrix(&self, from: &Vector, to: &Vector) -> Matrix {
        let n = self.tangent_dim();
        match self {
            Geometry::Euclidean(_) => Matrix::identity(n, n),
            Geometry::Pose => {
                let mut m = Matrix::zeros(n, n);
                for j in 0..n {
                    let mut e = Vector::zeros(n);
                    e[j] = 1.0;
                    m.set_column(j, &self.transport(&e, from, to));
                }
                m
            }
        }
    }

    /// Linear action of a frame's rotation on tangent vectors.
    pub fn frame_linear(&self, f: &Frame) -> Matrix {
        let r = f.rotation_matrix();
        let n = self.tangent_dim();
        let mut m = Matrix::identity(n, n);
        // rotation acts on every complete 3-block; leftover coordinates are untouched
        for block in 0..n / 3 {
            m.view_mut((3 * block, 3 * block), (3, 3)).copy_from(&r);
        }
        m
    }

    fn frame_offset(&self, f: &Frame) -> Vector {
        let n = self.ambient_dim();
        let mut t = Vector::zeros(n);
        for i in 0..n.min(3) {
            t[i] = f.translation[i];
        }
        t
    }

    /// Express a local point (in frame `f`) in the global frame.
    pub fn frame_apply(&self, f: &Frame, p: &Vector) -> Vector {
        match self {
            Geometry::Euclidean(_) => self.frame_linear(f) * p + self.frame_offset(f),
            Geometry::Pose => f.apply_pose(&pose_raw(p)).to_point(),
        }
    }

    /// Express a global point in frame `f`.
    pub fn frame_unapply(&self, f: &Frame, p: &Vector) -> Vector {
        match self {
            Geometry::Euclidean(_) => self.frame_linear(f).transpose() * (p - self.frame_offset(f)),
            Geometry::Pose => f.unapply_pose(&pose_raw(p)).to_point(),
        }
    }

    /// Gaussian expressed in frame `f`, mapped to the global frame.
    pub fn gaussian_apply(&self, f: &Frame, g: &ManifoldGaussian) -> ManifoldGaussian {
        let l = self.frame_linear(f);
        ManifoldGaussian {
            mean: self.frame_apply(f, &g.mean),
            cov: &l * &g.cov * l.transpose(),
        }
    }
}

fn pose_raw(p: &Vector) -> Pose {
    Pose::new(
        Vector3::new(p[0], p[1], p[2]),
        UnitQuaternion::new_unchecked(quat_at(p)),
    )
}

// ---------------------------------------------------------------------------
// Gaussians

/// Symmetrizes and adds `floor * I`.
pub fn regularize(cov: &Matrix, floor: f64) -> Matrix {
    let n = cov.nrows();
    (cov + cov.transpose()) * 0.5 + Matrix::identity(n, n) * floor
}

/// Closest covariance with every eigenvalue at least `floor`: the maximum
/// likelihood covariance under that constraint.
pub fn clamp_eigenvalues(cov: &Matrix, floor: f64) -> Matrix {
    let eig = ((cov + cov.transpose()) * 0.5).symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(floor));
    let m = &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| degenerate("covariance is not positive definite"))
}

impl ManifoldGaussian {
    pub fn new(mean: Vector, cov: Matrix) -> Self {
        ManifoldGaussian { mean, cov }
    }

    /// Log-density of `x`, evaluated in the tangent space at the mean.
    pub fn log_density(&self, geometry: &Geometry, x: &Vector) -> Result<f64> {
        Ok(GaussianDensity::new(self)?.log_density(geometry, x))
    }
}

/// Gaussian with a cached inverse Cholesky factor for repeated evaluation.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    pub mean: Vector,
    l_inv: Matrix,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(g: &ManifoldGaussian) -> Result<Self> {
        let sym = (&g.cov + g.cov.transpose()) * 0.5;
        let chol = sym
            .cholesky()
            .ok_or_else(|| degenerate("covariance is not positive definite"))?;
        let l = chol.l();
        let n = l.nrows();
        let l_inv = l
            .clone()
            .solve_lower_triangular(&Matrix::identity(n, n))
            .ok_or_else(|| degenerate("singular Cholesky factor"))?;
        let log_det_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let log_norm = -log_det_half - 0.5 * n as f64 * (2.0 * core::f64::consts::PI).ln();
        Ok(GaussianDensity {
            mean: g.mean.clone(),
            l_inv,
            log_norm,
        })
    }

    pub fn log_density(&self, geometry: &Geometry, x: &Vector) -> f64 {
        let d = geometry.log(x, &self.mean);
        self.log_norm - 0.5 * (&self.l_inv * d).norm_squared()
    }

    /// Log-density of a tangent-space deviation from the mean.
    pub fn log_density_tangent(&self, d: &Vector) -> f64 {
        self.log_norm - 0.5 * (&self.l_inv * d).norm_squared()
    }
}

/// Product of Gaussians.
///
/// Euclidean inputs use the closed form `Σ = (Σ_i Σ_i^-1)^-1`, `μ = Σ Σ_i Σ_i^-1 μ_i`.
/// Pose inputs are re-linearized at the current estimate until the mean update
/// falls below [`PRODUCT_TOL`] or [`PRODUCT_MAX_ITER`] iterations elapse.
pub fn gaussian_product(geometry: &Geometry, gs: &[ManifoldGaussian]) -> Result<ManifoldGaussian> {
    let first = gs.first().ok_or_else(|| degenerate("empty Gaussian product"))?;
    if gs.len() == 1 {
        return Ok(first.clone());
    }
    let n = geometry.tangent_dim();
    match geometry {
        Geometry::Euclidean(_) => {
            let mut lam = Matrix::zeros(n, n);
            let mut eta = Vector::zeros(n);
            for g in gs {
                let li = spd_inverse(&g.cov)?;
                eta += &li * &g.mean;
                lam += li;
            }
            let cov = spd_inverse(&lam)?;
            let mean = &cov * eta;
            Ok(ManifoldGaussian { mean, cov })
        }
        Geometry::Pose => {
            let mut mean = first.mean.clone();
            let mut cov = Matrix::zeros(n, n);
            for _ in 0..PRODUCT_MAX_ITER {
                let mut lam = Matrix::zeros(n, n);
                let mut eta = Vector::zeros(n);
                for g in gs {
                    let u = geometry.log(&g.mean, &mean);
                    let t = geometry.transport_matrix(&g.mean, &mean);
                    let li = spd_inverse(&(&t * &g.cov * t.transpose()))?;
                    eta += &li * u;
                    lam += li;
                }
                cov = spd_inverse(&lam)?;
                let delta = &cov * eta;
                mean = geometry.exp(&delta, &mean);
                if delta.norm() < PRODUCT_TOL {
                    break;
                }
            }
            Ok(ManifoldGaussian { mean, cov })
        }
    }
}

/// Weighted Fréchet mean, by iterated tangent-space averaging from `start`.
pub fn weighted_mean(geometry: &Geometry, points: &[&Vector], weights: &[f64], start: &Vector) -> Vector {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return start.clone();
    }
    let n = geometry.tangent_dim();
    match geometry {
        Geometry::Euclidean(_) => {
            let mut acc = Vector::zeros(n);
            for (p, w) in points.iter().zip(weights) {
                acc.axpy(*w, p, 1.0);
            }
            acc / total
        }
        Geometry::Pose => {
            let mut mean = start.clone();
            for _ in 0..50 {
                let mut acc = Vector::zeros(n);
                for (p, w) in points.iter().zip(weights) {
                    if *w != 0.0 {
                        acc.axpy(*w, &geometry.log(p, &mean), 1.0);
                    }
                }
                acc /= total;
                mean = geometry.exp(&acc, &mean);
                if acc.norm() < 1e-12 {
                    break;
                }
            }
            mean
        }
    }
}

/// Weighted (biased) covariance in the tangent space at `mean`.
pub fn weighted_covariance(geometry: &Geometry, points: &[&Vector], weights: &[f64], mean: &Vector) -> Matrix {
    let n = geometry.tangent_dim();
    let total: f64 = weights.iter().sum();
    let mut cov = Matrix::zeros(n, n);
    if total <= 0.0 {
        return cov;
    }
    for (p, w) in points.iter().zip(weights) {
        if *w != 0.0 {
            let d = geometry.log(p, mean);
            cov.ger(*w / total, &d, &d, 1.0);
        }
    }
    cov
}

/// Collects references for [`weighted_mean`] and friends.
pub fn refs(points: &[Vector]) -> Vec<&Vector> {
    points.iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pose_point(p: [f64; 3], axis: [f64; 3], angle: f64) -> Vector {
        let w = Vector3::from(axis).normalize() * angle;
        Pose::new(Vector3::from(p), rotation_from_vector(&w)).to_point()
    }

    #[test]
    fn log_of_base_is_zero() {
        let g = Geometry::Pose;
        let b = pose_point([0.1, 0.2, 0.3], [1.0, 2.0, 0.5], 0.7);
        assert_eq!(g.log(&b, &b).norm(), 0.0);
    }

    #[test]
    fn double_cover_resolved() {
        let g = Geometry::Pose;
        let b = pose_point([0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.2);
        let mut p = b.clone();
        for i in 3..7 {
            p[i] = -p[i];
        }
        let v = g.log(&p, &b);
        assert!(v.rows(3, 3).norm() < 1e-15);
    }

    #[test]
    fn half_turn_about_x() {
        let g = Geometry::Pose;
        let v = Vector::from_vec(vec![0.0, 0.0, 0.0, core::f64::consts::PI, 0.0, 0.0]);
        let p = g.exp(&v, &g.origin());
        assert!(p[3].abs() < 1e-15);
        assert!((p[4] - 1.0).abs() < 1e-15);
        assert_eq!((p[5], p[6]), (0.0, 0.0));
        // and back: the half-turn axis comes out as +x
        let back = g.log(&p, &g.origin());
        assert!((back[3] - core::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn exp_of_zero_is_base() {
        let g = Geometry::Pose;
        let b = pose_point([1.0, -2.0, 0.5], [0.3, 0.3, 1.0], 2.0);
        assert_eq!(g.exp(&Vector::zeros(6), &b), b);
    }

    #[test]
    fn transport_to_self_is_identity() {
        let g = Geometry::Pose;
        let b = pose_point([0.0, 0.0, 0.0], [1.0, 0.0, 1.0], 0.4);
        let v = Vector::from_vec(vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        assert!((g.transport(&v, &b, &b) - &v).norm() < 1e-15);
    }

    #[test]
    fn pure_translation_frame() {
        let g = Geometry::Pose;
        let f = Frame::from_translation(Vector3::new(0.5, -1.0, 2.0));
        let p = pose_point([1.0, 1.0, 1.0], [0.0, 0.0, 1.0], 0.3);
        let local = g.frame_unapply(&f, &p);
        assert_eq!(local[0], 0.5);
        assert_eq!(local[1], 2.0);
        assert_eq!(local[2], -1.0);
        for i in 3..7 {
            assert!((local[i] - p[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_frame_is_noop() {
        let g = Geometry::Pose;
        let p = pose_point([1.0, 2.0, 3.0], [1.0, 1.0, 0.0], 0.9);
        assert!((g.frame_unapply(&Frame::identity(), &p) - &p).norm() < 1e-15);
        let e = Geometry::Euclidean(2);
        let x = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(e.frame_apply(&Frame::identity(), &x), x);
    }

    #[test]
    fn single_gaussian_product_is_itself() {
        let g = Geometry::Euclidean(2);
        let a = ManifoldGaussian::new(
            Vector::from_vec(vec![1.0, 2.0]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        );
        assert_eq!(gaussian_product(&g, core::slice::from_ref(&a)).unwrap(), a);
    }

    #[test]
    fn product_of_two_standard_normals() {
        let g = Geometry::Euclidean(2);
        let a = ManifoldGaussian::new(Vector::zeros(2), Matrix::identity(2, 2));
        let p = gaussian_product(&g, &[a.clone(), a]).unwrap();
        assert!(p.mean.norm() < 1e-15);
        assert!((p.cov - Matrix::identity(2, 2) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let g = Geometry::Euclidean(2);
        let a = ManifoldGaussian::new(Vector::zeros(2), Matrix::zeros(2, 2));
        let b = ManifoldGaussian::new(Vector::zeros(2), Matrix::identity(2, 2));
        assert!(matches!(gaussian_product(&g, &[a, b]), Err(Error::Degenerate(_))));
        assert!(gaussian_product(&g, &[]).is_err());
    }

    #[test]
    fn density_matches_scalar_formula() {
        let g = Geometry::Euclidean(1);
        let d = ManifoldGaussian::new(Vector::from_vec(vec![1.0]), Matrix::from_element(1, 1, 4.0));
        let x = Vector::from_vec(vec![2.0]);
        let expected = -0.5 * (0.25 + (2.0 * core::f64::consts::PI * 4.0).ln());
        assert!((d.log_density(&g, &x).unwrap() - expected).abs() < 1e-14);
    }
}
