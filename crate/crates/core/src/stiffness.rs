//! Per-component stiffness from attractor residuals.
//!
//! With the compliance `S = K^-1` as decision variable the residual of
//! component `k` in demonstration `m`,
//!
//! ```text
//! ε_m(S) = Σ_t p_{t,k} (log_{x_t}(μ_k) - S (K^ν ẋ_t + ẍ_t - f_t)) = a_m - S b_m,
//! ```
//!
//! is affine, and `½‖Σ_m ε_m‖²` is minimized over symmetric PSD `S` by a
//! monotone accelerated projected gradient method.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::attractor::driving_term;
use crate::demo::StateSample;
use crate::error::{invalid, Error, Result};
use crate::manifold::{Geometry, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StiffnessStructure {
    /// Translational and rotational blocks without coupling (pose only).
    #[default]
    BlockDiagonal,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StiffnessConfig {
    pub structure: StiffnessStructure,
    /// Minimize `Σ_m ‖ε_m‖²` instead of `‖Σ_m ε_m‖²`.
    pub sum_of_squared_residuals: bool,
    pub min_stiffness: f64,
    pub max_stiffness: f64,
    /// Relative objective change that stops the solver.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StiffnessConfig {
    fn default() -> Self {
        StiffnessConfig {
            structure: StiffnessStructure::BlockDiagonal,
            sum_of_squared_residuals: false,
            min_stiffness: 1.0,
            max_stiffness: 5000.0,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

/// Optimized stiffness of every component.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StiffnessModel {
    pub stiffness: Vec<Matrix>,
    pub structure: StiffnessStructure,
}

/// Outcome of one component's solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    /// Objective of the accepted iterate, starting with the initial point.
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StiffnessReport {
    pub traces: Vec<SolveTrace>,
    pub warnings: Vec<String>,
}

/// The affine pieces `(a, b)` of a residual `a - S b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualTerms {
    pub a: Vector,
    pub b: Vector,
}

impl ResidualTerms {
    pub fn residual(&self, s: &Matrix) -> Vector {
        &self.a - s * &self.b
    }
}

/// `a = Σ p_t log_{x_t}(μ)` and `b = Σ p_t (K^ν ẋ_t + ẍ_t - f_t)`.
pub fn residual_terms(
    geometry: &Geometry,
    samples: &[StateSample],
    weights: &[f64],
    mean: &Vector,
    damping: &Matrix,
) -> Result<ResidualTerms> {
    if samples.len() != weights.len() {
        return Err(Error::Dimension { expected: samples.len(), got: weights.len() });
    }
    let n = geometry.tangent_dim();
    let mut a = Vector::zeros(n);
    let mut b = Vector::zeros(n);
    for (s, &p) in samples.iter().zip(weights) {
        if p == 0.0 {
            continue;
        }
        a.axpy(p, &geometry.log(mean, &s.x), 1.0);
        b.axpy(p, &driving_term(s, damping), 1.0);
    }
    Ok(ResidualTerms { a, b })
}

/// Residual `ε` of one component in one demonstration at compliance `s`.
pub fn component_residual(
    geometry: &Geometry,
    samples: &[StateSample],
    weights: &[f64],
    mean: &Vector,
    damping: &Matrix,
    s: &Matrix,
) -> Result<Vector> {
    Ok(residual_terms(geometry, samples, weights, mean, damping)?.residual(s))
}

/// Nearest PSD matrix in Frobenius norm, after symmetrization.
pub fn psd_project(m: &Matrix) -> Matrix {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * Matrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Diagonal blocks `(start, len)` of a stiffness structure.
pub fn blocks(geometry: &Geometry, structure: StiffnessStructure) -> Vec<(usize, usize)> {
    match (geometry, structure) {
        (Geometry::Pose, StiffnessStructure::BlockDiagonal) => alloc::vec![(0, 3), (3, 3)],
        _ => alloc::vec![(0, geometry.tangent_dim())],
    }
}

/// Projection onto symmetric PSD matrices with the given block pattern.
fn project(m: &Matrix, blocks: &[(usize, usize)]) -> Matrix {
    let n = m.nrows();
    let mut out = Matrix::zeros(n, n);
    for &(s, l) in blocks {
        let sub = m.view((s, s), (l, l)).into_owned();
        out.view_mut((s, s), (l, l)).copy_from(&psd_project(&sub));
    }
    out
}

fn objective(terms: &[ResidualTerms], s: &Matrix) -> f64 {
    0.5 * terms.iter().map(|t| t.residual(s).norm_squared()).sum::<f64>()
}

fn gradient(terms: &[ResidualTerms], s: &Matrix) -> Matrix {
    let n = s.nrows();
    let mut g = Matrix::zeros(n, n);
    for t in terms {
        g.ger(-1.0, &t.residual(s), &t.b, 1.0);
    }
    (&g + g.transpose()) * 0.5
}

/// Minimizes `½ Σ_i ‖a_i - S b_i‖²` over block-structured PSD `S`, starting at `s0`.
///
/// Monotone FISTA with step `1 / λ_max(Σ_i b_i b_iᵀ)`.
pub fn solve_compliance(
    terms: &[ResidualTerms],
    s0: &Matrix,
    blocks: &[(usize, usize)],
    tol: f64,
    max_iter: usize,
) -> (Matrix, SolveTrace) {
    let n = s0.nrows();
    let mut bb = Matrix::zeros(n, n);
    for t in terms {
        bb.ger(1.0, &t.b, &t.b, 1.0);
    }
    let lipschitz = bb.symmetric_eigen().eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut x = project(s0, blocks);
    let mut fx = objective(terms, &x);
    let mut trace = SolveTrace { objective: alloc::vec![fx], converged: false };
    if !(lipschitz > 0.0) || fx == 0.0 {
        trace.converged = true;
        return (x, trace);
    }
    let step = 1.0 / lipschitz;
    // below this the objective is rounding noise
    let floor = fx * f64::EPSILON;
    let s_norm = x.norm().max(s0.norm());
    let noise = 0.5
        * terms
            .iter()
            .map(|t| (1e3 * f64::EPSILON * (t.a.norm() + s_norm * t.b.norm())).powi(2))
            .sum::<f64>();
    if fx <= noise {
        trace.converged = true;
        return (x, trace);
    }
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        let z = project(&(&y - gradient(terms, &y) * step), blocks);
        let fz = objective(terms, &z);
        let prev = x.clone();
        let fprev = fx;
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x + (&z - &x) * (t / tn) + (&x - &prev) * ((t - 1.0) / tn);
        t = tn;
        trace.objective.push(fx);
        if fx <= noise || (fz - fprev).abs() <= tol * fprev.max(floor) {
            trace.converged = true;
            break;
        }
    }
    (x, trace)
}

/// Stiffness from a compliance, eigenvalues clamped to `[min, max]` per block.
///
/// Returns the stiffness and whether any compliance eigenvalue was non-positive.
pub fn stiffness_from_compliance(s: &Matrix, blocks: &[(usize, usize)], min: f64, max: f64) -> (Matrix, bool) {
    let n = s.nrows();
    let mut k = Matrix::zeros(n, n);
    let mut singular = false;
    for &(start, len) in blocks {
        let sub = s.view((start, start), (len, len)).into_owned();
        let eig = ((&sub + sub.transpose()) * 0.5).symmetric_eigen();
        let inv = eig.eigenvalues.map(|v| {
            if v <= 1.0 / max {
                if v <= 0.0 {
                    singular = true;
                }
                max
            } else {
                (1.0 / v).clamp(min, max)
            }
        });
        let kb = &eig.eigenvectors * Matrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
        k.view_mut((start, start), (len, len)).copy_from(&((&kb + kb.transpose()) * 0.5));
    }
    (k, singular)
}

/// Training data of one demonstration for the stiffness problem.
#[derive(Clone, Debug, PartialEq)]
pub struct StiffnessData {
    pub samples: Vec<StateSample>,
    /// `T × K` responsibilities.
    pub responsibilities: Matrix,
    /// Global mean of every component under this demonstration's scene.
    pub means: Vec<Vector>,
}

/// Solves the stiffness problem of every component.
///
/// Components whose driving terms vanish keep `initial`.
pub fn optimize_stiffness(
    geometry: &Geometry,
    data: &[StiffnessData],
    damping: &Matrix,
    initial: &Matrix,
    cfg: &StiffnessConfig,
) -> Result<(StiffnessModel, StiffnessReport)> {
    let first = data.first().ok_or_else(|| invalid("no demonstrations"))?;
    let k_count = first.means.len();
    let n = geometry.tangent_dim();
    if initial.shape() != (n, n) || damping.shape() != (n, n) {
        return Err(Error::Dimension { expected: n, got: initial.nrows() });
    }
    let blocks = blocks(geometry, cfg.structure);
    let s0 = crate::attractor::invert_stiffness(initial)?;
    let mut report = StiffnessReport::default();
    let mut stiffness = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut terms = Vec::with_capacity(data.len());
        for d in data {
            if d.means.len() != k_count {
                return Err(Error::Dimension { expected: k_count, got: d.means.len() });
            }
            if d.responsibilities.nrows() != d.samples.len() || d.responsibilities.ncols() != k_count {
                return Err(Error::Dimension { expected: d.samples.len(), got: d.responsibilities.nrows() });
            }
            let w: Vec<f64> = d.responsibilities.column(k).iter().copied().collect();
            terms.push(residual_terms(geometry, &d.samples, &w, &d.means[k], damping)?);
        }
        if !cfg.sum_of_squared_residuals {
            let mut sum = ResidualTerms { a: Vector::zeros(n), b: Vector::zeros(n) };
            for t in &terms {
                sum.a += &t.a;
                sum.b += &t.b;
            }
            terms = alloc::vec![sum];
        }
        let (s, trace) = solve_compliance(&terms, &s0, &blocks, cfg.tol, cfg.max_iter);
        if s == s0 {
            stiffness.push(initial.clone());
        } else {
            let (kk, singular) = stiffness_from_compliance(&s, &blocks, cfg.min_stiffness, cfg.max_stiffness);
            if singular {
                report.warnings.push(format!("component {k}: singular compliance, stiffness clamped"));
            }
            stiffness.push(kk);
        }
        if !trace.converged {
            report.warnings.push(format!("component {k}: solver stopped at the iteration cap"));
        }
        report.traces.push(trace);
    }
    Ok((StiffnessModel { stiffness, structure: cfg.structure }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn zero_weights_give_zero_residual() {
        let g = Geometry::Euclidean(1);
        let s = StateSample { x: v(&[0.3]), xd: v(&[1.0]), xdd: v(&[0.0]), f: v(&[2.0]) };
        let r = component_residual(&g, &[s], &[0.0], &v(&[1.0]), &Matrix::identity(1, 1), &Matrix::identity(1, 1)).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn hand_evaluated_press() {
        let g = Geometry::Euclidean(1);
        let s = StateSample { x: v(&[0.0]), xd: v(&[0.0]), xdd: v(&[0.0]), f: v(&[-20.0]) };
        let r = component_residual(
            &g,
            &[s],
            &[1.0],
            &v(&[0.05]),
            &Matrix::from_element(1, 1, 40.0),
            &Matrix::from_element(1, 1, 1.0 / 400.0),
        )
        .unwrap();
        assert!(r[0].abs() < 1e-15);
    }

    #[test]
    fn clamp_negative_eigenvalue() {
        let m = Matrix::from_diagonal(&v(&[1.0, -2.0]));
        assert_eq!(psd_project(&m), Matrix::from_diagonal(&v(&[1.0, 0.0])));
    }

    #[test]
    fn length_mismatch() {
        let g = Geometry::Euclidean(1);
        let s = StateSample { x: v(&[0.0]), xd: v(&[0.0]), xdd: v(&[0.0]), f: v(&[0.0]) };
        let r = residual_terms(&g, &[s], &[1.0, 0.0], &v(&[0.0]), &Matrix::identity(1, 1));
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn vanishing_driving_term_keeps_initial() {
        let g = Geometry::Euclidean(2);
        let s = StateSample { x: v(&[0.0, 0.0]), xd: v(&[0.0, 0.0]), xdd: v(&[0.0, 0.0]), f: v(&[0.0, 0.0]) };
        let data = StiffnessData {
            samples: vec![s.clone(), s],
            responsibilities: Matrix::from_element(2, 1, 1.0),
            means: vec![v(&[0.01, 0.0])],
        };
        let init = Matrix::identity(2, 2) * 400.0;
        let (m, _) = optimize_stiffness(&g, &[data], &(Matrix::identity(2, 2) * 40.0), &init, &StiffnessConfig::default())
            .unwrap();
        assert_eq!(m.stiffness[0], init);
    }
}
