//! Component sequencing and reference generation.
//!
//! [`most_likely_sequence`] is the explicit-duration Viterbi decoder in which
//! only the first and the last step carry an observation; all other steps
//! contribute a factor of one. [`lqt_reference`] turns a per-step sequence of
//! Gaussians into a smooth reference by linear quadratic tracking on a double
//! integrator.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Error, Result};
use crate::manifold::{regularize, GaussianDensity, Geometry, ManifoldGaussian, Matrix, Vector, DEFAULT_REG_FLOOR};
use crate::tphsmm::{logsumexp, DurationModel};

/// Component id of the transition phase.
pub const TRANSITION: usize = usize::MAX;

/// Per-step component ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ComponentSequence {
    pub steps: Vec<usize>,
}

impl ComponentSequence {
    pub fn new(steps: Vec<usize>) -> Self {
        ComponentSequence { steps }
    }

    pub fn from_segments(segments: &[(usize, usize)]) -> Self {
        let mut steps = Vec::new();
        for &(k, d) in segments {
            steps.extend(core::iter::repeat_n(k, d));
        }
        ComponentSequence { steps }
    }

    /// Run-length form `(component, duration)`.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &k in &self.steps {
            match out.last_mut() {
                Some((c, d)) if *c == k => *d += 1,
                _ => out.push((k, 1)),
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Inputs of the decoder that come from the model and the scene.
#[derive(Clone, Copy, Debug)]
pub struct DecodeModel<'a> {
    pub geometry: &'a Geometry,
    /// Global Gaussian of every component.
    pub globals: &'a [ManifoldGaussian],
    pub priors: &'a [f64],
    pub transitions: &'a Matrix,
    pub durations: &'a [DurationModel],
    /// Largest admissible duration per component.
    pub max_durations: &'a [usize],
}

impl<'a> DecodeModel<'a> {
    fn check(&self) -> Result<usize> {
        let k = self.globals.len();
        if k == 0 {
            return Err(degenerate("no components to decode"));
        }
        for len in [self.priors.len(), self.durations.len(), self.max_durations.len(), self.transitions.nrows()] {
            if len != k {
                return Err(Error::Dimension { expected: k, got: len });
            }
        }
        Ok(k)
    }
}

/// Observations the decode is conditioned on.
#[derive(Clone, Copy, Debug, Default)]
pub struct DecodeEvidence<'a> {
    /// Observation at the first decoded step.
    pub start: Option<&'a Vector>,
    /// Desired observation at the last step.
    pub end: Option<&'a Vector>,
    /// Log-likelihood of earlier observations under the executed components.
    /// It shifts every path by the same amount.
    pub past_log_likelihood: f64,
    /// `(k, e)`: component `k` has already been active for `e` steps. A first
    /// segment of `k` continues that dwell, with its duration conditioned on it.
    pub elapsed: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub sequence: ComponentSequence,
    pub log_prob: f64,
    /// The last segment had to exceed its duration support to reach the horizon.
    pub widened: bool,
}

/// Log-likelihood of past virtual attractors, each under the Gaussian of the
/// component that was executed at that step.
pub fn past_log_likelihood(geometry: &Geometry, attractors: &[Vector], executed: &[&ManifoldGaussian]) -> Result<f64> {
    if attractors.len() != executed.len() {
        return Err(invalid("one executed Gaussian is needed per past attractor"));
    }
    let mut total = 0.0;
    for (y, g) in attractors.iter().zip(executed) {
        total += g.log_density(geometry, y)?;
    }
    Ok(total)
}

/// Most likely duration-annotated component path over `horizon` steps.
///
/// Ties are broken towards the lowest component id and the shortest
/// duration. When no path fits the duration supports, the final segment is
/// allowed to last up to `horizon` steps.
pub fn most_likely_sequence(model: &DecodeModel, horizon: usize, evidence: &DecodeEvidence) -> Result<Decoded> {
    let k_count = model.check()?;
    if horizon == 0 {
        return Err(invalid("decode horizon must be positive"));
    }
    let obs_term = |obs: Option<&Vector>| -> Result<Vec<f64>> {
        match obs {
            None => Ok(vec![0.0; k_count]),
            Some(x) => model
                .globals
                .iter()
                .map(|g| Ok(GaussianDensity::new(g)?.log_density(model.geometry, x)))
                .collect(),
        }
    };
    let start = obs_term(evidence.start)?;
    let end = obs_term(evidence.end)?;
    if let Some((k, _)) = evidence.elapsed {
        if k >= k_count {
            return Err(invalid(format!("elapsed component {k} out of range")));
        }
    }
    let first = decode(model, horizon, &start, &end, evidence.elapsed, false);
    let (mut decoded, widened) = match first {
        Some(d) => (d, false),
        None => (
            decode(model, horizon, &start, &end, evidence.elapsed, true).ok_or(Error::Infeasible(horizon))?,
            true,
        ),
    };
    decoded.log_prob += evidence.past_log_likelihood;
    decoded.widened = widened;
    Ok(decoded)
}

/// Log-probability of the remaining dwell `d` of a segment already `e` steps
/// long, over the remaining support `1..=cap`.
fn remaining_duration(dur: &DurationModel, e: usize, cap: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=cap).map(|d| dur.log_prob(e + d)).collect();
    let norm = logsumexp(raw.iter().copied());
    raw.iter().map(|v| v - norm).collect()
}

fn decode(
    model: &DecodeModel,
    horizon: usize,
    start: &[f64],
    end: &[f64],
    elapsed: Option<(usize, usize)>,
    widen_last: bool,
) -> Option<Decoded> {
    let k_count = start.len();
    let log_a = model.transitions.map(|a| a.ln());
    let first_cap = elapsed.map(|(k, e)| model.max_durations[k].saturating_sub(e).max(1));
    let first_dur = elapsed.map(|(k, e)| {
        let cap = if widen_last { horizon.max(first_cap.unwrap_or(1)) } else { first_cap.unwrap_or(1) };
        (k, remaining_duration(&model.durations[k], e, cap))
    });
    let ninf = f64::NEG_INFINITY;
    // delta[t][k]: best path whose segment of k ends at t; back[t][k] = (previous component, duration)
    let mut delta = vec![vec![ninf; k_count]; horizon];
    let mut back = vec![vec![(usize::MAX, 0usize); k_count]; horizon];
    for t in 0..horizon {
        let last = t == horizon - 1;
        for k in 0..k_count {
            let cap = if last && widen_last { horizon } else { model.max_durations[k] };
            let mut best = ninf;
            let mut arg = (usize::MAX, 0);
            let continued = first_dur.as_ref().filter(|(ek, _)| *ek == k).map(|(_, table)| table);
            let cap = match continued {
                Some(table) => cap.max(table.len()),
                None => cap,
            };
            for d in 1..=cap.min(t + 1) {
                let s = t + 1 - d;
                let dur_lp = match continued {
                    Some(table) if s == 0 => match table.get(d - 1) {
                        Some(v) => *v,
                        None => continue,
                    },
                    _ if d > model.max_durations[k] && !(last && widen_last) => continue,
                    _ => model.durations[k].log_prob(d),
                };
                let mut obs = 0.0;
                if s == 0 {
                    obs += start[k];
                }
                if last {
                    obs += end[k];
                }
                let seg = dur_lp + obs;
                let (entry, from) = if s == 0 {
                    (model.priors[k].ln(), usize::MAX)
                } else {
                    let mut be = ninf;
                    let mut bh = usize::MAX;
                    for h in 0..k_count {
                        if h == k {
                            continue;
                        }
                        let v = delta[s - 1][h] + log_a[(h, k)];
                        if v > be {
                            be = v;
                            bh = h;
                        }
                    }
                    (be, bh)
                };
                let v = entry + seg;
                if v > best {
                    best = v;
                    arg = (from, d);
                }
            }
            delta[t][k] = best;
            back[t][k] = arg;
        }
    }
    let mut best = ninf;
    let mut k_end = usize::MAX;
    for k in 0..k_count {
        if delta[horizon - 1][k] > best {
            best = delta[horizon - 1][k];
            k_end = k;
        }
    }
    if best == ninf {
        return None;
    }
    let mut segments = Vec::new();
    let mut t = horizon;
    let mut k = k_end;
    while t > 0 {
        let (from, d) = back[t - 1][k];
        segments.push((k, d));
        t -= d;
        k = from;
    }
    segments.reverse();
    Some(Decoded { sequence: ComponentSequence::from_segments(&segments), log_prob: best, widened: false })
}

/// Settings of the transition phase.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TransitionConfig {
    /// Reference speed, tangent units per second.
    pub v_ref: f64,
    pub d_min: usize,
    /// Upper bound; `None` uses a quarter of the decoded sequence.
    pub d_max: Option<usize>,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        TransitionConfig { v_ref: 0.1, d_min: 2, d_max: None }
    }
}

/// The artificial component leading from the current pose to the current attractor.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionComponent {
    pub gaussian: ManifoldGaussian,
    /// Stiffness id active when the transition was created.
    pub stiffness: usize,
    pub duration: usize,
}

/// Duration of the transition phase for a tangent distance.
pub fn transition_duration(distance: f64, dt: f64, cfg: &TransitionConfig, decoded_len: usize) -> usize {
    let d_max = cfg.d_max.unwrap_or(decoded_len / 4).max(cfg.d_min);
    let raw = (distance / (cfg.v_ref * dt)).round();
    let raw = if raw.is_finite() && raw > 0.0 { raw as usize } else { 0 };
    raw.clamp(cfg.d_min, d_max)
}

/// Prepends `d_y` steps of the transition component to `seq`.
#[allow(clippy::too_many_arguments)]
pub fn prepend_transition(
    geometry: &Geometry,
    seq: &ComponentSequence,
    x: &Vector,
    y: &Vector,
    current_stiffness: usize,
    first_cov: &Matrix,
    dt: f64,
    cfg: &TransitionConfig,
) -> Result<(ComponentSequence, TransitionComponent)> {
    if seq.is_empty() {
        return Err(invalid("cannot prepend to an empty sequence"));
    }
    let dist = geometry.log(y, x).norm();
    let duration = transition_duration(dist, dt, cfg, seq.len());
    let mut steps = vec![TRANSITION; duration];
    steps.extend_from_slice(&seq.steps);
    Ok((
        ComponentSequence::new(steps),
        TransitionComponent {
            gaussian: ManifoldGaussian::new(y.clone(), first_cov.clone()),
            stiffness: current_stiffness,
            duration,
        },
    ))
}

/// Timed attractor reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vector>,
    pub velocities: Vec<Vector>,
    pub accelerations: Vec<Vector>,
    pub components: Vec<usize>,
    pub stiffness_ids: Vec<usize>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Tangent-space trajectory of the tracking problem.
#[derive(Clone, Debug, PartialEq)]
pub struct LqtSolution {
    pub positions: Vec<Vector>,
    pub velocities: Vec<Vector>,
    /// `u_t`; the last entry is zero.
    pub controls: Vec<Vector>,
}

/// Stage matrices of the double integrator with state `[e; ė]`.
pub fn double_integrator(n: usize, dt: f64) -> (Matrix, Matrix) {
    let mut a = Matrix::identity(2 * n, 2 * n);
    let mut b = Matrix::zeros(2 * n, n);
    for i in 0..n {
        a[(i, n + i)] = dt;
        b[(i, i)] = 0.5 * dt * dt;
        b[(n + i, i)] = dt;
    }
    (a, b)
}

/// Linear quadratic tracking in `R^n`.
///
/// Minimizes `Σ_t (e_t - m_t)ᵀ Q_t (e_t - m_t) + Σ_t u_tᵀ (r I) u_t` from the
/// fixed initial state `(e0, v0)`.
pub fn lqt_solve(targets: &[Vector], precisions: &[Matrix], e0: &Vector, v0: &Vector, dt: f64, r: f64) -> Result<LqtSolution> {
    let horizon = targets.len();
    if horizon == 0 {
        return Err(invalid("tracking horizon must be positive"));
    }
    if precisions.len() != horizon {
        return Err(Error::Dimension { expected: horizon, got: precisions.len() });
    }
    if !(r > 0.0) || !(dt > 0.0) {
        return Err(invalid("control weight and time step must be positive"));
    }
    let n = e0.len();
    let (a, b) = double_integrator(n, dt);
    let stage = |t: usize| -> (Matrix, Vector) {
        let mut q = Matrix::zeros(2 * n, 2 * n);
        q.view_mut((0, 0), (n, n)).copy_from(&precisions[t]);
        let mut zeta = Vector::zeros(2 * n);
        zeta.rows_mut(0, n).copy_from(&(&precisions[t] * &targets[t]));
        (q, zeta)
    };
    let (mut p, mut lin) = stage(horizon - 1);
    let mut gains = Vec::with_capacity(horizon.saturating_sub(1));
    let rr = Matrix::identity(n, n) * r;
    for t in (0..horizon - 1).rev() {
        let bp = b.transpose() * &p;
        let h = &rr + &bp * &b;
        let h_inv = h
            .cholesky()
            .ok_or_else(|| degenerate("tracking Hessian not positive definite"))?
            .inverse();
        let k = &h_inv * &bp * &a;
        let kff = &h_inv * (b.transpose() * &lin);
        let closed = &a - &b * &k;
        let (q, qz) = stage(t);
        let np = &q + a.transpose() * &p * &closed;
        lin = qz + closed.transpose() * &lin;
        p = (&np + np.transpose()) * 0.5;
        gains.push((k, kff));
    }
    gains.reverse();
    let mut z = Vector::zeros(2 * n);
    z.rows_mut(0, n).copy_from(e0);
    z.rows_mut(n, n).copy_from(v0);
    let mut positions = Vec::with_capacity(horizon);
    let mut velocities = Vec::with_capacity(horizon);
    let mut controls = Vec::with_capacity(horizon);
    for t in 0..horizon {
        positions.push(z.rows(0, n).into_owned());
        velocities.push(z.rows(n, n).into_owned());
        if t + 1 < horizon {
            let (k, kff) = &gains[t];
            let u = kff - k * &z;
            z = &a * &z + &b * &u;
            controls.push(u);
        } else {
            controls.push(Vector::zeros(n));
        }
    }
    Ok(LqtSolution { positions, velocities, controls })
}

/// Value of the tracking objective for a tangent trajectory.
pub fn lqt_cost(sol: &LqtSolution, targets: &[Vector], precisions: &[Matrix], r: f64) -> f64 {
    let mut c = 0.0;
    for t in 0..targets.len() {
        let e = &sol.positions[t] - &targets[t];
        c += (e.transpose() * &precisions[t] * &e)[(0, 0)];
        if t + 1 < targets.len() {
            c += r * sol.controls[t].norm_squared();
        }
    }
    c
}

/// Chart data of a per-step Gaussian sequence at `base`.
pub fn chart_targets(
    geometry: &Geometry,
    gaussians: &[&ManifoldGaussian],
    base: &Vector,
    reg_floor: f64,
) -> Result<(Vec<Vector>, Vec<Matrix>)> {
    let mut targets = Vec::with_capacity(gaussians.len());
    let mut precisions = Vec::with_capacity(gaussians.len());
    for g in gaussians {
        targets.push(geometry.log(&g.mean, base));
        let t = geometry.transport_matrix(&g.mean, base);
        let cov = regularize(&(&t * &g.cov * t.transpose()), 0.0);
        let inv = match cov.clone().cholesky() {
            Some(c) => c.inverse(),
            None => regularize(&cov, reg_floor.max(DEFAULT_REG_FLOOR))
                .cholesky()
                .ok_or_else(|| degenerate("covariance not positive definite after regularization"))?
                .inverse(),
        };
        precisions.push((&inv + inv.transpose()) * 0.5);
    }
    Ok((targets, precisions))
}

/// Smooth reference through the Gaussians of `steps`, starting at `(start, start_vel)`.
///
/// `gaussians[i]` is the Gaussian of step `i`. The tracking problem is solved
/// in the tangent space at `start`.
#[allow(clippy::too_many_arguments)]
pub fn lqt_reference(
    geometry: &Geometry,
    gaussians: &[&ManifoldGaussian],
    components: &[usize],
    stiffness_ids: &[usize],
    start: &Vector,
    start_vel: &Vector,
    t0: f64,
    dt: f64,
    r: f64,
) -> Result<ReferenceTrajectory> {
    let horizon = gaussians.len();
    if components.len() != horizon || stiffness_ids.len() != horizon {
        return Err(Error::Dimension { expected: horizon, got: components.len() });
    }
    let (targets, precisions) = chart_targets(geometry, gaussians, start, DEFAULT_REG_FLOOR)?;
    let e0 = Vector::zeros(geometry.tangent_dim());
    let sol = lqt_solve(&targets, &precisions, &e0, start_vel, dt, r)?;
    Ok(ReferenceTrajectory {
        times: (0..horizon).map(|i| t0 + i as f64 * dt).collect(),
        points: sol.positions.iter().map(|e| geometry.exp(e, start)).collect(),
        velocities: sol.velocities,
        accelerations: sol.controls,
        components: components.to_vec(),
        stiffness_ids: stiffness_ids.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(m: f64, v: f64) -> ManifoldGaussian {
        ManifoldGaussian::new(Vector::from_vec(vec![m]), Matrix::from_element(1, 1, v))
    }

    #[test]
    fn run_length_round_trip() {
        let s = ComponentSequence::new(vec![0, 0, 1, 2, 2, 2]);
        assert_eq!(s.segments(), vec![(0, 2), (1, 1), (2, 3)]);
        assert_eq!(ComponentSequence::from_segments(&s.segments()), s);
    }

    #[test]
    fn single_component_fills_horizon() {
        let globals = vec![g1(0.0, 1.0)];
        let model = DecodeModel {
            geometry: &Geometry::Euclidean(1),
            globals: &globals,
            priors: &[1.0],
            transitions: &Matrix::zeros(1, 1),
            durations: &[DurationModel::new(3.0, 1.0)],
            max_durations: &[6],
        };
        let d = most_likely_sequence(&model, 6, &DecodeEvidence::default()).unwrap();
        assert_eq!(d.sequence.steps, vec![0; 6]);
        assert!(!d.widened);
        let d = most_likely_sequence(&model, 9, &DecodeEvidence::default()).unwrap();
        assert_eq!(d.sequence.steps, vec![0; 9]);
        assert!(d.widened);
    }

    #[test]
    fn zero_distance_transition() {
        let g = Geometry::Euclidean(1);
        let x = Vector::from_vec(vec![0.2]);
        let seq = ComponentSequence::new(vec![0; 10]);
        let cov = Matrix::from_element(1, 1, 0.3);
        let (s, tc) = prepend_transition(&g, &seq, &x, &x, 0, &cov, 0.01, &TransitionConfig::default()).unwrap();
        assert_eq!(&s.steps[..3], &[TRANSITION, TRANSITION, 0]);
        assert_eq!(s.len(), 12);
        assert_eq!(tc.gaussian.cov, cov);
    }

    #[test]
    fn transition_duration_scales_with_distance() {
        let cfg = TransitionConfig { d_max: Some(1000), ..Default::default() };
        assert_eq!(transition_duration(0.2, 0.01, &cfg, 10), 200);
        let cfg = TransitionConfig { d_max: Some(50), ..Default::default() };
        assert_eq!(transition_duration(0.2, 0.01, &cfg, 10), 50);
    }

    #[test]
    fn stationary_target_is_reached() {
        let g = Geometry::Euclidean(1);
        let target = g1(0.3, 1e-4);
        let steps: Vec<&ManifoldGaussian> = vec![&target; 400];
        let ids = vec![0; 400];
        let r = lqt_reference(&g, &steps, &ids, &ids, &Vector::zeros(1), &Vector::zeros(1), 0.0, 0.01, 1e-4).unwrap();
        assert!((r.points[399][0] - 0.3).abs() < 1e-3);
        assert!(r.velocities[399][0].abs() < 1e-3);
    }

    #[test]
    fn zero_horizon_is_an_error() {
        let r = lqt_solve(&[], &[], &Vector::zeros(1), &Vector::zeros(1), 0.01, 1e-4);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
