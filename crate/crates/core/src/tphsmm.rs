//! Task-parameterized hidden semi-Markov model over attractor data.
//!
//! Every component `k` holds one Gaussian per task frame, a Gaussian duration
//! model (in samples) and a row of the transition matrix. The diagonal of the
//! transition matrix is zero; dwell is owned by the duration model.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::demo::Scene;
use crate::error::{degenerate, invalid, Error, Result};
use crate::manifold::{
    clamp_eigenvalues, gaussian_product, weighted_covariance, weighted_mean, Frame, GaussianDensity, Geometry,
    ManifoldGaussian, Matrix, Vector, DEFAULT_REG_FLOOR,
};

/// Smallest duration standard deviation, in samples.
pub const MIN_DURATION_STD: f64 = 0.5;
/// Responsibility mass below which a component counts as empty.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-8;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian dwell-time model, in samples.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DurationModel {
    pub mean: f64,
    pub std: f64,
}

impl DurationModel {
    pub fn new(mean: f64, std: f64) -> Self {
        DurationModel { mean, std: std.max(MIN_DURATION_STD) }
    }

    /// Log of the Gaussian density at `d`.
    pub fn log_prob(&self, d: usize) -> f64 {
        let z = (d as f64 - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - LN_SQRT_2PI
    }

    /// Upper end of the truncated support `[1, ceil(mean + 3 std)]`.
    pub fn max_duration(&self) -> usize {
        let m = (self.mean + 3.0 * self.std).ceil();
        if m.is_finite() && m >= 1.0 {
            m as usize
        } else {
            1
        }
    }

    /// Log-probabilities for `d = 1..=max`.
    pub fn table(&self, max: usize) -> Vec<f64> {
        (1..=max).map(|d| self.log_prob(d)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Topology {
    #[default]
    LeftToRight,
    Ergodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitStrategy {
    #[default]
    TimeSlice,
    KMeans,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change that stops the iteration.
    pub tol: f64,
    pub reg_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iter: 100, tol: 1e-6, reg_floor: DEFAULT_REG_FLOOR }
    }
}

/// The attractor TP-HSMM.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Tphsmm {
    pub geometry: Geometry,
    pub frame_names: Vec<String>,
    pub priors: Vec<f64>,
    /// `components[k][p]`: Gaussian of component `k` in frame `p`.
    pub components: Vec<Vec<ManifoldGaussian>>,
    pub durations: Vec<DurationModel>,
    /// `transitions[(h, k)]`: probability of entering `k` after leaving `h`.
    pub transitions: Matrix,
}

/// Attractor data of one demonstration seen from each task frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalDemo {
    /// `frames[p][t]`.
    pub frames: Vec<Vec<Vector>>,
}

impl LocalDemo {
    /// Projects global points into every frame.
    pub fn new(geometry: &Geometry, points: &[Vector], frames: &[Frame]) -> Self {
        LocalDemo {
            frames: frames
                .iter()
                .map(|f| points.iter().map(|x| geometry.frame_unapply(f, x)).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Smoothed posteriors `p_{t,k}`, one `T × K` matrix per demonstration.
pub type Responsibilities = Vec<Matrix>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitReport {
    pub loglik: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl Tphsmm {
    pub fn num_components(&self) -> usize {
        self.priors.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frame_names.len()
    }

    pub fn duration_logprob(&self, k: usize, d: usize) -> f64 {
        self.durations[k].log_prob(d)
    }

    /// Checks the structural invariants of the model.
    pub fn check(&self) -> Result<()> {
        let k = self.num_components();
        if k == 0 {
            return Err(degenerate("model has no components"));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.priors.iter().any(|p| !(*p >= 0.0)) {
            return Err(degenerate(format!("priors sum to {sum}")));
        }
        if self.transitions.shape() != (k, k) {
            return Err(Error::Dimension { expected: k, got: self.transitions.nrows() });
        }
        for h in 0..k {
            if self.transitions[(h, h)] != 0.0 {
                return Err(degenerate(format!("self transition on component {h}")));
            }
            let row: f64 = self.transitions.row(h).iter().sum();
            // terminal components have an empty row
            if row != 0.0 && (row - 1.0).abs() > 1e-9 {
                return Err(degenerate(format!("transition row {h} sums to {row}")));
            }
        }
        if self.durations.len() != k || self.components.len() != k {
            return Err(invalid("per-component arrays differ in length"));
        }
        if self.durations.iter().any(|d| !(d.std >= MIN_DURATION_STD)) {
            return Err(degenerate("duration std below floor"));
        }
        let n = self.geometry.tangent_dim();
        for comp in &self.components {
            if comp.len() != self.num_frames() {
                return Err(Error::Dimension { expected: self.num_frames(), got: comp.len() });
            }
            for g in comp {
                self.geometry.check_point(&g.mean)?;
                if g.cov.shape() != (n, n) {
                    return Err(Error::Dimension { expected: n, got: g.cov.nrows() });
                }
                if (&g.cov - g.cov.transpose()).norm() >= 1e-12 {
                    return Err(degenerate("asymmetric covariance"));
                }
            }
        }
        Ok(())
    }

    /// Global Gaussian of every component for the given frames (in model frame order).
    pub fn global_components(&self, frames: &[Frame]) -> Result<Vec<ManifoldGaussian>> {
        if frames.len() != self.num_frames() {
            return Err(Error::Dimension { expected: self.num_frames(), got: frames.len() });
        }
        self.components
            .iter()
            .map(|comp| {
                let gs: Vec<ManifoldGaussian> = comp
                    .iter()
                    .zip(frames)
                    .map(|(g, f)| self.geometry.gaussian_apply(f, g))
                    .collect();
                gaussian_product(&self.geometry, &gs)
            })
            .collect()
    }

    /// [`Tphsmm::global_components`] with frames looked up by name.
    pub fn global_components_in(&self, scene: &Scene) -> Result<Vec<ManifoldGaussian>> {
        self.global_components(&scene.ordered(&self.frame_names)?)
    }

    /// Sum over frames of the per-frame log-densities, `T × K`.
    fn log_emissions(&self, demo: &LocalDemo) -> Result<Vec<Vec<f64>>> {
        let dens = self.densities()?;
        Ok(emissions(&self.geometry, &dens, demo))
    }

    fn densities(&self) -> Result<Vec<Vec<GaussianDensity>>> {
        self.components
            .iter()
            .map(|comp| comp.iter().map(GaussianDensity::new).collect())
            .collect()
    }

    /// Log-likelihood of one demonstration under the model.
    pub fn log_likelihood(&self, demo: &LocalDemo) -> Result<f64> {
        let support: Vec<usize> = self.durations.iter().map(|d| d.max_duration()).collect();
        let e = self.log_emissions(demo)?;
        Ok(forward_backward(self, &support, &e).loglik)
    }
}

fn emissions(geometry: &Geometry, dens: &[Vec<GaussianDensity>], demo: &LocalDemo) -> Vec<Vec<f64>> {
    (0..demo.len())
        .map(|t| {
            dens.iter()
                .map(|comp| {
                    comp.iter()
                        .zip(&demo.frames)
                        .map(|(g, pts)| g.log_density(geometry, &pts[t]))
                        .sum()
                })
                .collect()
        })
        .collect()
}

pub(crate) fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_demos(model_frames: usize, geometry: &Geometry, demos: &[LocalDemo]) -> Result<usize> {
    if demos.is_empty() {
        return Err(degenerate("no demonstrations"));
    }
    let mut total = 0;
    for d in demos {
        if d.frames.len() != model_frames {
            return Err(Error::Dimension { expected: model_frames, got: d.frames.len() });
        }
        if d.frames.iter().any(|f| f.len() != d.len()) {
            return Err(invalid("frames of a demonstration differ in length"));
        }
        for f in &d.frames {
            for x in f {
                geometry.check_point(x)?;
            }
        }
        total += d.len();
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// initialization

fn default_transitions(k: usize, topology: Topology) -> Matrix {
    let mut a = Matrix::zeros(k, k);
    if k == 1 {
        return a;
    }
    let uniform_row = |a: &mut Matrix, h: usize| {
        for j in 0..k {
            if j != h {
                a[(h, j)] = 1.0 / (k - 1) as f64;
            }
        }
    };
    match topology {
        Topology::LeftToRight => {
            // the last component is terminal
            for h in 0..k - 1 {
                a[(h, h + 1)] = 1.0;
            }
        }
        Topology::Ergodic => (0..k).for_each(|h| uniform_row(&mut a, h)),
    }
    a
}

/// Per-frame Gaussians from per-sample weights (`weights[m]` is `T × K`).
///
/// Components without mass keep `previous` (or the pooled statistics when
/// there is none) and are reported in the returned list.
fn estimate_components(
    geometry: &Geometry,
    demos: &[LocalDemo],
    weights: &[Matrix],
    k_count: usize,
    previous: Option<&[Vec<ManifoldGaussian>]>,
    floor: f64,
) -> (Vec<Vec<ManifoldGaussian>>, Vec<usize>) {
    let frames = demos[0].frames.len();
    let mut out = Vec::with_capacity(k_count);
    let mut empty = Vec::new();
    for k in 0..k_count {
        let mut w = Vec::new();
        for (d, wm) in demos.iter().zip(weights) {
            w.extend((0..d.len()).map(|t| wm[(t, k)]));
        }
        let mass: f64 = w.iter().sum();
        let dead = mass < EMPTY_COMPONENT_MASS;
        if dead {
            empty.push(k);
            if let Some(prev) = previous {
                out.push(prev[k].clone());
                continue;
            }
            w.iter_mut().for_each(|v| *v = 1.0);
        }
        let mut comp = Vec::with_capacity(frames);
        for p in 0..frames {
            let pts: Vec<&Vector> = demos.iter().flat_map(|d| d.frames[p].iter()).collect();
            let start = match previous {
                Some(prev) => prev[k][p].mean.clone(),
                None => {
                    let best = w
                        .iter()
                        .enumerate()
                        .fold(0, |b, (i, v)| if *v > w[b] { i } else { b });
                    pts[best].clone()
                }
            };
            let mean = geometry.normalize(&weighted_mean(geometry, &pts, &w, &start));
            let cov = clamp_eigenvalues(&weighted_covariance(geometry, &pts, &w, &mean), floor);
            comp.push(ManifoldGaussian::new(mean, cov));
        }
        out.push(comp);
    }
    (out, empty)
}

fn one_hot(labels: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), k);
    for (t, &l) in labels.iter().enumerate() {
        m[(t, l)] = 1.0;
    }
    m
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Time-slice labels: component `k` owns `[T k / K, T (k+1) / K)`.
pub fn time_slice_labels(len: usize, k: usize) -> Vec<usize> {
    (0..len).map(|t| t * k / len).collect()
}

/// Hard k-means labels with deterministic farthest-point seeding.
///
/// The distance sums squared tangent norms over all frames.
pub fn kmeans_labels(geometry: &Geometry, demos: &[LocalDemo], k: usize) -> Result<Vec<Vec<usize>>> {
    let frames = demos.first().map_or(0, |d| d.frames.len());
    let samples: Vec<(usize, usize)> = demos
        .iter()
        .enumerate()
        .flat_map(|(m, d)| (0..d.len()).map(move |t| (m, t)))
        .collect();
    if k == 0 || k > samples.len() {
        return Err(invalid(format!("cannot form {k} clusters from {} samples", samples.len())));
    }
    let point = |i: usize, p: usize| {
        let (m, t) = samples[i];
        &demos[m].frames[p][t]
    };
    let dist = |i: usize, c: &[Vector]| -> f64 {
        (0..frames).map(|p| geometry.log(point(i, p), &c[p]).norm_squared()).sum()
    };
    let mut centers: Vec<Vec<Vector>> = vec![(0..frames).map(|p| point(0, p).clone()).collect()];
    let mut nearest: Vec<f64> = (0..samples.len()).map(|i| dist(i, &centers[0])).collect();
    while centers.len() < k {
        let far = nearest
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > nearest[b] { i } else { b });
        let c: Vec<Vector> = (0..frames).map(|p| point(far, p).clone()).collect();
        for (i, n) in nearest.iter_mut().enumerate() {
            *n = n.min(dist(i, &c));
        }
        centers.push(c);
    }
    let assign = |centers: &[Vec<Vector>]| -> Vec<usize> {
        (0..samples.len())
            .map(|i| {
                let mut best = 0;
                let mut bd = f64::INFINITY;
                for (j, c) in centers.iter().enumerate() {
                    let d = dist(i, c);
                    if d < bd {
                        bd = d;
                        best = j;
                    }
                }
                best
            })
            .collect()
    };
    let mut labels = assign(&centers);
    for _ in 0..100 {
        for (j, c) in centers.iter_mut().enumerate() {
            let w: Vec<f64> = labels.iter().map(|&l| if l == j { 1.0 } else { 0.0 }).collect();
            if w.iter().sum::<f64>() == 0.0 {
                continue;
            }
            for (p, cp) in c.iter_mut().enumerate() {
                let pts: Vec<&Vector> = (0..samples.len()).map(|i| point(i, p)).collect();
                *cp = geometry.normalize(&weighted_mean(geometry, &pts, &w, cp));
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut out = Vec::with_capacity(demos.len());
    let mut it = labels.into_iter();
    for d in demos {
        out.push(it.by_ref().take(d.len()).collect());
    }
    Ok(out)
}

fn runs(labels: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &l in labels {
        match out.last_mut() {
            Some((k, d)) if *k == l => *d += 1,
            _ => out.push((l, 1)),
        }
    }
    out
}

/// Initial model from hard labels.
pub fn init_model(
    geometry: Geometry,
    frame_names: Vec<String>,
    demos: &[LocalDemo],
    k: usize,
    strategy: InitStrategy,
    topology: Topology,
    reg_floor: f64,
) -> Result<Tphsmm> {
    if k == 0 {
        return Err(invalid("at least one component is required"));
    }
    let total = check_demos(frame_names.len(), &geometry, demos)?;
    if k > total {
        return Err(invalid(format!("{k} components but only {total} samples")));
    }
    let labels: Vec<Vec<usize>> = match strategy {
        InitStrategy::TimeSlice => demos.iter().map(|d| time_slice_labels(d.len(), k)).collect(),
        InitStrategy::KMeans => kmeans_labels(&geometry, demos, k)?,
    };
    let weights: Vec<Matrix> = labels.iter().map(|l| one_hot(l, k)).collect();
    let (components, _) = estimate_components(&geometry, demos, &weights, k, None, reg_floor);

    let mut lengths: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut counts = Matrix::zeros(k, k);
    let mut first = vec![0.0; k];
    for l in &labels {
        let r = runs(l);
        first[r[0].0] += 1.0;
        for (c, d) in &r {
            lengths[*c].push(*d as f64);
        }
        for w in r.windows(2) {
            counts[(w[0].0, w[1].0)] += 1.0;
        }
    }
    let all: Vec<f64> = lengths.iter().flatten().copied().collect();
    let (pooled, _) = mean_std(&all);
    let durations = lengths
        .iter()
        .map(|l| {
            if l.is_empty() {
                DurationModel::new(pooled, MIN_DURATION_STD)
            } else {
                let (m, s) = mean_std(l);
                DurationModel::new(m, s)
            }
        })
        .collect();
    let mut transitions = default_transitions(k, topology);
    if strategy == InitStrategy::KMeans {
        for h in 0..k {
            let row: f64 = counts.row(h).iter().sum();
            if row > 0.0 {
                for j in 0..k {
                    transitions[(h, j)] = counts[(h, j)] / row;
                }
            }
        }
    }
    let m = demos.len() as f64;
    let model = Tphsmm {
        geometry,
        frame_names,
        priors: first.iter().map(|c| c / m).collect(),
        components,
        durations,
        transitions,
    };
    model.check()?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// EM

struct Posterior {
    loglik: f64,
    gamma: Matrix,
    init: Vec<f64>,
    trans: Matrix,
    /// `dur[k][d - 1]`.
    dur: Vec<Vec<f64>>,
}

/// Explicit-duration forward-backward in log space.
fn forward_backward(model: &Tphsmm, support: &[usize], e: &[Vec<f64>]) -> Posterior {
    let t_len = e.len();
    let k_count = model.num_components();
    let log_a = model.transitions.map(|a| a.ln());
    let log_pi: Vec<f64> = model.priors.iter().map(|p| p.ln()).collect();
    let dur: Vec<Vec<f64>> = (0..k_count)
        .map(|k| model.durations[k].table(support[k].min(t_len)))
        .collect();
    // cum[k][t] = sum of e[..t][k]
    let cum: Vec<Vec<f64>> = (0..k_count)
        .map(|k| {
            let mut c = Vec::with_capacity(t_len + 1);
            c.push(0.0);
            for row in e {
                c.push(c.last().copied().unwrap_or(0.0) + row[k]);
            }
            c
        })
        .collect();
    let seg = |k: usize, s: usize, d: usize| cum[k][s + d] - cum[k][s];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![vec![ninf; k_count]; t_len];
    let mut enter = vec![vec![ninf; k_count]; t_len];
    for t in 0..t_len {
        for k in 0..k_count {
            enter[t][k] = if t == 0 {
                log_pi[k]
            } else {
                logsumexp((0..k_count).map(|h| alpha[t - 1][h] + log_a[(h, k)]))
            };
        }
        for k in 0..k_count {
            let dmax = dur[k].len().min(t + 1);
            alpha[t][k] = logsumexp((1..=dmax).map(|d| {
                let s = t + 1 - d;
                enter[s][k] + dur[k][d - 1] + seg(k, s, d)
            }));
        }
    }
    let loglik = logsumexp(alpha[t_len - 1].iter().copied());

    let mut beta = vec![vec![ninf; k_count]; t_len];
    let mut bin = vec![vec![ninf; k_count]; t_len];
    for t in (0..t_len).rev() {
        for k in 0..k_count {
            beta[t][k] = if t == t_len - 1 {
                0.0
            } else {
                logsumexp((0..k_count).map(|j| log_a[(k, j)] + bin[t + 1][j]))
            };
        }
        for j in 0..k_count {
            let dmax = dur[j].len().min(t_len - t);
            bin[t][j] = logsumexp((1..=dmax).map(|d| dur[j][d - 1] + seg(j, t, d) + beta[t + d - 1][j]));
        }
    }

    let mut diff = Matrix::zeros(t_len + 1, k_count);
    let mut dcount: Vec<Vec<f64>> = dur.iter().map(|d| vec![0.0; d.len()]).collect();
    for s in 0..t_len {
        for k in 0..k_count {
            if enter[s][k] == ninf {
                continue;
            }
            let dmax = dur[k].len().min(t_len - s);
            for d in 1..=dmax {
                let w = enter[s][k] + dur[k][d - 1] + seg(k, s, d) + beta[s + d - 1][k] - loglik;
                let p = w.exp();
                if p > 0.0 {
                    dcount[k][d - 1] += p;
                    diff[(s, k)] += p;
                    diff[(s + d, k)] -= p;
                }
            }
        }
    }
    let mut gamma = Matrix::zeros(t_len, k_count);
    let mut run = vec![0.0; k_count];
    for t in 0..t_len {
        let mut total = 0.0;
        for k in 0..k_count {
            run[k] += diff[(t, k)];
            gamma[(t, k)] = run[k].max(0.0);
            total += gamma[(t, k)];
        }
        if total > 0.0 {
            for k in 0..k_count {
                gamma[(t, k)] /= total;
            }
        }
    }
    let mut trans = Matrix::zeros(k_count, k_count);
    for t in 0..t_len.saturating_sub(1) {
        for h in 0..k_count {
            for k in 0..k_count {
                let w = alpha[t][h] + log_a[(h, k)] + bin[t + 1][k] - loglik;
                trans[(h, k)] += w.exp();
            }
        }
    }
    let init = (0..k_count).map(|k| (log_pi[k] + bin[0][k] - loglik).exp()).collect();
    Posterior { loglik, gamma, init, trans, dur: dcount }
}

/// Fits the model by EM.
///
/// Returns the model that produced the last E-step, its responsibilities and
/// the per-iteration total log-likelihood.
pub fn em_fit(model: &Tphsmm, demos: &[LocalDemo], cfg: &EmConfig) -> Result<(Tphsmm, Responsibilities, FitReport)> {
    model.check()?;
    check_demos(model.num_frames(), &model.geometry, demos)?;
    let max_len = demos.iter().map(LocalDemo::len).max().unwrap_or(1);
    let k_count = model.num_components();
    let mut model = model.clone();
    let mut report = FitReport::default();
    let mut support: Vec<usize> = model.durations.iter().map(|d| d.max_duration().min(max_len)).collect();
    let mut iter = 0;
    loop {
        let dens = model.densities()?;
        let mut posts = Vec::with_capacity(demos.len());
        for d in demos {
            let e = emissions(&model.geometry, &dens, d);
            let mut post = forward_backward(&model, &support, &e);
            if post.loglik == f64::NEG_INFINITY {
                report.warnings.push(format!(
                    "iteration {iter}: demonstration of length {} unreachable, duration support widened",
                    d.len()
                ));
                support.iter_mut().for_each(|s| *s = max_len);
                post = forward_backward(&model, &support, &e);
                if post.loglik == f64::NEG_INFINITY {
                    return Err(Error::Infeasible(d.len()));
                }
            }
            posts.push(post);
        }
        let loglik: f64 = posts.iter().map(|p| p.loglik).sum();
        if !loglik.is_finite() {
            return Err(degenerate("non-finite log-likelihood"));
        }
        let prev = report.loglik.last().copied();
        report.loglik.push(loglik);
        if let Some(prev) = prev {
            if (loglik - prev).abs() <= cfg.tol * prev.abs() {
                report.converged = true;
            }
        }
        if report.converged || iter >= cfg.max_iter {
            let resp = posts.into_iter().map(|p| p.gamma).collect();
            return Ok((model, resp, report));
        }

        // M-step
        let mut init = vec![0.0; k_count];
        let mut trans = Matrix::zeros(k_count, k_count);
        let mut dur: Vec<Vec<f64>> = support.iter().map(|s| vec![0.0; *s]).collect();
        for p in &posts {
            for k in 0..k_count {
                init[k] += p.init[k];
                for (d, c) in p.dur[k].iter().enumerate() {
                    dur[k][d] += c;
                }
            }
            trans += &p.trans;
        }
        let isum: f64 = init.iter().sum();
        model.priors = init.iter().map(|v| v / isum).collect();
        for h in 0..k_count {
            let row: f64 = trans.row(h).iter().sum();
            if row > EMPTY_COMPONENT_MASS {
                for k in 0..k_count {
                    model.transitions[(h, k)] = trans[(h, k)] / row;
                }
            }
        }
        for k in 0..k_count {
            let mass: f64 = dur[k].iter().sum();
            if mass > EMPTY_COMPONENT_MASS {
                let mean = dur[k].iter().enumerate().map(|(i, c)| (i + 1) as f64 * c).sum::<f64>() / mass;
                let var = dur[k]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| ((i + 1) as f64 - mean).powi(2) * c)
                    .sum::<f64>()
                    / mass;
                model.durations[k] = DurationModel::new(mean, var.sqrt());
            }
            // the support never shrinks, which keeps the likelihood monotone
            support[k] = support[k].max(model.durations[k].max_duration().min(max_len));
        }

        let gammas: Vec<Matrix> = posts.iter().map(|p| p.gamma.clone()).collect();
        let (components, empty) =
            estimate_components(&model.geometry, demos, &gammas, k_count, Some(&model.components), cfg.reg_floor);
        model.components = components;
        for k in empty {
            report.warnings.push(format!("iteration {iter}: component {k} has no responsibility mass"));
        }

        debug_assert!(model.check().is_ok(), "{:?}", model.check());
        iter += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> LocalDemo {
        LocalDemo { frames: vec![values.iter().map(|v| Vector::from_vec(vec![*v])).collect()] }
    }

    #[test]
    fn duration_peak() {
        let d = DurationModel::new(5.0, 2.0);
        let peak = -(2.0 * (2.0 * core::f64::consts::PI).sqrt()).ln();
        assert!((d.log_prob(5) - peak).abs() < 1e-12);
        assert!((d.log_prob(3) - d.log_prob(7)).abs() < 1e-15);
        assert_eq!(d.max_duration(), 11);
    }

    #[test]
    fn time_slice_boundary() {
        let l = time_slice_labels(10, 2);
        assert_eq!(l, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let demo = line(&[0.0, 0.1, 0.2, 0.3, 0.4, 1.0, 1.1, 1.2, 1.3, 1.4]);
        let m = init_model(
            Geometry::Euclidean(1),
            vec!["global".into()],
            &[demo],
            2,
            InitStrategy::TimeSlice,
            Topology::LeftToRight,
            1e-6,
        )
        .unwrap();
        assert_eq!(m.durations[0].mean, 5.0);
        assert_eq!(m.durations[1].mean, 5.0);
        assert_eq!(m.priors, vec![1.0, 0.0]);
        assert_eq!(m.transitions[(0, 1)], 1.0);
    }

    #[test]
    fn too_many_components() {
        let r = init_model(
            Geometry::Euclidean(1),
            vec!["global".into()],
            &[line(&[0.0, 1.0])],
            3,
            InitStrategy::TimeSlice,
            Topology::LeftToRight,
            1e-6,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn single_component_keeps_transition_row_empty() {
        let m = init_model(
            Geometry::Euclidean(1),
            vec!["global".into()],
            &[line(&[0.0, 1.0, 2.0])],
            1,
            InitStrategy::TimeSlice,
            Topology::LeftToRight,
            1e-6,
        )
        .unwrap();
        assert_eq!(m.transitions[(0, 0)], 0.0);
        assert_eq!(m.priors, vec![1.0]);
    }

    #[test]
    fn logsumexp_handles_empty_mass() {
        assert_eq!(logsumexp([f64::NEG_INFINITY; 3].into_iter()), f64::NEG_INFINITY);
        assert!((logsumexp([0.0, 0.0].into_iter()) - 2f64.ln()).abs() < 1e-15);
    }
}
