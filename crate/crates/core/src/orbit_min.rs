//! Action-minimizing loops, the saddle spectrum at the minimum of the
//! potential, and long-period proxies for minimal homoclinics.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::flow::{flow_with_tangent, FlowError};
use crate::fourier::{wrap_angle, FourierError};
use crate::linalg::solve_cyclic_block_tridiagonal;
use crate::periodic::{
    refine, segment_count, Closure, PeriodicOrbit, ShootingError, ShootingOptions,
};
use crate::system::{MechanicalSystem, State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrbitError {
    #[error("period must be positive, got {0}")]
    InvalidPeriod(f64),
    #[error("homology class must be nonzero")]
    ZeroClass,
    #[error("a loop needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("loop minimization failed after {restarts} restarts (gradient {gradient:e})")]
    MinimizationFailed { restarts: usize, gradient: f64 },
    #[error("potential gradient {0:e} at the reported minimum")]
    NotCritical(f64),
    #[error("the saddle hypothesis fails; no homoclinic proxy")]
    SaddleHypothesis,
    #[error("proxy orbit energy {0:e} above the near-zero threshold")]
    NotNearSeparatrix(f64),
    #[error("proxy orbit never enters the approach neighbourhood of the saddle")]
    NoApproach,
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

pub const MIN_LOOP_NODES: usize = 64;

/// Lagrangian of the autonomous part of a mechanical system.
#[derive(Debug, Clone, Copy)]
pub struct Lagrangian<'a> {
    sys: &'a MechanicalSystem,
}

impl<'a> Lagrangian<'a> {
    pub fn new(sys: &'a MechanicalSystem) -> Self {
        Self { sys }
    }

    pub fn value(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.sys.lagrangian(x, v)
    }

    /// `dL/dv`, the conjugate momentum.
    pub fn velocity_gradient(&self, v: [f64; 2]) -> [f64; 2] {
        self.sys.legendre(v)
    }

    pub fn position_gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let g = self.sys.potential().gradient(&x);
        [g[0], g[1]]
    }

    pub fn velocity_hessian(&self) -> Matrix2<f64> {
        *self.sys.kinetic_inverse()
    }

    pub fn position_hessian(&self, x: [f64; 2]) -> Matrix2<f64> {
        let h = self.sys.potential().jet2(&x).hess;
        Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1])
    }

    /// `L(x, v) + H(x, y) - <y, v>` at `v = dH/dy`; zero up to rounding.
    pub fn legendre_defect(&self, z: &State) -> f64 {
        let g = self.sys.hamiltonian_gradient(0.0, z);
        let v = [g[2], g[3]];
        self.value([z[0], z[1]], v) + self.sys.unperturbed().hamiltonian(0.0, z)
            - (z[2] * v[0] + z[3] * v[1])
    }
}

/// Closed loop on the torus sampled at `N` uniform times, lifted to the
/// plane; the implicit node `N` is node `0` shifted by `2 pi class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    pub class: [i32; 2],
    pub period: f64,
    pub nodes: Vec<[f64; 2]>,
}

impl LoopPath {
    pub fn new(class: [i32; 2], period: f64, nodes: Vec<[f64; 2]>) -> Result<Self, OrbitError> {
        if !(period > 0.0) {
            return Err(OrbitError::InvalidPeriod(period));
        }
        if class == [0, 0] {
            return Err(OrbitError::ZeroClass);
        }
        if nodes.len() < MIN_LOOP_NODES {
            return Err(OrbitError::TooFewNodes {
                min: MIN_LOOP_NODES,
                got: nodes.len(),
            });
        }
        Ok(Self {
            class,
            period,
            nodes,
        })
    }

    /// Uniform-speed loop through `base`.
    pub fn straight(
        class: [i32; 2],
        period: f64,
        base: [f64; 2],
        n: usize,
    ) -> Result<Self, OrbitError> {
        let s = shift(class);
        let nodes = (0..n)
            .map(|k| {
                let f = k as f64 / n as f64;
                [base[0] + s[0] * f, base[1] + s[1] * f]
            })
            .collect();
        Self::new(class, period, nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.period / self.nodes.len() as f64
    }

    pub fn shift(&self) -> [f64; 2] {
        shift(self.class)
    }

    /// Node `k` for any integer `k`, using the deck shift.
    pub fn node(&self, k: isize) -> [f64; 2] {
        let n = self.nodes.len() as isize;
        let q = k.div_euclid(n);
        let r = k.rem_euclid(n) as usize;
        let s = self.shift();
        [
            self.nodes[r][0] + q as f64 * s[0],
            self.nodes[r][1] + q as f64 * s[1],
        ]
    }

    /// Central-difference velocities at the nodes.
    pub fn velocities(&self) -> Vec<[f64; 2]> {
        let h = self.step();
        (0..self.nodes.len() as isize)
            .map(|k| {
                let a = self.node(k - 1);
                let b = self.node(k + 1);
                [(b[0] - a[0]) / (2.0 * h), (b[1] - a[1]) / (2.0 * h)]
            })
            .collect()
    }

    /// Position at time `t` by linear interpolation.
    pub fn position(&self, t: f64) -> [f64; 2] {
        let h = self.step();
        let s = t / h;
        let k = s.floor();
        let f = s - k;
        let a = self.node(k as isize);
        let b = self.node(k as isize + 1);
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }
}

fn shift(class: [i32; 2]) -> [f64; 2] {
    [2.0 * PI * class[0] as f64, 2.0 * PI * class[1] as f64]
}

/// Discrete action `sum 1/2 <A^{-1}(d_k - h w), d_k - h w> / h + h V(x_k)`
/// with `d_k = x_{k+1} - x_k` and `w` the drift velocity.
pub fn discrete_action(sys: &MechanicalSystem, path: &LoopPath) -> f64 {
    let h = path.step();
    let ainv = sys.kinetic_inverse();
    let mut s = 0.0;
    for k in 0..path.len() as isize {
        let a = path.node(k);
        let b = path.node(k + 1);
        let d = Vector2::new(b[0] - a[0] - h * sys.drift, b[1] - a[1]);
        s += 0.5 * d.dot(&(ainv * d)) / h + h * sys.potential().eval(&a);
    }
    s
}

fn action_gradient(sys: &MechanicalSystem, path: &LoopPath) -> Vec<Vector2<f64>> {
    let h = path.step();
    let ainv = sys.kinetic_inverse();
    (0..path.len() as isize)
        .map(|k| {
            let a = path.node(k - 1);
            let x = path.node(k);
            let b = path.node(k + 1);
            let lap = Vector2::new(2.0 * x[0] - a[0] - b[0], 2.0 * x[1] - a[1] - b[1]);
            let gv = sys.potential().gradient(&x);
            ainv * lap / h + Vector2::new(gv[0], gv[1]) * h
        })
        .collect()
}

/// Gradient of the discrete action with respect to the nodes.
pub fn discrete_action_gradient(sys: &MechanicalSystem, path: &LoopPath) -> Vec<[f64; 2]> {
    action_gradient(sys, path)
        .iter()
        .map(|g| [g.x, g.y])
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    pub nodes: usize,
    pub restarts: usize,
    pub seed: u64,
    pub gradient_tol: f64,
    pub max_iter: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            nodes: 256,
            restarts: 8,
            seed: 0,
            gradient_tol: 1e-9,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMinimum {
    pub path: LoopPath,
    /// Discrete action of `path`.
    pub action: f64,
    pub gradient_norm: f64,
    /// Number of starts that reached the gradient tolerance.
    pub converged_starts: usize,
}

fn sup_norm(g: &[Vector2<f64>]) -> f64 {
    g.iter()
        .fold(0.0f64, |a, v| a.max(v.x.abs()).max(v.y.abs()))
}

/// Damped Newton descent with Armijo backtracking. `anchored` keeps node 0
/// fixed.
fn descend(
    sys: &MechanicalSystem,
    mut path: LoopPath,
    anchored: bool,
    opts: &LoopOptions,
) -> (LoopPath, f64, f64) {
    let h = path.step();
    let ainv = *sys.kinetic_inverse();
    let n = path.len();
    let mut value = discrete_action(sys, &path);
    let mut mu = 0.0;
    let scale = ainv.norm() / h;
    for _ in 0..opts.max_iter {
        let mut grad = action_gradient(sys, &path);
        if anchored {
            grad[0] = Vector2::zeros();
        }
        let gnorm = sup_norm(&grad);
        if gnorm <= opts.gradient_tol {
            return (path, value, gnorm);
        }
        let first = usize::from(anchored);
        let m = n - first;
        let mut diag = Vec::with_capacity(m);
        for k in first..n {
            let hv = Lagrangian::new(sys).position_hessian(path.nodes[k]);
            diag.push(ainv * (2.0 / h) + hv * h + Matrix2::identity() * mu);
        }
        let mut off = vec![-ainv / h; m];
        if anchored {
            off[m - 1] = Matrix2::zeros();
        }
        let rhs: Vec<Vector2<f64>> = grad[first..].iter().map(|g| -g).collect();
        let Some(step) = solve_cyclic_block_tridiagonal(&diag, &off, &rhs) else {
            mu = if mu == 0.0 { 1e-3 * scale } else { mu * 4.0 };
            continue;
        };
        let slope: f64 = step.iter().zip(&rhs).map(|(s, r)| -s.dot(r)).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = path.clone();
            for (k, s) in step.iter().enumerate() {
                trial.nodes[first + k][0] += alpha * s.x;
                trial.nodes[first + k][1] += alpha * s.y;
            }
            let tv = discrete_action(sys, &trial);
            if tv <= value + 1e-4 * alpha * slope
                || (tv - value).abs() <= 1e-15 * value.abs().max(1.0)
            {
                path = trial;
                value = tv;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if accepted {
            mu = if alpha == 1.0 { mu * 0.25 } else { mu };
            if mu < 1e-12 * scale {
                mu = 0.0;
            }
        } else {
            mu = if mu == 0.0 { 1e-3 * scale } else { mu * 4.0 };
        }
    }
    let mut grad = action_gradient(sys, &path);
    if anchored {
        grad[0] = Vector2::zeros();
    }
    let g = sup_norm(&grad);
    (path, value, g)
}

/// Local descent from a given loop, without restarts.
pub fn descend_from(
    sys: &MechanicalSystem,
    path: LoopPath,
    opts: &LoopOptions,
) -> Result<LoopMinimum, OrbitError> {
    let (path, action, gradient) = descend(sys, path, false, opts);
    if gradient > opts.gradient_tol {
        return Err(OrbitError::MinimizationFailed {
            restarts: 0,
            gradient,
        });
    }
    Ok(LoopMinimum {
        path,
        action,
        gradient_norm: gradient,
        converged_starts: 1,
    })
}

fn lexicographic_base(path: &LoopPath) -> (f64, f64) {
    (wrap_angle(path.nodes[0][0]), wrap_angle(path.nodes[0][1]))
}

/// Minimizes the discrete action over loops of the given class and period,
/// optionally pinned through `anchor`. Runs one straight start through the
/// minimum of the potential (or the anchor) plus `restarts` perturbed
/// starts, and keeps the lowest action; ties go to the lexicographically
/// smallest base point.
pub fn minimize_loop(
    sys: &MechanicalSystem,
    class: [i32; 2],
    period: f64,
    anchor: Option<[f64; 2]>,
    opts: &LoopOptions,
) -> Result<LoopMinimum, OrbitError> {
    if class == [0, 0] {
        return Err(OrbitError::ZeroClass);
    }
    if !(period > 0.0) {
        return Err(OrbitError::InvalidPeriod(period));
    }
    let base = match anchor {
        Some(a) => a,
        None => sys.potential().minimize_on_torus(64)?.point,
    };
    let straight = LoopPath::straight(class, period, base, opts.nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<LoopMinimum> = None;
    let mut worst_gradient = 0.0f64;
    let mut converged = 0;
    for start in 0..=opts.restarts {
        let mut init = straight.clone();
        if start > 0 {
            let n = init.len();
            let offset = if anchor.is_some() {
                [0.0, 0.0]
            } else {
                [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)]
            };
            for axis in 0..2 {
                for m in 1..=3 {
                    let a = rng.gen_range(-0.5..0.5) / m as f64;
                    for k in 0..n {
                        let phase = 2.0 * PI * (m * k) as f64 / n as f64;
                        init.nodes[k][axis] += a * phase.sin() + offset[axis];
                    }
                }
            }
        }
        let (path, value, g) = descend(sys, init, anchor.is_some(), opts);
        if g > opts.gradient_tol {
            worst_gradient = worst_gradient.max(g);
            continue;
        }
        converged += 1;
        let better = match &best {
            None => true,
            Some(b) => {
                let tie = 1e-10 * value.abs().max(1.0);
                value < b.action - tie
                    || ((value - b.action).abs() <= tie
                        && lexicographic_base(&path) < lexicographic_base(&b.path))
            }
        };
        if better {
            best = Some(LoopMinimum {
                path,
                action: value,
                gradient_norm: g,
                converged_starts: 0,
            });
        }
    }
    match best {
        Some(mut b) => {
            b.converged_starts = converged;
            Ok(b)
        }
        None => Err(OrbitError::MinimizationFailed {
            restarts: opts.restarts,
            gradient: worst_gradient,
        }),
    }
}

/// Shooting nodes read off a discrete loop at `m` equally spaced times.
pub fn loop_to_nodes(sys: &MechanicalSystem, path: &LoopPath, m: usize) -> Vec<State> {
    let dt = path.period / m as f64;
    let h = path.step();
    (0..m)
        .map(|j| {
            let t = j as f64 * dt;
            let x = path.position(t);
            let a = path.position(t - h);
            let b = path.position(t + h);
            let v = [(b[0] - a[0]) / (2.0 * h), (b[1] - a[1]) / (2.0 * h)];
            let y = sys.legendre(v);
            [x[0], x[1], y[0], y[1]]
        })
        .collect()
}

/// Minimal loop refined to a periodic orbit of the given period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalOrbit {
    pub discrete: LoopMinimum,
    pub orbit: PeriodicOrbit,
}

/// Minimizes, then refines by multiple shooting with at least `segments`
/// segments of length at most 3.
pub fn minimal_orbit(
    sys: &MechanicalSystem,
    class: [i32; 2],
    period: f64,
    segments: usize,
    loop_opts: &LoopOptions,
    shoot: &ShootingOptions,
) -> Result<MinimalOrbit, OrbitError> {
    let discrete = minimize_loop(sys, class, period, None, loop_opts)?;
    let m = segment_count(period, segments, 3.0);
    let guess = loop_to_nodes(sys, &discrete.path, m);
    let orbit = refine(sys, &guess, period, class, Closure::FixedPeriod, 0.0, shoot)?;
    Ok(MinimalOrbit { discrete, orbit })
}

/// Composite Simpson quadrature of the Lagrangian along samples spaced by
/// `dt` covering one period (the closing sample is supplied separately).
pub fn lagrangian_quadrature(
    sys: &MechanicalSystem,
    samples: &[State],
    closing: &State,
    dt: f64,
) -> f64 {
    let l = |z: &State| {
        let f = sys.vector_field(0.0, z);
        sys.lagrangian([z[0], z[1]], [f[0], f[1]])
    };
    let n = samples.len();
    let mut vals: Vec<f64> = samples.iter().map(l).collect();
    vals.push(l(closing));
    if n % 2 == 1 {
        // Trapezoid fallback for odd interval counts.
        return dt * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[n]));
    }
    let mut s = vals[0] + vals[n];
    for (k, v) in vals.iter().enumerate().take(n).skip(1) {
        s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * dt / 3.0
}

/// Outcome of the saddle hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleVerdict {
    /// The global minimum of the potential is attained at one point only.
    pub unique_minimum: bool,
    pub positive_definite: bool,
    /// `lambda_fast - lambda_slow >= gap_min`.
    pub distinct: bool,
}

impl SaddleVerdict {
    pub fn holds(&self) -> bool {
        self.unique_minimum && self.positive_definite && self.distinct
    }
}

/// Linearization at the minimum of the potential, a saddle of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSpectrum {
    pub point: [f64; 2],
    /// `V` at the point; the saddle energy level is `-level`.
    pub level: f64,
    pub slow: f64,
    pub fast: f64,
    /// Unit eigenvector of `+slow`, `(x, y)` ordering.
    pub slow_unstable: State,
    pub fast_unstable: State,
    pub verdict: SaddleVerdict,
}

impl SaddleSpectrum {
    /// `[-fast, -slow, slow, fast]`.
    pub fn eigenvalues(&self) -> [f64; 4] {
        [-self.fast, -self.slow, self.slow, self.fast]
    }

    /// Eigenvector of `-slow`: the unstable one with momentum negated.
    pub fn slow_stable(&self) -> State {
        let v = self.slow_unstable;
        [v[0], v[1], -v[2], -v[3]]
    }

    pub fn fast_stable(&self) -> State {
        let v = self.fast_unstable;
        [v[0], v[1], -v[2], -v[3]]
    }

    pub fn slow_position(&self) -> [f64; 2] {
        unit2([self.slow_unstable[0], self.slow_unstable[1]])
    }

    pub fn fast_position(&self) -> [f64; 2] {
        unit2([self.fast_unstable[0], self.fast_unstable[1]])
    }

    /// The block matrix `[[0, A], [D^2 V, 0]]` at the point.
    pub fn linearization(sys: &MechanicalSystem, point: [f64; 2]) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 2)
            .copy_from(sys.kinetic().matrix());
        m.fixed_view_mut::<2, 2>(2, 0)
            .copy_from(&Lagrangian::new(sys).position_hessian(point));
        m
    }
}

fn unit2(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

fn symmetric_sqrt(a: &Matrix2<f64>) -> Matrix2<f64> {
    let e = a.symmetric_eigen();
    let d = Matrix2::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Eigen-decomposition of the linearization at the minimum of `V`, with the
/// saddle hypothesis verdict. Degenerate spectra are reported, not thrown.
pub fn saddle_spectrum(sys: &MechanicalSystem, gap_min: f64) -> Result<SaddleSpectrum, OrbitError> {
    let minima = sys.potential().local_minima(96)?;
    let best = sys.potential().minimize_on_torus(96)?;
    let grad = best.gradient[0].abs().max(best.gradient[1].abs());
    if grad > 1e-10 {
        return Err(OrbitError::NotCritical(grad));
    }
    let tie = 1e-9 * best.value.abs().max(1.0);
    let unique_minimum = minima
        .iter()
        .filter(|m| {
            m.value <= best.value + tie
                && (wrap_angle(m.point[0] - best.point[0]).abs() > 1e-6
                    || wrap_angle(m.point[1] - best.point[1]).abs() > 1e-6)
        })
        .count()
        == 0;
    let hess = Matrix2::new(
        best.hessian[0][0],
        best.hessian[0][1],
        best.hessian[1][0],
        best.hessian[1][1],
    );
    let root = symmetric_sqrt(sys.kinetic().matrix());
    let sym = root * hess * root;
    let sym = (sym + sym.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let (i_slow, i_fast) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let positive_definite = eig.eigenvalues[i_slow] > 0.0;
    let slow = eig.eigenvalues[i_slow].max(0.0).sqrt();
    let fast = eig.eigenvalues[i_fast].max(0.0).sqrt();
    let vector = |i: usize, lambda: f64| -> State {
        let w = eig.eigenvectors.column(i).into_owned();
        let x = root * w;
        let y = if lambda > 0.0 {
            hess * x / lambda
        } else {
            Vector2::zeros()
        };
        let v = Vector4::new(x.x, x.y, y.x, y.y);
        let v = v / v.norm();
        [v[0], v[1], v[2], v[3]]
    };
    Ok(SaddleSpectrum {
        point: best.point,
        level: best.value,
        slow,
        fast,
        slow_unstable: vector(i_slow, slow),
        fast_unstable: vector(i_fast, fast),
        verdict: SaddleVerdict {
            unique_minimum,
            positive_definite,
            distinct: positive_definite && fast - slow >= gap_min,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicOptions {
    /// Proxy period; `None` means `50 / slow`.
    pub period: Option<f64>,
    pub nodes_per_time: f64,
    pub energy_threshold: f64,
    pub transversality_threshold: f64,
    /// Distance to the saddle at which the approach direction is read.
    pub approach_radius: f64,
    pub seed: u64,
    pub tol: f64,
}

impl Default for HomoclinicOptions {
    fn default() -> Self {
        Self {
            period: None,
            nodes_per_time: 24.0,
            energy_threshold: 1e-4,
            transversality_threshold: 1e-3,
            approach_radius: 1e-3,
            seed: 0,
            tol: 1e-12,
        }
    }
}

/// Long-period minimal orbit standing in for a minimal homoclinic, with the
/// direction and transversality diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicProxy {
    pub orbit: PeriodicOrbit,
    /// Energy above the saddle level.
    pub energy: f64,
    /// Angle between the approach direction and the slow eigendirection.
    pub slow_angle: f64,
    pub fast_angle: f64,
    /// Angle between the unstable and stable manifold tangents at the
    /// farthest point from the saddle, modulo the flow direction.
    pub transversality: f64,
    pub along_slow: bool,
    pub transversal: bool,
}

impl HomoclinicProxy {
    pub fn holds(&self) -> bool {
        self.along_slow && self.transversal
    }
}

fn distance_to(point: [f64; 2], z: &State) -> (f64, [f64; 2]) {
    let d = [wrap_angle(z[0] - point[0]), wrap_angle(z[1] - point[1])];
    ((d[0] * d[0] + d[1] * d[1]).sqrt(), d)
}

fn line_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let c = (a[0] * b[0] + a[1] * b[1]).abs()
        / ((a[0] * a[0] + a[1] * a[1]).sqrt() * (b[0] * b[0] + b[1] * b[1]).sqrt());
    c.min(1.0).acos()
}

/// Component of the plane spanned by `a, b` orthogonal to `f` and `g`,
/// as a unit vector.
fn quotient_direction(
    a: Vector4<f64>,
    b: Vector4<f64>,
    f: Vector4<f64>,
    g: Vector4<f64>,
) -> Vector4<f64> {
    let fu = f / f.norm();
    let gu = {
        let g = g - fu * fu.dot(&g);
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            g
        }
    };
    let project = |v: Vector4<f64>| {
        let v = v / v.norm();
        let v = v - fu * fu.dot(&v);
        v - gu * gu.dot(&v)
    };
    let pa = project(a);
    let pb = project(b);
    let v = if pa.norm() >= pb.norm() { pa } else { pb };
    v / v.norm()
}

/// Minimal loop of class `class` at a long period, with the approach
/// direction and a transversality angle between the invariant manifolds.
pub fn homoclinic_approx(
    sys: &MechanicalSystem,
    class: [i32; 2],
    spectrum: &SaddleSpectrum,
    opts: &HomoclinicOptions,
) -> Result<HomoclinicProxy, OrbitError> {
    if !spectrum.verdict.holds() {
        return Err(OrbitError::SaddleHypothesis);
    }
    let period = opts.period.unwrap_or(50.0 / spectrum.slow);
    let m = segment_count(period, 8, 2.5);
    let per = ((opts.nodes_per_time * period / m as f64).ceil() as usize).max(1);
    let loop_opts = LoopOptions {
        nodes: (m * per).max(MIN_LOOP_NODES),
        seed: opts.seed,
        ..LoopOptions::default()
    };
    let discrete = minimize_loop(sys, class, period, None, &loop_opts)?;
    let guess = loop_to_nodes(sys, &discrete.path, m);
    let shoot = ShootingOptions {
        tol: opts.tol,
        ..ShootingOptions::default()
    };
    let orbit = refine(
        sys,
        &guess,
        period,
        class,
        Closure::FixedPeriod,
        0.0,
        &shoot,
    )?;
    let energy = orbit.energy + spectrum.level;
    if energy.abs() > opts.energy_threshold {
        return Err(OrbitError::NotNearSeparatrix(energy));
    }

    let samples = orbit.sample(sys, 64, opts.tol)?;
    let n = samples.len();
    let dist: Vec<f64> = samples
        .iter()
        .map(|(_, z)| distance_to(spectrum.point, z).0)
        .collect();
    let mid = (0..n)
        .max_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        .unwrap_or(0);
    let r = opts.approach_radius;
    let arrive = (1..n)
        .map(|k| (mid + k) % n)
        .find(|&k| dist[k] <= r)
        .ok_or(OrbitError::NoApproach)?;
    let leave = (1..n)
        .map(|k| (mid + n - k) % n)
        .find(|&k| dist[k] <= r)
        .ok_or(OrbitError::NoApproach)?;

    let dir = distance_to(spectrum.point, &samples[arrive].1).1;
    let slow_angle = line_angle(dir, spectrum.slow_position());
    let fast_angle = line_angle(dir, spectrum.fast_position());

    let period_mod = |a: f64, b: f64| {
        let d = b - a;
        d - period * (d / period).floor()
    };
    let (t_mid, z_mid) = samples[mid];
    let (t_leave, z_leave) = samples[leave];
    let (t_arrive, z_arrive) = samples[arrive];
    let forward = period_mod(t_leave, t_mid);
    let backward = period_mod(t_mid, t_arrive);
    let (_, grow) = flow_with_tangent(sys, &z_leave, 0.0, forward, opts.tol)?;
    let (_, shrink) = flow_with_tangent(sys, &z_arrive, 0.0, -backward, opts.tol)?;
    let v = |s: State| Vector4::new(s[0], s[1], s[2], s[3]);
    let f = v(sys.vector_field(0.0, &z_mid));
    let g = v(sys.hamiltonian_gradient(0.0, &z_mid));
    let u = quotient_direction(
        grow * v(spectrum.slow_unstable),
        grow * v(spectrum.fast_unstable),
        f,
        g,
    );
    let s = quotient_direction(
        shrink * v(spectrum.slow_stable()),
        shrink * v(spectrum.fast_stable()),
        f,
        g,
    );
    let transversality = u.dot(&s).abs().min(1.0).acos();
    Ok(HomoclinicProxy {
        orbit,
        energy,
        slow_angle,
        fast_angle,
        transversality,
        along_slow: slow_angle < fast_angle,
        transversal: transversality > opts.transversality_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::FourierField;
    use crate::system::{pendulum_and_well, KineticMatrix};

    fn free() -> MechanicalSystem {
        MechanicalSystem::new(KineticMatrix::identity(), FourierField::zero(2).unwrap()).unwrap()
    }

    #[test]
    fn free_loop_is_straight() {
        let sys = free();
        let min = minimize_loop(&sys, [1, 0], 2.0 * PI, None, &LoopOptions::default()).unwrap();
        assert!((min.action - PI).abs() < 1e-10);
        let v = min.path.velocities();
        assert!(v
            .iter()
            .all(|w| (w[0] - 1.0).abs() < 1e-8 && w[1].abs() < 1e-8));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sys = pendulum_and_well(0.25);
        let mut path = LoopPath::straight([1, 0], 7.0, [0.1, 0.2], 64).unwrap();
        for (k, n) in path.nodes.iter_mut().enumerate() {
            n[1] += 0.3 * (k as f64 * 0.2).sin();
        }
        let g = discrete_action_gradient(&sys, &path);
        for &k in &[0usize, 5, 63] {
            for axis in 0..2 {
                let mut a = path.clone();
                let mut b = path.clone();
                a.nodes[k][axis] += 1e-6;
                b.nodes[k][axis] -= 1e-6;
                let fd = (discrete_action(&sys, &a) - discrete_action(&sys, &b)) / 2e-6;
                assert!((fd - g[k][axis]).abs() < 1e-6, "{fd} vs {}", g[k][axis]);
            }
        }
    }

    #[test]
    fn anchored_loop_passes_through_anchor() {
        let sys = pendulum_and_well(0.25);
        let anchor = [0.4, -0.7];
        let min = minimize_loop(&sys, [1, 0], 8.0, Some(anchor), &LoopOptions::default()).unwrap();
        assert_eq!(min.path.nodes[0], anchor);
        let free = minimize_loop(&sys, [1, 0], 8.0, None, &LoopOptions::default()).unwrap();
        assert!(free.action <= min.action + 1e-9);
    }

    #[test]
    fn spectrum_of_diagonal_hessian() {
        let sys = pendulum_and_well(0.25);
        let s = saddle_spectrum(&sys, 1e-3).unwrap();
        assert!((s.slow - 0.5).abs() < 1e-10 && (s.fast - 1.0).abs() < 1e-10);
        assert!(s.slow_position()[0].abs() < 1e-10);
        assert!(s.verdict.holds());
        let m = SaddleSpectrum::linearization(&sys, s.point);
        for (vec, lambda) in [
            (s.slow_unstable, s.slow),
            (s.slow_stable(), -s.slow),
            (s.fast_stable(), -s.fast),
        ] {
            let v = Vector4::new(vec[0], vec[1], vec[2], vec[3]);
            assert!((m * v - v * lambda).norm() < 1e-12);
        }
    }

    #[test]
    fn repeated_eigenvalues_fail_the_gap() {
        let sys = pendulum_and_well(1.0);
        let s = saddle_spectrum(&sys, 1e-3).unwrap();
        assert!(!s.verdict.distinct && !s.verdict.holds());
    }
}
