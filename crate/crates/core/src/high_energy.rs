//! Charts far from the double resonance, where the drift `Omega y1` dominates.
//!
//! After the symplectic rescaling `(x1, x2, y1, y2) -> (x1 / Omega, x2, Omega y1, y2)`
//! the energy level `G' = E Omega` is solved for `y1`, and the rescaled angle
//! `tau = x1 / Omega` becomes time. The resulting one degree of freedom
//! system is `2 pi / Omega` periodic in `tau`; its closed minimizers over
//! `tau in [0, 2 pi]` carry the hyperbolicity of the cylinder.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::{FourierError, FourierField};
use crate::linalg::solve_tridiagonal_spd;
use crate::system::{KineticMatrix, MechanicalSystem, State, SystemError};

/// Energies below this are outside the transition regime.
pub const ENERGY_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HighEnergyError {
    #[error("drift Omega = {0} must be a positive integer")]
    BadDrift(f64),
    #[error("discriminant {value:e} <= 0 at x2 = {x2}, y2 = {y2}, tau = {tau}")]
    Discriminant {
        value: f64,
        x2: f64,
        y2: f64,
        tau: f64,
    },
    #[error("Legendre transform failed for velocity {0}")]
    Legendre(f64),
    #[error("loop minimization stalled (step {0:e})")]
    Minimization(f64),
    #[error("energy {0} is below the floor {ENERGY_FLOOR}")]
    EnergyBelowFloor(f64),
    #[error("the averaged potential has no unique nondegenerate minimum")]
    DegenerateAverage,
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// The chart `Omega y1 + 1/2 <A y, y> - V(x)` in rescaled coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledChart {
    pub omega: f64,
    pub kinetic: KineticMatrix,
    pub potential: FourierField,
}

impl RescaledChart {
    pub fn new(
        omega: f64,
        kinetic: KineticMatrix,
        potential: FourierField,
    ) -> Result<Self, HighEnergyError> {
        if !(omega >= 1.0 && omega.fract() == 0.0 && omega.is_finite()) {
            return Err(HighEnergyError::BadDrift(omega));
        }
        if potential.dim() != 2 {
            return Err(SystemError::PotentialDimension.into());
        }
        Ok(Self {
            omega,
            kinetic,
            potential,
        })
    }

    /// Takes `Omega` from the drift of an autonomous chart system.
    pub fn from_system(sys: &MechanicalSystem) -> Result<Self, HighEnergyError> {
        Self::new(sys.drift, *sys.kinetic(), sys.potential().clone())
    }

    pub fn system(&self) -> Result<MechanicalSystem, HighEnergyError> {
        Ok(MechanicalSystem::new(self.kinetic, self.potential.clone())?.with_drift(self.omega))
    }

    pub fn rescale(&self, z: &State) -> State {
        [z[0] / self.omega, z[1], self.omega * z[2], z[3]]
    }

    pub fn unscale(&self, z: &State) -> State {
        [z[0] * self.omega, z[1], z[2] / self.omega, z[3]]
    }

    pub fn rescaling_jacobian(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(
            1.0 / self.omega,
            1.0,
            self.omega,
            1.0,
        ))
    }

    fn entries(&self) -> (f64, f64, f64) {
        let a = self.kinetic.matrix();
        (a[(0, 0)], a[(0, 1)], a[(1, 1)])
    }

    /// `G' = y1 + A11 y1^2 / (2 Omega^2) + A12 y1 y2 / Omega + A22 y2^2 / 2 - V(Omega x1, x2)`.
    pub fn rescaled_hamiltonian(&self, z: &State) -> f64 {
        let (a11, a12, a22) = self.entries();
        let w = self.omega;
        z[2] + a11 * z[2] * z[2] / (2.0 * w * w) + a12 * z[2] * z[3] / w + 0.5 * a22 * z[3] * z[3]
            - self.potential.eval(&[w * z[0], z[1]])
    }

    /// Rescaled velocity `(dx1/dt, dx2/dt)`.
    pub fn rescaled_velocity(&self, z: &State) -> [f64; 2] {
        let (a11, a12, a22) = self.entries();
        let w = self.omega;
        [
            1.0 + a11 * z[2] / (w * w) + a12 * z[3] / w,
            a12 * z[2] / w + a22 * z[3],
        ]
    }

    /// The time map on the level `G' = E Omega`.
    pub fn time_map(&self, energy: f64) -> TimeMap<'_> {
        TimeMap {
            chart: self,
            energy,
        }
    }

    /// `[V](x2)`, the average over `x1`.
    pub fn averaged_potential(&self) -> Result<FourierField, HighEnergyError> {
        Ok(self.potential.line_average()?.field().clone())
    }
}

/// Derivatives of `y1(x2, y2; tau)` on a level set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelJet {
    /// `y1 - E Omega`.
    pub shifted: f64,
    pub dy: f64,
    pub dx: f64,
    pub dyy: f64,
    pub dxy: f64,
    pub dxx: f64,
    pub discriminant: f64,
    pub potential: f64,
}

/// Value and derivatives of the reduced Lagrangian at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeJet {
    pub value: f64,
    pub dv: f64,
    pub dx: f64,
    pub dvv: f64,
    pub dvx: f64,
    pub dxx: f64,
    /// Conjugate momentum `y2`.
    pub momentum: f64,
    /// `y1 - E Omega` at that momentum.
    pub shifted_y1: f64,
    pub potential: f64,
}

/// Reduction of the chart to the level `G' = E Omega` with time `tau`.
#[derive(Debug, Clone, Copy)]
pub struct TimeMap<'a> {
    pub chart: &'a RescaledChart,
    pub energy: f64,
}

impl TimeMap<'_> {
    /// Additive constant removed from the Lagrangian beyond `E Omega`.
    pub fn lagrangian_offset(&self) -> f64 {
        let (a11, a12, a22) = self.chart.entries();
        let e = self.energy;
        -0.5 * a11 * e * e + 0.5 * a12 * a12 * e * e / a22
    }

    /// Solution `y1` of `G' = E Omega` and its derivatives, in a form free of
    /// the `Omega^2` cancellation of the quadratic formula.
    pub fn level_jet(&self, x2: f64, y2: f64, tau: f64) -> Result<LevelJet, HighEnergyError> {
        let (a11, a12, a22) = self.chart.entries();
        let w = self.chart.omega;
        let e = self.energy;
        let j = self.chart.potential.jet2(&[w * tau, x2]);
        let (v, vx, vxx) = (j.value, j.grad[1], j.hess[1][1]);
        let c = a11 / (w * w);
        let b = 1.0 + a12 * y2 / w;
        let q = a22 * y2 * y2 - 2.0 * v - 2.0 * e * w;
        let delta = b * b - c * q;
        if !(delta > 0.0) {
            return Err(HighEnergyError::Discriminant {
                value: delta,
                x2,
                y2,
                tau,
            });
        }
        let sd = delta.sqrt();
        let s = b + sd;
        let d32 = delta * sd;
        let q0 = 2.0 * v - a22 * y2 * y2;
        // Omega (1 - Delta), expanded
        let w_gap = -2.0 * a12 * y2 - a12 * a12 * y2 * y2 / w + a11 * (a22 * y2 * y2 - 2.0 * v) / w
            - 2.0 * a11 * e;
        let shifted = (-e * a12 * y2 + e * w_gap / (1.0 + sd) + q0) / s;
        let ddelta_y = 2.0 * b * a12 / w - 2.0 * c * a22 * y2;
        let dy = a12 / w * q / (sd * s) - a22 * y2 / sd;
        let dyy = -a12 * a12 * q / (w * w * d32) - a22 / sd + 2.0 * b * a12 * a22 * y2 / (w * d32)
            - c * a22 * a22 * y2 * y2 / d32;
        Ok(LevelJet {
            shifted,
            dy,
            dx: vx / sd,
            dyy,
            dxy: -vx * ddelta_y / (2.0 * d32),
            dxx: vxx / sd - c * vx * vx / d32,
            discriminant: delta,
            potential: v,
        })
    }

    /// `y1` itself.
    pub fn momentum(&self, x2: f64, y2: f64, tau: f64) -> Result<f64, HighEnergyError> {
        Ok(self.energy * self.chart.omega + self.level_jet(x2, y2, tau)?.shifted)
    }

    /// Leading terms `E Omega - A22 y2^2 / 2 - A12 E y2 + V` of `y1`.
    pub fn momentum_series(&self, x2: f64, y2: f64, tau: f64) -> f64 {
        let (_, a12, a22) = self.chart.entries();
        let w = self.chart.omega;
        let e = self.energy;
        e * w - 0.5 * a22 * y2 * y2 - a12 * e * y2 + self.chart.potential.eval(&[w * tau, x2])
    }

    /// Velocity `dx2/dtau = -dy1/dy2` (the reduced Hamiltonian is `-y1`).
    pub fn velocity(&self, x2: f64, y2: f64, tau: f64) -> Result<f64, HighEnergyError> {
        Ok(-self.level_jet(x2, y2, tau)?.dy)
    }

    /// `L1(v, x2, tau) = y2 v + y1 - E Omega - offset` with `v = -dy1/dy2`,
    /// which tends to `v^2 / (2 A22) - A12 E v / A22 + V` for large `Omega`.
    pub fn lagrangian(&self, v: f64, x2: f64, tau: f64) -> Result<LagrangeJet, HighEnergyError> {
        let (_, a12, a22) = self.chart.entries();
        let mut y2 = (v - a12 * self.energy) / a22;
        let mut jet = self.level_jet(x2, y2, tau)?;
        let mut converged = false;
        for _ in 0..30 {
            let r = -jet.dy - v;
            let step = r / -jet.dyy;
            y2 -= step;
            jet = self.level_jet(x2, y2, tau)?;
            if step.abs() <= 1e-15 * (1.0 + y2.abs()) {
                converged = true;
                break;
            }
        }
        if !converged && (-jet.dy - v).abs() > 1e-12 * (1.0 + v.abs()) {
            return Err(HighEnergyError::Legendre(v));
        }
        let lvv = -1.0 / jet.dyy;
        let lvx = -jet.dxy / jet.dyy;
        Ok(LagrangeJet {
            value: y2 * v + jet.shifted - self.lagrangian_offset(),
            dv: y2,
            dx: jet.dx,
            dvv: lvv,
            dvx: lvx,
            dxx: jet.dxx - jet.dxy * jet.dxy / jet.dyy,
            momentum: y2,
            shifted_y1: jet.shifted,
            potential: jet.potential,
        })
    }

    /// `Omega` times the gap between the exact and the truncated Lagrangian
    /// with `V` replaced by `[V]`: the integrand of `F_R`.
    fn remainder_density(&self, jet: &LagrangeJet, v: f64, avg: f64) -> f64 {
        let (_, a12, a22) = self.chart.entries();
        let e = self.energy;
        self.chart.omega * (jet.value - v * v / (2.0 * a22) + a12 * e * v / a22 - avg)
    }
}

/// Discretization and tolerance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopOptions {
    /// Grid points per forcing period `2 pi / Omega`.
    pub nodes_per_period: usize,
    pub min_nodes: usize,
    /// Step of the finite differences in `x2`.
    pub fd_step: f64,
    pub max_newton: usize,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            nodes_per_period: 32,
            min_nodes: 512,
            fd_step: 1e-4,
            max_newton: 60,
        }
    }
}

impl LoopOptions {
    pub fn nodes(&self, omega: f64) -> usize {
        (self.nodes_per_period * omega as usize).max(self.min_nodes)
    }
}

/// Minimizer of the discretized action with `gamma(0) = gamma(2 pi) = x2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMinimizer {
    pub x2: f64,
    /// Node values `gamma(k h)`, `k = 0..=N`.
    pub nodes: Vec<f64>,
    /// `F`, the minimal action.
    pub action: f64,
    /// Kinetic term plus averaged potential.
    pub f0: f64,
    /// `Omega (F - F0)`.
    pub fr: f64,
    /// Part of `fr` from `V - [V]`.
    pub oscillatory: f64,
    /// `dF/dx2` from the discrete boundary momenta.
    pub slope: f64,
    /// `d2F/dx2^2` from the Schur complement of the discrete Hessian.
    pub curvature: f64,
    pub sup_velocity: f64,
}

impl LoopMinimizer {
    pub fn sup_deviation(&self, from: f64) -> f64 {
        self.nodes
            .iter()
            .fold(0.0f64, |m, g| m.max((g - from).abs()))
    }
}

struct Segment {
    jet: LagrangeJet,
    v: f64,
    avg: f64,
}

fn segments(
    map: &TimeMap<'_>,
    avg: &FourierField,
    nodes: &[f64],
) -> Result<Vec<Segment>, HighEnergyError> {
    let n = nodes.len() - 1;
    let h = 2.0 * PI / n as f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let v = (nodes[k + 1] - nodes[k]) / h;
        let m = 0.5 * (nodes[k] + nodes[k + 1]);
        let tau = (k as f64 + 0.5) * h;
        let jet = map.lagrangian(v, m, tau)?;
        out.push(Segment {
            jet,
            v,
            avg: avg.eval(&[0.0, m]),
        });
    }
    Ok(out)
}

/// Hessian blocks of segment `k`: (left-left, right-right, left-right).
fn blocks(s: &Segment, h: f64) -> (f64, f64, f64) {
    let j = &s.jet;
    (
        j.dvv / h - j.dvx + h * j.dxx / 4.0,
        j.dvv / h + j.dvx + h * j.dxx / 4.0,
        -j.dvv / h + h * j.dxx / 4.0,
    )
}

fn action_of(segs: &[Segment], h: f64) -> f64 {
    let mut s = Sum::default();
    for g in segs {
        s.add(h * g.jet.value);
    }
    s.value()
}

/// Minimizes the discrete action over loops pinned at `x2`, warm-starting
/// from `warm` (shifted to the new endpoint) when given.
pub fn minimize_loop(
    map: &TimeMap<'_>,
    x2: f64,
    n: usize,
    warm: Option<&[f64]>,
    opts: &LoopOptions,
) -> Result<LoopMinimizer, HighEnergyError> {
    let avg = map.chart.averaged_potential()?;
    let h = 2.0 * PI / n as f64;
    let mut nodes: Vec<f64> = match warm {
        Some(w) if w.len() == n + 1 => {
            let shift = x2 - w[0];
            w.iter().map(|g| g + shift).collect()
        }
        _ => vec![x2; n + 1],
    };
    nodes[0] = x2;
    nodes[n] = x2;
    let mut segs = segments(map, &avg, &nodes)?;
    let mut action = action_of(&segs, h);
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    for _ in 0..opts.max_newton {
        let mut diag = vec![0.0; n - 1];
        let mut off = vec![0.0; n.saturating_sub(2)];
        let mut grad = vec![0.0; n - 1];
        for (k, s) in segs.iter().enumerate() {
            let (ll, rr, lr) = blocks(s, h);
            let gl = -s.jet.dv + h * s.jet.dx / 2.0;
            let gr = s.jet.dv + h * s.jet.dx / 2.0;
            if k >= 1 {
                diag[k - 1] += ll;
                grad[k - 1] += gl;
            }
            if k + 1 < n {
                diag[k] += rr;
                grad[k] += gr;
            }
            if k >= 1 && k + 1 < n {
                off[k - 1] = lr;
            }
        }
        let mut shift = 0.0;
        let step = loop {
            let d: Vec<f64> = diag.iter().map(|v| v + shift).collect();
            if let Some(s) = solve_tridiagonal_spd(&d, &off, &grad) {
                break s;
            }
            shift = if shift == 0.0 { 1e-6 } else { shift * 10.0 };
            if shift > 1e12 {
                return Err(HighEnergyError::Minimization(f64::NAN));
            }
        };
        let size = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let mut trial = nodes.clone();
            for i in 0..n - 1 {
                trial[i + 1] -= t * step[i];
            }
            if let Ok(ts) = segments(map, &avg, &trial) {
                let ta = action_of(&ts, h);
                if ta <= action + 1e-13 * (1.0 + action.abs()) {
                    nodes = trial;
                    segs = ts;
                    action = ta;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        last_step = t * size;
        if !accepted {
            break;
        }
        if size <= 1e-13 && t == 1.0 {
            converged = true;
            break;
        }
    }
    if !converged && last_step > 1e-10 {
        return Err(HighEnergyError::Minimization(last_step));
    }
    Ok(summarize(map, x2, nodes, &segs, h, action))
}

fn summarize(
    map: &TimeMap<'_>,
    x2: f64,
    nodes: Vec<f64>,
    segs: &[Segment],
    h: f64,
    action: f64,
) -> LoopMinimizer {
    let n = segs.len();
    let a22 = map.chart.kinetic.matrix()[(1, 1)];
    let w = map.chart.omega;
    let (mut f0, mut fr, mut osc) = (Sum::default(), Sum::default(), Sum::default());
    let mut sup_velocity = 0.0f64;
    for s in segs {
        f0.add(h * (s.v * s.v / (2.0 * a22) + s.avg));
        fr.add(h * map.remainder_density(&s.jet, s.v, s.avg));
        osc.add(h * w * (s.jet.potential - s.avg));
        sup_velocity = sup_velocity.max(s.v.abs());
    }
    // dF/dx2: both endpoints move with x2.
    let first = &segs[0];
    let last = &segs[n - 1];
    let slope = (-first.jet.dv + h * first.jet.dx / 2.0) + (last.jet.dv + h * last.jet.dx / 2.0);
    // d2F/dx2^2: Schur complement of the interior block.
    let (ll0, _, lr0) = blocks(first, h);
    let (_, rr_last, lr_last) = blocks(last, h);
    let mut diag = vec![0.0; n - 1];
    let mut off = vec![0.0; n.saturating_sub(2)];
    for (k, s) in segs.iter().enumerate() {
        let (ll, rr, lr) = blocks(s, h);
        if k >= 1 {
            diag[k - 1] += ll;
        }
        if k + 1 < n {
            diag[k] += rr;
        }
        if k >= 1 && k + 1 < n {
            off[k - 1] = lr;
        }
    }
    let mut coupling = vec![0.0; n - 1];
    coupling[0] += lr0;
    coupling[n - 2] += lr_last;
    let curvature = match solve_tridiagonal_spd(&diag, &off, &coupling) {
        Some(u) => {
            let dot: f64 = coupling.iter().zip(&u).map(|(a, b)| a * b).sum();
            ll0 + rr_last - dot
        }
        None => f64::NAN,
    };
    LoopMinimizer {
        x2,
        nodes,
        action,
        f0: f0.value(),
        fr: fr.value(),
        oscillatory: osc.value(),
        slope,
        curvature,
        sup_velocity,
    }
}

/// `F = F0 + F_R / Omega` and the `x2`-derivatives of each part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSplit {
    pub omega: f64,
    pub energy: f64,
    pub x2: f64,
    /// `[F, dF, d2F]`.
    pub f: [f64; 3],
    pub f0: [f64; 3],
    pub fr: [f64; 3],
    /// Oscillatory part of `F_R` at `x2`.
    pub oscillatory: f64,
    /// `dF` and `d2F` from the discrete variational equations.
    pub variational: [f64; 2],
}

impl ActionSplit {
    /// `F0 + F_R / Omega`, to compare against `f[0]`.
    pub fn recombined(&self) -> f64 {
        self.f0[0] + self.fr[0] / self.omega
    }
}

fn central(m: f64, c: f64, p: f64, h: f64) -> [f64; 3] {
    [c, (p - m) / (2.0 * h), (p - 2.0 * c + m) / (h * h)]
}

/// Action split at `x2` with derivatives from re-minimized neighbours.
pub fn action_split(
    chart: &RescaledChart,
    x2: f64,
    energy: f64,
    opts: &LoopOptions,
) -> Result<ActionSplit, HighEnergyError> {
    let map = chart.time_map(energy);
    let n = opts.nodes(chart.omega);
    let centre = minimize_loop(&map, x2, n, None, opts)?;
    split_around(chart, energy, &centre, opts)
}

fn split_around(
    chart: &RescaledChart,
    energy: f64,
    centre: &LoopMinimizer,
    opts: &LoopOptions,
) -> Result<ActionSplit, HighEnergyError> {
    let map = chart.time_map(energy);
    let n = centre.nodes.len() - 1;
    let hs = opts.fd_step;
    let minus = minimize_loop(&map, centre.x2 - hs, n, Some(&centre.nodes), opts)?;
    let plus = minimize_loop(&map, centre.x2 + hs, n, Some(&centre.nodes), opts)?;
    Ok(ActionSplit {
        omega: chart.omega,
        energy,
        x2: centre.x2,
        f: central(minus.action, centre.action, plus.action, hs),
        f0: central(minus.f0, centre.f0, plus.f0, hs),
        fr: central(minus.fr, centre.fr, plus.fr, hs),
        oscillatory: centre.oscillatory,
        variational: [centre.slope, centre.curvature],
    })
}

/// The minimizing loop over all `x2`: a `2 pi / Omega` periodic orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLoop {
    pub loop_min: LoopMinimizer,
    /// Minimizer of `[V]`.
    pub average_minimizer: f64,
    /// Floquet multipliers of the time-`2 pi` map, largest first.
    pub multipliers: [f64; 2],
    /// Time for `x1` to advance by `2 pi Omega` along the orbit.
    pub period: f64,
}

/// Newton iteration on `x2` using the discrete variational derivatives,
/// started at the minimizer of `[V]`.
pub fn critical_loop(
    chart: &RescaledChart,
    energy: f64,
    opts: &LoopOptions,
) -> Result<CriticalLoop, HighEnergyError> {
    if !(energy >= ENERGY_FLOOR) {
        return Err(HighEnergyError::EnergyBelowFloor(energy));
    }
    let line = chart.potential.line_average()?.analyze(0.0);
    if line.global_minimizers != 1 {
        return Err(HighEnergyError::DegenerateAverage);
    }
    let map = chart.time_map(energy);
    let n = opts.nodes(chart.omega);
    let mut x = line.minimizer;
    let mut current = minimize_loop(&map, x, n, None, opts)?;
    for _ in 0..30 {
        let d2 = current.curvature;
        let step = if d2 > 0.0 {
            current.slope / d2
        } else {
            current.slope.signum() * 1e-2
        };
        let step = step.clamp(-0.2, 0.2);
        x -= step;
        current = minimize_loop(&map, x, n, Some(&current.nodes), opts)?;
        if step.abs() < 1e-12 {
            break;
        }
    }
    let multipliers = floquet(&map, &current)?;
    let period = orbit_period(&map, &current)?;
    Ok(CriticalLoop {
        loop_min: current,
        average_minimizer: line.minimizer,
        multipliers,
        period,
    })
}

/// Multipliers of the linearized discrete Euler-Lagrange map around a
/// closed minimizer, from the product of the 2x2 transfer matrices.
fn floquet(map: &TimeMap<'_>, lm: &LoopMinimizer) -> Result<[f64; 2], HighEnergyError> {
    let avg = map.chart.averaged_potential()?;
    let segs = segments(map, &avg, &lm.nodes)?;
    let n = segs.len();
    let h = 2.0 * PI / n as f64;
    let b: Vec<(f64, f64, f64)> = segs.iter().map(|s| blocks(s, h)).collect();
    let mut m = Matrix2::identity();
    for k in 1..=n {
        let prev = b[k - 1];
        let next = b[k % n];
        let diag = prev.1 + next.0;
        let t = Matrix2::new(0.0, 1.0, -prev.2 / next.2, -diag / next.2);
        m = t * m;
        // keep the product well scaled
        let s = m.amax();
        if s > 1e100 {
            m /= s;
        }
    }
    let tr = m.trace();
    let det = m.determinant();
    let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
    let l1 = (Complex64::new(tr, 0.0) + disc) / 2.0;
    let l2 = (Complex64::new(tr, 0.0) - disc) / 2.0;
    let (a, c) = if l1.norm() >= l2.norm() {
        (l1, l2)
    } else {
        (l2, l1)
    };
    Ok([a.re.abs().max(a.norm()), c.norm()])
}

fn orbit_period(map: &TimeMap<'_>, lm: &LoopMinimizer) -> Result<f64, HighEnergyError> {
    let (a11, a12, _) = map.chart.entries();
    let w = map.chart.omega;
    let avg = map.chart.averaged_potential()?;
    let segs = segments(map, &avg, &lm.nodes)?;
    let h = 2.0 * PI / segs.len() as f64;
    let mut t = Sum::default();
    for s in &segs {
        let y1 = map.energy * w + s.jet.shifted_y1;
        let rate = 1.0 + a11 * y1 / (w * w) + a12 * s.jet.momentum / w;
        t.add(h / rate);
    }
    Ok(t.value())
}

/// Everything measured at one `(Omega, E)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub omega: f64,
    pub energy: f64,
    pub x2_min: f64,
    pub split: ActionSplit,
    /// `sup |gamma* - x2*|` with `x2*` the minimizer of `[V]`.
    pub sup_deviation: f64,
    pub sup_velocity: f64,
    pub multipliers: [f64; 2],
    pub period: f64,
    /// `dT/dE` by central differences of neighbouring critical loops.
    pub period_shear: f64,
    /// `1 + 2 pi |dT/dE| / T`, the tangential growth per revolution.
    pub tangent_growth: f64,
}

impl PointReport {
    /// `mu`: the curvature of `F` at its minimizer.
    pub fn mu(&self) -> f64 {
        self.split.f[2]
    }

    /// Larger of `|F_R|, |F_R'|, |F_R''|`.
    pub fn fr_c2(&self) -> f64 {
        self.split.fr.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Full analysis of one grid point.
pub fn analyze_point(
    chart: &RescaledChart,
    energy: f64,
    opts: &LoopOptions,
) -> Result<PointReport, HighEnergyError> {
    let crit = critical_loop(chart, energy, opts)?;
    let split = split_around(chart, energy, &crit.loop_min, opts)?;
    let de = 1e-4 * energy.max(1.0);
    let lo = critical_loop(chart, energy - de, opts)?;
    let hi = critical_loop(chart, energy + de, opts)?;
    let shear = (hi.period - lo.period) / (2.0 * de);
    Ok(PointReport {
        omega: chart.omega,
        energy,
        x2_min: crit.loop_min.x2,
        split,
        sup_deviation: crit.loop_min.sup_deviation(crit.average_minimizer),
        sup_velocity: crit.loop_min.sup_velocity,
        multipliers: crit.multipliers,
        period: crit.period,
        period_shear: shear,
        tangent_growth: 1.0 + 2.0 * PI * shear.abs() / crit.period,
    })
}

/// Boundedness of `F_R` and convergence of the minimizers along an `Omega` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub omegas: Vec<f64>,
    pub fr_c2: Vec<f64>,
    pub sup_deviation: Vec<f64>,
    pub sup_velocity: Vec<f64>,
    /// `max fr_c2 / fr_c2` at the smallest `Omega`.
    pub c2_growth: f64,
    pub bounded: bool,
    pub deviation_decreasing: bool,
    pub velocity_decreasing: bool,
}

impl LimitReport {
    pub fn passed(&self) -> bool {
        self.bounded && self.deviation_decreasing && self.velocity_decreasing
    }
}

fn decreasing(v: &[f64], noise: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + noise)) && v.last() <= v.first()
}

/// Limit checks over points of one energy, sorted by `Omega`.
pub fn limit_checks(points: &[PointReport]) -> Result<LimitReport, HighEnergyError> {
    if points.is_empty() {
        return Err(HighEnergyError::EmptyGrid);
    }
    let mut pts: Vec<&PointReport> = points.iter().collect();
    pts.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    let fr_c2: Vec<f64> = pts.iter().map(|p| p.fr_c2()).collect();
    let sup_deviation: Vec<f64> = pts.iter().map(|p| p.sup_deviation).collect();
    let sup_velocity: Vec<f64> = pts.iter().map(|p| p.sup_velocity).collect();
    let peak = fr_c2.iter().copied().fold(0.0f64, f64::max);
    let c2_growth = if fr_c2[0] > 0.0 {
        peak / fr_c2[0]
    } else {
        f64::INFINITY
    };
    Ok(LimitReport {
        omegas: pts.iter().map(|p| p.omega).collect(),
        bounded: c2_growth <= 2.0,
        deviation_decreasing: decreasing(&sup_deviation, 0.1),
        velocity_decreasing: decreasing(&sup_velocity, 0.1),
        fr_c2,
        sup_deviation,
        sup_velocity,
        c2_growth,
    })
}

/// Uniform nondegeneracy of the action minimum over an `(Omega, E)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub mu_min: f64,
    /// Smallest curvature over the whole grid.
    pub mu_hat: f64,
    /// `(Omega, min over E of mu)`, sorted by `Omega`.
    pub mu_by_omega: Vec<(f64, f64)>,
    /// `(max - min) / max` of `mu_by_omega`.
    pub mu_spread: f64,
    /// Smallest grid `Omega` from which the verdict holds and `mu` stays
    /// within 20% of its value at the largest `Omega`.
    pub omega_star: Option<f64>,
    pub largest_multiplier: f64,
    pub max_tangent_growth: f64,
    pub passed: bool,
}

pub fn uniform_splitting(
    points: &[PointReport],
    mu_min: f64,
) -> Result<SplittingReport, HighEnergyError> {
    if points.is_empty() {
        return Err(HighEnergyError::EmptyGrid);
    }
    let mut omegas: Vec<f64> = points.iter().map(|p| p.omega).collect();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    let mu_by_omega: Vec<(f64, f64)> = omegas
        .iter()
        .map(|&w| {
            let m = points
                .iter()
                .filter(|p| p.omega == w)
                .map(|p| p.mu())
                .fold(f64::INFINITY, f64::min);
            (w, m)
        })
        .collect();
    let mu_hat = mu_by_omega
        .iter()
        .map(|m| m.1)
        .fold(f64::INFINITY, f64::min);
    let hi = mu_by_omega
        .iter()
        .map(|m| m.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let mu_spread = if hi > 0.0 {
        (hi - mu_hat) / hi
    } else {
        f64::INFINITY
    };
    let reference = mu_by_omega.last().map_or(f64::NAN, |m| m.1);
    let mut omega_star = None;
    for (i, &(w, _)) in mu_by_omega.iter().enumerate() {
        let tail_ok = mu_by_omega[i..]
            .iter()
            .all(|&(_, m)| m >= mu_min && (m - reference).abs() <= 0.2 * reference.abs());
        if tail_ok {
            omega_star = Some(w);
            break;
        }
    }
    let passed = mu_hat.is_finite() && mu_hat >= mu_min;
    Ok(SplittingReport {
        mu_min,
        mu_hat,
        mu_by_omega,
        mu_spread,
        omega_star,
        largest_multiplier: points.iter().map(|p| p.multipliers[0]).fold(0.0, f64::max),
        max_tangent_growth: points.iter().map(|p| p.tangent_growth).fold(0.0, f64::max),
        passed,
    })
}
