//! Hamiltonian flows, variational equations, Poincare returns and the two
//! quantitative perturbation estimates (C^1 flow distance and energy drift).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::operator_norm4;
use crate::ode::{Dop853, IntegrationError, OdeSystem};
use crate::system::{symplectic_form, MechanicalSystem, State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("integration failed: {0}")]
    Integration(#[from] IntegrationError),
    #[error("tolerance {0:e} outside [1e-13, 1e-6]")]
    Tolerance(f64),
    #[error("orbit does not close: mismatch {0:e}")]
    NotClosed(f64),
    #[error("section not transversal at the initial point: <f, n> = {0:e}")]
    NotTransversal(f64),
    #[error("no return to the section before t = {0}")]
    NoReturn(f64),
    #[error("orbit left the region |y| <= {bound} (reached {reached})")]
    RegionExit { bound: f64, reached: f64 },
}

/// Hamilton's equations with optional tangent flow and action accumulators.
///
/// State layout: `z (4)`, then `Phi (16, row-major)` if `tangent`, then
/// `int L dt` and `int <y, x'> dt` if `action`.
pub struct FlowOde<'a> {
    pub system: &'a MechanicalSystem,
    pub tangent: bool,
    pub action: bool,
}

impl<'a> FlowOde<'a> {
    pub fn plain(system: &'a MechanicalSystem) -> Self {
        Self {
            system,
            tangent: false,
            action: false,
        }
    }

    pub fn variational(system: &'a MechanicalSystem) -> Self {
        Self {
            system,
            tangent: true,
            action: false,
        }
    }

    pub fn with_action(mut self) -> Self {
        self.action = true;
        self
    }

    /// Initial augmented state for `z0` (identity tangent, zero accumulators).
    pub fn initial(&self, z0: &State) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        v[..4].copy_from_slice(z0);
        if self.tangent {
            for i in 0..4 {
                v[4 + 5 * i] = 1.0;
            }
        }
        v
    }

    fn action_offset(&self) -> usize {
        if self.tangent {
            20
        } else {
            4
        }
    }
}

impl OdeSystem for FlowOde<'_> {
    fn dim(&self) -> usize {
        4 + if self.tangent { 16 } else { 0 } + if self.action { 2 } else { 0 }
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let z = [y[0], y[1], y[2], y[3]];
        let f = self.system.vector_field(t, &z);
        dy[..4].copy_from_slice(&f);
        if self.tangent {
            let j = self.system.jacobian(t, &z);
            for r in 0..4 {
                for c in 0..4 {
                    let mut s = 0.0;
                    for k in 0..4 {
                        s += j[(r, k)] * y[4 + 4 * k + c];
                    }
                    dy[4 + 4 * r + c] = s;
                }
            }
        }
        if self.action {
            let o = self.action_offset();
            let p = z[2] * f[0] + z[3] * f[1];
            dy[o] = p - self.system.hamiltonian(t, &z);
            dy[o + 1] = p;
        }
    }
}

fn tangent_of(v: &[f64]) -> Matrix4<f64> {
    Matrix4::from_row_slice(&v[4..20])
}

fn check_tol(tol: f64) -> Result<Dop853, FlowError> {
    if !(1e-13..=1e-6).contains(&tol) {
        return Err(FlowError::Tolerance(tol));
    }
    Ok(Dop853::with_tolerance(tol))
}

/// One stored point of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: State,
    pub energy: f64,
}

/// Time-ordered samples at the integrator's accepted steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// Largest deviation of the energy from its initial value.
    pub fn energy_variation(&self) -> f64 {
        let Some(first) = self.samples.first() else {
            return 0.0;
        };
        self.samples
            .iter()
            .map(|s| (s.energy - first.energy).abs())
            .fold(0.0, f64::max)
    }
}

/// Integrates Hamilton's equations, keeping every accepted step.
pub fn integrate(
    sys: &MechanicalSystem,
    z0: &State,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Trajectory, FlowError> {
    let solver = check_tol(tol)?;
    let ode = FlowOde::plain(sys);
    let mut samples = Vec::new();
    solver.integrate(&ode, t0, z0, t1, |t, y| {
        let z = [y[0], y[1], y[2], y[3]];
        samples.push(TrajectorySample {
            t,
            state: z,
            energy: sys.hamiltonian(t, &z),
        });
    })?;
    Ok(Trajectory { samples })
}

/// Time-`t1` map.
pub fn flow_map(
    sys: &MechanicalSystem,
    z0: &State,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<State, FlowError> {
    let y = check_tol(tol)?.integrate(&FlowOde::plain(sys), t0, z0, t1, |_, _| {})?;
    Ok([y[0], y[1], y[2], y[3]])
}

/// Time-`t1` map and its derivative from the variational equation.
pub fn flow_with_tangent(
    sys: &MechanicalSystem,
    z0: &State,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<(State, Matrix4<f64>), FlowError> {
    let ode = FlowOde::variational(sys);
    let y = check_tol(tol)?.integrate(&ode, t0, &ode.initial(z0), t1, |_, _| {})?;
    Ok(([y[0], y[1], y[2], y[3]], tangent_of(&y)))
}

/// Fundamental solution of the variational equation over one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonodromyMatrix {
    pub matrix: Matrix4<f64>,
}

impl MonodromyMatrix {
    /// `|M^T J M - J| / max(1, |M|^2)` in the max norm.
    pub fn symplectic_defect(&self) -> f64 {
        let j = symplectic_form();
        let d = self.matrix.transpose() * j * self.matrix - j;
        let scale = self.matrix.amax().powi(2).max(1.0);
        d.amax() / scale
    }

    /// Multipliers from the palindromic characteristic polynomial of a
    /// symplectic matrix, ordered by decreasing modulus. Each reciprocal pair
    /// multiplies to one by construction; check [`Self::symplectic_defect`]
    /// separately.
    pub fn multipliers(&self) -> [Complex64; 4] {
        let m = &self.matrix;
        let a1 = m.trace();
        let mut a2 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                a2 += m[(i, j)] * m[(j, i)] - m[(i, i)] * m[(j, j)];
            }
        }
        let a2 = -a2;
        // s = lambda + 1/lambda solves s^2 - a1 s + (a2 - 2) = 0.
        let disc = Complex64::new(a1 * a1 - 4.0 * (a2 - 2.0), 0.0).sqrt();
        let big = if a1 >= 0.0 {
            (Complex64::new(a1, 0.0) + disc) / 2.0
        } else {
            (Complex64::new(a1, 0.0) - disc) / 2.0
        };
        let small = if big.norm() > 0.0 {
            Complex64::new(a2 - 2.0, 0.0) / big
        } else {
            Complex64::new(a1, 0.0) - big
        };
        let mut out = Vec::with_capacity(4);
        for s in [big, small] {
            let root = (s * s - 4.0).sqrt();
            let l1 = if (s + root).norm() >= (s - root).norm() {
                (s + root) / 2.0
            } else {
                (s - root) / 2.0
            };
            out.push(l1);
            out.push(Complex64::new(1.0, 0.0) / l1);
        }
        out.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        [out[0], out[1], out[2], out[3]]
    }

    /// Largest multiplier modulus.
    pub fn leading_multiplier(&self) -> f64 {
        self.multipliers()[0].norm()
    }

    /// Dominant eigenvalue modulus by power iteration; independent of the
    /// symplectic structure.
    pub fn dominant_by_power_iteration(&self) -> f64 {
        let mut v = Vector4::new(1.0, 0.7, 0.3, 0.1);
        let mut est = 0.0;
        for _ in 0..200 {
            let w = self.matrix * v;
            let n = w.norm();
            if n == 0.0 {
                return 0.0;
            }
            let next = n / v.norm();
            v = w / n;
            if (next - est).abs() <= 1e-15 * next {
                est = next;
                break;
            }
            est = next;
        }
        est
    }
}

/// Monodromy of a periodic orbit through `z0` whose lift closes up to `shift`
/// in the angles after time `period`.
pub fn monodromy(
    sys: &MechanicalSystem,
    z0: &State,
    period: f64,
    shift: [f64; 2],
    tol: f64,
) -> Result<MonodromyMatrix, FlowError> {
    let (z1, m) = flow_with_tangent(sys, z0, 0.0, period, tol)?;
    let target = [z0[0] + shift[0], z0[1] + shift[1], z0[2], z0[3]];
    let mismatch = (0..4)
        .map(|i| (z1[i] - target[i]).abs())
        .fold(0.0, f64::max);
    if mismatch > 1e-8 {
        return Err(FlowError::NotClosed(mismatch));
    }
    Ok(MonodromyMatrix { matrix: m })
}

/// Monodromy obtained by integrating backward from the end point; its
/// dominant eigenvalue approximates the inverse of the smallest forward
/// multiplier.
pub fn backward_monodromy(
    sys: &MechanicalSystem,
    z0: &State,
    period: f64,
    shift: [f64; 2],
    tol: f64,
) -> Result<MonodromyMatrix, FlowError> {
    let end = [z0[0] + shift[0], z0[1] + shift[1], z0[2], z0[3]];
    let (_, m) = flow_with_tangent(sys, &end, period, 0.0, tol)?;
    Ok(MonodromyMatrix { matrix: m })
}

/// Section `x_axis = value (mod 2 pi)` crossed in the increasing direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSection {
    pub axis: usize,
    pub value: f64,
}

/// First return to a section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnMap {
    pub time: f64,
    pub state: State,
    /// Differential on the section within the energy level, in `(x_other, y_other)`.
    pub reduced: Matrix2<f64>,
}

/// First return of `z0` to the section, with the reduced differential.
pub fn poincare_return(
    sys: &MechanicalSystem,
    section: AngleSection,
    z0: &State,
    t_cap: f64,
    tol: f64,
) -> Result<ReturnMap, FlowError> {
    let solver = check_tol(tol)?;
    let a = section.axis;
    let f0 = sys.vector_field(0.0, z0);
    if f0[a].abs() < 1e-6 {
        return Err(FlowError::NotTransversal(f0[a]));
    }
    let dir = f0[a].signum();
    let target = {
        let k = ((z0[a] - section.value) / (2.0 * PI)).round();
        section.value + 2.0 * PI * (k + dir)
    };
    let ode = FlowOde::variational(sys);
    let hit = solver.integrate_to_event(
        &ode,
        0.0,
        &ode.initial(z0),
        t_cap,
        dir as i32,
        0.0,
        |_, y| y[a] - target,
    )?;
    let Some((time, y)) = hit else {
        return Err(FlowError::NoReturn(t_cap));
    };
    let z = [y[0], y[1], y[2], y[3]];
    let m = tangent_of(&y);
    let f = sys.vector_field(time, &z);
    // Project along the flow onto the section.
    let mut proj = Matrix4::<f64>::identity();
    for r in 0..4 {
        proj[(r, a)] -= f[r] / f[a];
    }
    let dp = proj * m;
    let reduced = reduce_to_section(sys, a, z0, &dp);
    Ok(ReturnMap {
        time,
        state: z,
        reduced,
    })
}

/// Restricts a differential between section points to the energy level,
/// using the remaining angle and its momentum as coordinates.
fn reduce_to_section(
    sys: &MechanicalSystem,
    axis: usize,
    from: &State,
    dp: &Matrix4<f64>,
) -> Matrix2<f64> {
    let other = 1 - axis;
    let (xo, yo, ya) = (other, 2 + other, 2 + axis);
    let g0 = sys.hamiltonian_gradient(0.0, from);
    // Embedding (dx_o, dy_o) -> dz with dx_a = 0 and dG = 0.
    let mut embed = nalgebra::Matrix4x2::zeros();
    embed[(xo, 0)] = 1.0;
    embed[(yo, 1)] = 1.0;
    embed[(ya, 0)] = -g0[xo] / g0[ya];
    embed[(ya, 1)] = -g0[yo] / g0[ya];
    let image = dp * embed;
    Matrix2::new(
        image[(xo, 0)],
        image[(xo, 1)],
        image[(yo, 0)],
        image[(yo, 1)],
    )
}

/// `(B / A)(1 - e^{-A t}) e^{2 A t}`.
pub fn gronwall_bound(a: f64, b: f64, t: f64) -> f64 {
    if a == 0.0 {
        return b * t;
    }
    b / a * (1.0 - (-a * t).exp()) * (2.0 * a * t).exp()
}

/// Inputs and outcome of a C^1 flow-distance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub bound: f64,
    pub measured: f64,
    pub value_distance: f64,
    pub jacobian_distance: f64,
    pub y_max: f64,
    pub points: usize,
    pub passed: bool,
}

/// Majorants of a mechanical vector field on `|y| <= y_max`:
/// `(sup |F|, sup |DF|, sup |D^2 F|)`.
fn field_norms(sys: &MechanicalSystem, y_max: f64) -> (f64, f64, f64) {
    let a_norm = sys.kinetic().matrix().symmetric_eigenvalues().amax();
    let v = sys.potential();
    let mut c0 = a_norm * y_max + sys.drift.abs() + v.derivative_majorant(1);
    let mut c1_x = v.derivative_majorant(2);
    let mut c2 = v.derivative_majorant(3);
    if let Some(r) = sys.remainder() {
        let amp = r.amplitude.abs();
        c0 += amp * spatial_majorant(r.field(), 1);
        c1_x += amp * spatial_majorant(r.field(), 2);
        c2 += amp * spatial_majorant(r.field(), 3);
    }
    (c0, a_norm.max(c1_x), c2)
}

fn spatial_majorant(f: &crate::fourier::FourierField, k: i32) -> f64 {
    f.modes()
        .map(|(l, c)| c.norm() * ((l[0] * l[0] + l[1] * l[1]) as f64).sqrt().powi(k))
        .sum()
}

/// Majorants of `F_eps - F_0`: `(sup |dF|, sup |D dF|)`.
fn difference_norms(s0: &MechanicalSystem, s1: &MechanicalSystem, y_max: f64) -> (f64, f64) {
    let dv = s1
        .potential()
        .minus(s0.potential())
        .expect("both potentials live on the 2-torus");
    let da = s1.kinetic().matrix() - s0.kinetic().matrix();
    let da_norm = if da.amax() == 0.0 {
        0.0
    } else {
        (da.transpose() * da).symmetric_eigenvalues().amax().sqrt()
    };
    let mut c0 = dv.derivative_majorant(1) + da_norm * y_max + (s1.drift - s0.drift).abs();
    let mut c1 = dv.derivative_majorant(2).max(da_norm);
    for s in [s0, s1] {
        if let Some(r) = s.remainder() {
            let amp = r.amplitude.abs();
            c0 += amp * spatial_majorant(r.field(), 1);
            c1 += amp * spatial_majorant(r.field(), 2);
        }
    }
    (c0, c1)
}

/// Sample points near the orbit of `z0`: orbit points at evenly spread times
/// in `[0, t]`, each displaced by a random vector of length `radius`.
pub fn orbit_cloud<R: Rng + ?Sized>(
    sys: &MechanicalSystem,
    z0: &State,
    t: f64,
    radius: f64,
    count: usize,
    rng: &mut R,
    tol: f64,
) -> Result<Vec<State>, FlowError> {
    let mut out = Vec::with_capacity(count);
    let mut z = *z0;
    let dt = t / count.max(1) as f64;
    for k in 0..count {
        let mut d = [0.0; 4];
        for v in d.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        out.push([
            z[0] + radius * d[0] / n,
            z[1] + radius * d[1] / n,
            z[2] + radius * d[2] / n,
            z[3] + radius * d[3] / n,
        ]);
        if k + 1 < count {
            z = flow_map(sys, &z, 0.0, dt, tol)?;
        }
    }
    Ok(out)
}

/// Compares the time-`t` maps of two systems and their derivatives on a point
/// cloud against the Gronwall-type bound. Coordinates are lifted.
pub fn gronwall_check(
    sys0: &MechanicalSystem,
    sys_eps: &MechanicalSystem,
    cloud: &[State],
    t: f64,
    tol: f64,
) -> Result<GronwallReport, FlowError> {
    let mut value_distance: f64 = 0.0;
    let mut jacobian_distance: f64 = 0.0;
    let mut y_max: f64 = 0.0;
    for p in cloud {
        let mut track = |sys: &MechanicalSystem| -> Result<(State, Matrix4<f64>), FlowError> {
            let ode = FlowOde::variational(sys);
            let y = check_tol(tol)?.integrate(&ode, 0.0, &ode.initial(p), t, |_, y| {
                y_max = y_max.max((y[2] * y[2] + y[3] * y[3]).sqrt());
            })?;
            Ok(([y[0], y[1], y[2], y[3]], tangent_of(&y)))
        };
        let (z0, m0) = track(sys0)?;
        let (z1, m1) = track(sys_eps)?;
        let d = (0..4).map(|i| (z1[i] - z0[i]).powi(2)).sum::<f64>().sqrt();
        value_distance = value_distance.max(d);
        jacobian_distance = jacobian_distance.max(operator_norm4(&(m1 - m0)));
    }
    let (a0, a1, a2) = field_norms(sys0, y_max);
    let (b0, b1, b2) = field_norms(sys_eps, y_max);
    let a = a0.max(a1).max(a2).max(b0).max(b1).max(b2);
    let (d0, d1) = difference_norms(sys0, sys_eps, y_max);
    let b = d0.max(d1);
    let bound = gronwall_bound(a, b, t);
    let measured = value_distance.max(jacobian_distance);
    Ok(GronwallReport {
        t,
        a,
        b,
        bound,
        measured,
        value_distance,
        jacobian_distance,
        y_max,
        points: cloud.len(),
        passed: measured <= bound,
    })
}

/// Scalings of the fast remainder for the energy drift estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftScaling {
    pub epsilon: f64,
    pub sigma: f64,
    pub omega3: f64,
    /// Momentum bound defining the region where norms are taken.
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub measured: f64,
    pub constant: f64,
    pub bound: f64,
    pub window: f64,
    pub y_max: f64,
    pub reached_y: f64,
    pub passed: bool,
}

/// `sum_{k != 0} k^{-4} = pi^4 / 45`.
pub const FOURIER_TAIL_SUM: f64 = PI * PI * PI * PI / 45.0;

/// Constant of the drift estimate for the remainder of `sys` on `|y| <= y_max`.
pub fn drift_constant(sys: &MechanicalSystem, omega3: f64, y_max: f64) -> f64 {
    let Some(r) = sys.remainder() else {
        return 0.0;
    };
    let a_norm = sys.kinetic().matrix().symmetric_eigenvalues().amax();
    let speed = a_norm * y_max + sys.potential().derivative_majorant(1);
    let r3 = r.field().cr_norm_bound(3);
    let dr3 = r.field().cr_norm_bound(4);
    r3.max(speed * dr3) * FOURIER_TAIL_SUM / (omega3.abs() * PI)
}

/// Integrates the perturbed system with remainder `eps^sigma R(x, omega3 s / sqrt(eps))`
/// over `[s0, s1]` and compares the energy variation with `K (s1 - s0 + 1) eps^sigma`.
/// The remainder of `sys` must carry amplitude and rate accordingly.
pub fn energy_drift(
    sys: &MechanicalSystem,
    z0: &State,
    s0: f64,
    s1: f64,
    scaling: DriftScaling,
    tol: f64,
) -> Result<DriftReport, FlowError> {
    let period = sys.remainder().map_or(f64::INFINITY, |r| r.period());
    let mut solver = check_tol(tol)?;
    if period.is_finite() {
        solver = solver.with_max_step(period / 16.0);
    }
    let e0 = sys.hamiltonian(s0, z0);
    let mut measured: f64 = 0.0;
    let mut reached: f64 = 0.0;
    solver.integrate(&FlowOde::plain(sys), s0, z0, s1, |t, y| {
        let z = [y[0], y[1], y[2], y[3]];
        measured = measured.max((sys.hamiltonian(t, &z) - e0).abs());
        reached = reached.max((z[2] * z[2] + z[3] * z[3]).sqrt());
    })?;
    if reached > scaling.y_max {
        return Err(FlowError::RegionExit {
            bound: scaling.y_max,
            reached,
        });
    }
    let constant = drift_constant(sys, scaling.omega3, scaling.y_max);
    let window = (s1 - s0).abs();
    let bound = constant * (window + 1.0) * scaling.epsilon.powf(scaling.sigma);
    Ok(DriftReport {
        measured,
        constant,
        bound,
        window,
        y_max: scaling.y_max,
        reached_y: reached,
        passed: measured <= bound,
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
    fn free_motion_returns_after_two_pi() {
        let r = poincare_return(
            &free(),
            AngleSection {
                axis: 0,
                value: 0.0,
            },
            &[0.0, 0.0, 1.0, 0.0],
            100.0,
            1e-12,
        )
        .unwrap();
        assert!((r.time - 2.0 * PI).abs() < 1e-10);
        assert!((r.reduced - Matrix2::new(1.0, 2.0 * PI, 0.0, 1.0)).amax() < 1e-9);
    }

    #[test]
    fn pendulum_bottom_conserves_energy() {
        let traj = integrate(
            &pendulum_and_well(0.25),
            &[PI, 0.0, 0.0, 0.0],
            0.0,
            20.0,
            1e-12,
        )
        .unwrap();
        assert!((traj.samples[0].energy + 2.0).abs() < 1e-14);
        assert!(traj.energy_variation() < 1e-9);
    }

    #[test]
    fn saddle_is_stationary() {
        let z = flow_map(&pendulum_and_well(0.25), &[0.0; 4], 0.0, 10.0, 1e-12).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn tolerance_range_is_enforced() {
        assert_eq!(
            flow_map(&free(), &[0.0; 4], 0.0, 1.0, 1e-3),
            Err(FlowError::Tolerance(1e-3))
        );
    }

    #[test]
    fn multipliers_of_hyperbolic_symplectic_matrix() {
        let l: f64 = 1e6;
        let mut m = Matrix4::identity();
        m[(1, 1)] = l;
        m[(3, 3)] = 1.0 / l;
        m[(0, 2)] = 3.0;
        let mono = MonodromyMatrix { matrix: m };
        assert!(mono.symplectic_defect() < 1e-15);
        let mu = mono.multipliers();
        assert!((mu[0].re - l).abs() < 1e-6 * l);
        assert!((mu[3].re * l - 1.0).abs() < 1e-9);
        assert!((mu[1].re - 1.0).abs() < 1e-6 && (mu[2].re - 1.0).abs() < 1e-6);
        assert!((mono.dominant_by_power_iteration() - l).abs() < 1e-6 * l);
    }

    #[test]
    fn bound_grows_with_time() {
        let mut prev = 0.0;
        for k in 1..50 {
            let b = gronwall_bound(2.0, 1e-3, k as f64 * 0.05);
            assert!(b > prev);
            prev = b;
        }
    }
}
