//! Periodic orbits represented by multiple-shooting nodes, and their
//! Newton refinement.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::flow::{FlowError, FlowOde, MonodromyMatrix};
use crate::linalg::damped_least_squares;
use crate::ode::Dop853;
use crate::system::{MechanicalSystem, State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShootingError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("Newton refinement stalled at residual {0:e}")]
    Stalled(f64),
    #[error("need at least one segment and a positive period")]
    BadInput,
}

/// What closes the boundary value problem besides periodicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// Period fixed; a phase condition pins the base point.
    FixedPeriod,
    /// Energy fixed; the period is an unknown.
    FixedEnergy(f64),
    /// Time-periodic system: period fixed, time origin fixed, no phase condition.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub tol: f64,
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            residual_tol: 1e-10,
            max_iter: 40,
        }
    }
}

/// Periodic orbit in the lift: after one period the angles advance by
/// `2 pi class` and the momenta return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub class: [i32; 2],
    pub period: f64,
    pub energy: f64,
    /// Nodes at times `j T / M`, `j = 0..M`.
    pub nodes: Vec<State>,
    /// `int_0^T L dt` along the orbit.
    pub action: f64,
    /// `int_0^T <y, x'> dt`.
    pub reduced_action: f64,
    /// Sup norm of the shooting residual.
    pub residual: f64,
    /// Time of the first node (nonzero only for forced orbits).
    pub t0: f64,
}

impl PeriodicOrbit {
    pub fn shift(&self) -> [f64; 2] {
        [
            2.0 * PI * self.class[0] as f64,
            2.0 * PI * self.class[1] as f64,
        ]
    }

    pub fn base(&self) -> State {
        self.nodes[0]
    }

    pub fn segments(&self) -> usize {
        self.nodes.len()
    }

    /// `n_per_segment` samples per shooting segment, integrated segment by
    /// segment so that long orbits near a saddle stay accurate. Returns
    /// `(t, z)` pairs covering `[t0, t0 + T)`.
    pub fn sample(
        &self,
        sys: &MechanicalSystem,
        n_per_segment: usize,
        tol: f64,
    ) -> Result<Vec<(f64, State)>, FlowError> {
        let m = self.nodes.len();
        let dt = self.period / m as f64;
        let solver = Dop853::with_tolerance(tol);
        let ode = FlowOde::plain(sys);
        let mut out = Vec::with_capacity(m * n_per_segment);
        for j in 0..m {
            let ta = self.t0 + j as f64 * dt;
            let pts = solver
                .sample(&ode, ta, &self.nodes[j], ta + dt, n_per_segment)
                .map_err(FlowError::from)?;
            for (k, p) in pts.iter().take(n_per_segment).enumerate() {
                out.push((
                    ta + k as f64 * dt / n_per_segment as f64,
                    [p[0], p[1], p[2], p[3]],
                ));
            }
        }
        Ok(out)
    }

    /// Product of the segment Jacobians.
    pub fn monodromy(
        &self,
        sys: &MechanicalSystem,
        tol: f64,
    ) -> Result<MonodromyMatrix, FlowError> {
        let m = self.nodes.len();
        let dt = self.period / m as f64;
        let mut total = Matrix4::identity();
        for j in 0..m {
            let ta = self.t0 + j as f64 * dt;
            let (_, phi) = crate::flow::flow_with_tangent(sys, &self.nodes[j], ta, ta + dt, tol)?;
            total = phi * total;
        }
        Ok(MonodromyMatrix { matrix: total })
    }

    /// Inverse monodromy assembled from backward integration of each segment,
    /// independent of the forward product.
    pub fn backward_monodromy(
        &self,
        sys: &MechanicalSystem,
        tol: f64,
    ) -> Result<MonodromyMatrix, FlowError> {
        let m = self.nodes.len();
        let dt = self.period / m as f64;
        let s = self.shift();
        let mut total = Matrix4::identity();
        for j in 0..m {
            let mut end = self.nodes[(j + 1) % m];
            if j + 1 == m {
                end[0] += s[0];
                end[1] += s[1];
            }
            let tb = self.t0 + (j + 1) as f64 * dt;
            let (_, phi) = crate::flow::flow_with_tangent(sys, &end, tb, tb - dt, tol)?;
            total *= phi;
        }
        Ok(MonodromyMatrix { matrix: total })
    }

    /// Energy deviation over samples.
    pub fn energy_spread(&self, sys: &MechanicalSystem, tol: f64) -> Result<f64, FlowError> {
        let s = self.sample(sys, 16, tol)?;
        let e: Vec<f64> = s.iter().map(|(t, z)| sys.hamiltonian(*t, z)).collect();
        let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(hi - lo)
    }

    /// Resamples the nodes onto `m` equally spaced times.
    pub fn with_segments(
        &self,
        sys: &MechanicalSystem,
        m: usize,
        tol: f64,
    ) -> Result<Self, FlowError> {
        if m == self.nodes.len() {
            return Ok(self.clone());
        }
        self.resampled(sys, m, 0.0, tol)
    }

    /// Resamples onto `m` equally spaced times starting `offset` after the
    /// current base point. Only meaningful for autonomous orbits.
    pub fn resampled(
        &self,
        sys: &MechanicalSystem,
        m: usize,
        offset: f64,
        tol: f64,
    ) -> Result<Self, FlowError> {
        let k = 64;
        let s = self.sample(sys, k, tol)?;
        let total = s.len();
        let offset = offset - (offset / self.period).floor() * self.period;
        let shift = self.shift();
        let mut nodes = Vec::with_capacity(m);
        let dt_new = self.period / m as f64;
        let dt_old = self.period / total as f64;
        let solver = Dop853::with_tolerance(tol);
        let ode = FlowOde::plain(sys);
        for j in 0..m {
            let mut t = offset + j as f64 * dt_new;
            let wrapped = t >= self.period;
            if wrapped {
                t -= self.period;
            }
            let i = ((t / dt_old).floor() as usize).min(total - 1);
            let (ti, zi) = s[i];
            let y = solver
                .integrate(&ode, ti, &zi, self.t0 + t, |_, _| {})
                .map_err(FlowError::from)?;
            let mut z = [y[0], y[1], y[2], y[3]];
            if wrapped {
                z[0] += shift[0];
                z[1] += shift[1];
            }
            nodes.push(z);
        }
        Ok(Self {
            nodes,
            ..self.clone()
        })
    }

    /// Moves the base point to where the flow is fastest, away from any
    /// nearby equilibrium, keeping `m` segments.
    pub fn rebased_on_fastest(
        &self,
        sys: &MechanicalSystem,
        m: usize,
        tol: f64,
    ) -> Result<Self, FlowError> {
        let s = self.sample(sys, 16, tol)?;
        let mut best = (0.0, f64::NEG_INFINITY);
        for (t, z) in &s {
            let f = sys.vector_field(*t, z);
            let n = f.iter().map(|v| v * v).sum::<f64>();
            if n > best.1 {
                best = (*t - self.t0, n);
            }
        }
        let mut out = self.resampled(sys, m, best.0, tol)?;
        let base = out.nodes[0];
        // keep the base in the fundamental domain
        let wrap = [
            (base[0] / (2.0 * PI)).floor() * 2.0 * PI,
            (base[1] / (2.0 * PI)).floor() * 2.0 * PI,
        ];
        for z in &mut out.nodes {
            z[0] -= wrap[0];
            z[1] -= wrap[1];
        }
        Ok(out)
    }
}

struct Residual {
    r: DVector<f64>,
    j: DMatrix<f64>,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    sys: &MechanicalSystem,
    nodes: &[State],
    period: f64,
    class: [i32; 2],
    closure: Closure,
    reference: &[State],
    t0: f64,
    tol: f64,
) -> Result<Residual, FlowError> {
    let m = nodes.len();
    let free_period = matches!(closure, Closure::FixedEnergy(_));
    let n_unknown = 4 * m + usize::from(free_period);
    let n_eq = 4 * m
        + match closure {
            Closure::FixedPeriod => 1,
            Closure::FixedEnergy(_) => 2,
            Closure::Forced => 0,
        };
    let mut r = DVector::zeros(n_eq);
    let mut j = DMatrix::zeros(n_eq, n_unknown);
    let dt = period / m as f64;
    let shift = [2.0 * PI * class[0] as f64, 2.0 * PI * class[1] as f64];
    let solver = Dop853::with_tolerance(tol);
    let ode = FlowOde::variational(sys);
    for s in 0..m {
        let ta = t0 + s as f64 * dt;
        let y = solver.integrate(&ode, ta, &ode.initial(&nodes[s]), ta + dt, |_, _| {})?;
        let end = [y[0], y[1], y[2], y[3]];
        let phi = Matrix4::from_row_slice(&y[4..20]);
        let next = (s + 1) % m;
        let mut target = nodes[next];
        if next == 0 {
            target[0] += shift[0];
            target[1] += shift[1];
        }
        for i in 0..4 {
            r[4 * s + i] = end[i] - target[i];
            for c in 0..4 {
                j[(4 * s + i, 4 * s + c)] = phi[(i, c)];
            }
            j[(4 * s + i, 4 * next + i)] -= 1.0;
        }
        if free_period {
            let f = sys.vector_field(ta + dt, &end);
            for i in 0..4 {
                j[(4 * s + i, 4 * m)] = f[i] / m as f64;
            }
        }
    }
    let mut row = 4 * m;
    if !matches!(closure, Closure::Forced) {
        // Summed over all nodes so the condition stays effective when some
        // nodes sit where the flow is nearly stationary.
        let fields: Vec<State> = reference
            .iter()
            .enumerate()
            .map(|(s, z)| sys.vector_field(t0 + s as f64 * dt, z))
            .collect();
        let scale = fields
            .iter()
            .flat_map(|f| f.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        let mut val = 0.0;
        for (s, f) in fields.iter().enumerate() {
            for i in 0..4 {
                val += f[i] / scale * (nodes[s][i] - reference[s][i]);
                j[(row, 4 * s + i)] = f[i] / scale;
            }
        }
        r[row] = val;
        row += 1;
    }
    if let Closure::FixedEnergy(e) = closure {
        r[row] = sys.hamiltonian(t0, &nodes[0]) - e;
        let g = sys.hamiltonian_gradient(t0, &nodes[0]);
        for i in 0..4 {
            j[(row, i)] = g[i];
        }
    }
    Ok(Residual { r, j })
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Newton/Levenberg–Marquardt refinement of a periodic orbit from shooting
/// nodes. For [`Closure::FixedEnergy`] the given period is the initial guess.
pub fn refine(
    sys: &MechanicalSystem,
    guess: &[State],
    period: f64,
    class: [i32; 2],
    closure: Closure,
    t0: f64,
    opts: &ShootingOptions,
) -> Result<PeriodicOrbit, ShootingError> {
    if guess.is_empty() || !(period > 0.0) {
        return Err(ShootingError::BadInput);
    }
    let m = guess.len();
    let mut nodes = guess.to_vec();
    let mut period = period;
    let reference = guess.to_vec();
    let mut mu = 0.0;
    let mut res = assemble(
        sys, &nodes, period, class, closure, &reference, t0, opts.tol,
    )?;
    let mut norm = res.r.norm();
    let mut converged = sup(&res.r) <= opts.residual_tol;
    let mut iter = 0;
    while !converged && iter < opts.max_iter {
        iter += 1;
        let Some(dx) = damped_least_squares(&res.j, &res.r, mu) else {
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
            continue;
        };
        let mut trial = nodes.clone();
        for s in 0..m {
            for i in 0..4 {
                trial[s][i] += dx[4 * s + i];
            }
        }
        let trial_period = if matches!(closure, Closure::FixedEnergy(_)) {
            period + dx[4 * m]
        } else {
            period
        };
        let attempt = if trial_period > 0.0 {
            assemble(
                sys,
                &trial,
                trial_period,
                class,
                closure,
                &reference,
                t0,
                opts.tol,
            )
            .ok()
        } else {
            None
        };
        match attempt {
            Some(next) if next.r.norm() < norm || sup(&next.r) <= opts.residual_tol => {
                nodes = trial;
                period = trial_period;
                norm = next.r.norm();
                res = next;
                mu *= 0.1;
                if mu < 1e-12 {
                    mu = 0.0;
                }
                converged = sup(&res.r) <= opts.residual_tol;
            }
            _ => {
                mu = if mu == 0.0 {
                    1e-6 * norm.max(1e-12)
                } else {
                    mu * 10.0
                };
                if mu > 1e12 {
                    break;
                }
            }
        }
    }
    let residual = sup(&res.r);
    if !converged {
        return Err(ShootingError::Stalled(residual));
    }
    let (action, reduced_action) = actions(sys, &nodes, period, t0, opts.tol)?;
    Ok(PeriodicOrbit {
        class,
        period,
        energy: sys.hamiltonian(t0, &nodes[0]),
        nodes,
        action,
        reduced_action,
        residual,
        t0,
    })
}

fn actions(
    sys: &MechanicalSystem,
    nodes: &[State],
    period: f64,
    t0: f64,
    tol: f64,
) -> Result<(f64, f64), FlowError> {
    let m = nodes.len();
    let dt = period / m as f64;
    let solver = Dop853::with_tolerance(tol);
    let ode = FlowOde::plain(sys).with_action();
    let mut a = 0.0;
    let mut w = 0.0;
    for (s, z) in nodes.iter().enumerate() {
        let ta = t0 + s as f64 * dt;
        let mut init = vec![0.0; 6];
        init[..4].copy_from_slice(z);
        let y = solver.integrate(&ode, ta, &init, ta + dt, |_, _| {})?;
        a += y[4];
        w += y[5];
    }
    Ok((a, w))
}

/// Number of shooting segments for a period: at least `min`, and short
/// enough that each segment spans at most `max_len` time units.
pub fn segment_count(period: f64, min: usize, max_len: f64) -> usize {
    let by_len = (period / max_len).ceil() as usize;
    min.max(by_len).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::pendulum_and_well;

    fn rotation_guess(e: f64, m: usize) -> (Vec<State>, f64) {
        // Pendulum rotation at energy e: y1^2/2 - (1 - cos x1) = e.
        let sys = pendulum_and_well(0.25);
        let z0 = [0.0, 0.0, (2.0 * e).sqrt(), 0.0];
        let period = 5.0;
        let dt = period / m as f64;
        let mut nodes = vec![z0];
        let mut z = z0;
        for _ in 1..m {
            z = crate::flow::flow_map(&sys, &z, 0.0, dt, 1e-12).unwrap();
            nodes.push(z);
        }
        (nodes, period)
    }

    #[test]
    fn energy_closure_finds_rotation() {
        let sys = pendulum_and_well(0.25);
        let (nodes, period) = rotation_guess(0.5, 8);
        let orbit = refine(
            &sys,
            &nodes,
            period,
            [1, 0],
            Closure::FixedEnergy(0.5),
            0.0,
            &ShootingOptions::default(),
        )
        .unwrap();
        assert!((orbit.energy - 0.5).abs() < 1e-10);
        assert!(orbit.residual <= 1e-10);
        // Oracle: T(E) = int_0^{2 pi} dx / sqrt(2E + 4 sin^2(x/2)).
        let n = 200_000;
        let h = 2.0 * PI / n as f64;
        let t: f64 = (0..n)
            .map(|k| {
                let x = k as f64 * h;
                h / (1.0 + 4.0 * (x / 2.0).sin().powi(2)).sqrt()
            })
            .sum();
        assert!((orbit.period - t).abs() < 1e-8 * t);
        assert!(orbit.energy_spread(&sys, 1e-12).unwrap() < 1e-9);
    }
}
