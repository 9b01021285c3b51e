//! Adaptive Dormand–Prince 8(5,3) integration and a fixed-step
//! Stormer–Verlet scheme for separable Hamiltonians.

mod tableau;

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use tableau::{A, B, C, E3, E5, STAGES};

/// First-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget of {budget} exhausted at t = {t}")]
    TooManySteps { t: f64, budget: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Tolerances and limits for [`Dop853`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Dop853 {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

struct Work {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    f_new: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            k: vec![vec![0.0; n]; STAGES],
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            f_new: vec![0.0; n],
        }
    }
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

impl Dop853 {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    /// One explicit step of size `h` from `(t, y)` with `f0 = f(t, y)`.
    /// Leaves the new state in `w.y_new` and its derivative in `w.f_new`.
    fn step<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        h: f64,
        w: &mut Work,
    ) {
        let n = y.len();
        w.k[0].copy_from_slice(f0);
        for s in 1..STAGES {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * w.k[j][i];
                }
                w.tmp[i] = y[i] + h * acc;
            }
            sys.rhs(t + C[s] * h, &w.tmp, &mut w.k[s]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for s in 0..STAGES {
                acc += B[s] * w.k[s][i];
            }
            w.y_new[i] = y[i] + h * acc;
        }
        sys.rhs(t + h, &w.y_new, &mut w.f_new);
    }

    fn error_norm(&self, y: &[f64], h: f64, w: &Work) -> f64 {
        let n = y.len();
        let mut e5 = 0.0;
        let mut e3 = 0.0;
        for i in 0..n {
            let scale = self.atol + self.rtol * y[i].abs().max(w.y_new[i].abs());
            let mut a5 = 0.0;
            let mut a3 = 0.0;
            for s in 0..STAGES {
                a5 += E5[s] * w.k[s][i];
                a3 += E3[s] * w.k[s][i];
            }
            a5 += E5[STAGES] * w.f_new[i];
            a3 += E3[STAGES] * w.f_new[i];
            e5 += (a5 / scale).powi(2);
            e3 += (a3 / scale).powi(2);
        }
        if e5 == 0.0 && e3 == 0.0 {
            return 0.0;
        }
        let denom = e5 + 0.01 * e3;
        h.abs() * e5 / (denom * n as f64).sqrt()
    }

    fn initial_step<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64],
        f0: &[f64],
        dir: f64,
    ) -> f64 {
        let n = y.len();
        let scale: Vec<f64> = y.iter().map(|v| self.atol + v.abs() * self.rtol).collect();
        let d0 = rms(y, &scale);
        let d1 = rms(f0, &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1: Vec<f64> = (0..n).map(|i| y[i] + dir * h0 * f0[i]).collect();
        let mut f1 = vec![0.0; n];
        sys.rhs(t + dir * h0, &y1, &mut f1);
        let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
        let d2 = rms(&diff, &scale) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (1e-6f64).max(h0 * 1e-3)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.max_step)
    }

    /// Integrates from `t0` to `t1`, calling `observe(t, y)` at the initial
    /// point and after every accepted step. Returns the final state.
    pub fn integrate<S, O>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t1: f64,
        mut observe: O,
    ) -> Result<Vec<f64>, IntegrationError>
    where
        S: OdeSystem + ?Sized,
        O: FnMut(f64, &[f64]),
    {
        self.run(sys, t0, y0, t1, |t, y| {
            observe(t, y);
            true
        })
    }

    /// Core loop; stops early when `observe` returns `false`.
    fn run<S, O>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t1: f64,
        mut observe: O,
    ) -> Result<Vec<f64>, IntegrationError>
    where
        S: OdeSystem + ?Sized,
        O: FnMut(f64, &[f64]) -> bool,
    {
        let n = y0.len();
        let mut y = y0.to_vec();
        if !observe(t0, &y) {
            return Ok(y);
        }
        if t1 == t0 {
            return Ok(y);
        }
        let dir = if t1 > t0 { 1.0 } else { -1.0 };
        let mut w = Work::new(n);
        let mut f = vec![0.0; n];
        sys.rhs(t0, &y, &mut f);
        let mut t = t0;
        let mut h = self.initial_step(sys, t, &y, &f, dir);
        let mut steps = 0usize;
        while (t1 - t) * dir > 0.0 {
            steps += 1;
            if steps > self.max_steps {
                return Err(IntegrationError::TooManySteps {
                    t,
                    budget: self.max_steps,
                });
            }
            let min_step = 10.0 * (f64::EPSILON * t.abs()).max(1e-300);
            h = h.min(self.max_step).max(min_step);
            let mut rejected = false;
            loop {
                let remaining = (t1 - t).abs();
                let mut last = false;
                let mut hh = h;
                if hh >= remaining {
                    hh = remaining;
                    last = true;
                }
                self.step(sys, t, &y, &f, dir * hh, &mut w);
                let err = self.error_norm(&y, hh, &w);
                if !err.is_finite() {
                    return Err(IntegrationError::NonFinite { t });
                }
                if err < 1.0 {
                    let mut factor = if err == 0.0 {
                        MAX_FACTOR
                    } else {
                        MAX_FACTOR.min(SAFETY * err.powf(-1.0 / 8.0))
                    };
                    if rejected {
                        factor = factor.min(1.0);
                    }
                    t = if last { t1 } else { t + dir * hh };
                    y.copy_from_slice(&w.y_new);
                    f.copy_from_slice(&w.f_new);
                    h = hh * factor;
                    if last && hh < h {
                        h = hh.max(h * 0.5);
                    }
                    break;
                }
                h = hh * MIN_FACTOR.max(SAFETY * err.powf(-1.0 / 8.0));
                rejected = true;
                if h < min_step {
                    return Err(IntegrationError::StepUnderflow { t });
                }
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFinite { t });
            }
            if !observe(t, &y) {
                break;
            }
        }
        Ok(y)
    }

    /// Integrates until `event(t, y)` changes sign in the requested direction
    /// (`+1` rising, `-1` falling, `0` either), or until `t_max`. The crossing
    /// is located by re-stepping from the start of the bracketing step.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate_to_event<S, E>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t_max: f64,
        direction: i32,
        min_time: f64,
        event: E,
    ) -> Result<Option<(f64, Vec<f64>)>, IntegrationError>
    where
        S: OdeSystem + ?Sized,
        E: Fn(f64, &[f64]) -> f64,
    {
        let mut prev_t = t0;
        let mut prev_y = y0.to_vec();
        let mut prev_g = event(t0, y0);
        let mut bracket: Option<(f64, Vec<f64>, f64, f64)> = None;
        self.run(sys, t0, y0, t_max, |t, y| {
            if t == t0 {
                return true;
            }
            let g = event(t, y);
            let rising = prev_g < 0.0 && g >= 0.0;
            let falling = prev_g > 0.0 && g <= 0.0;
            let hit = match direction {
                1 => rising,
                -1 => falling,
                _ => rising || falling,
            };
            if hit && t - t0 >= min_time {
                bracket = Some((prev_t, prev_y.clone(), prev_g, t - prev_t));
                return false;
            }
            prev_t = t;
            prev_y.copy_from_slice(y);
            prev_g = g;
            true
        })?;
        let Some((ta, ya, ga, hstep)) = bracket else {
            return Ok(None);
        };
        // Regula falsi (Illinois) on the step length from (ta, ya).
        let n = ya.len();
        let mut w = Work::new(n);
        let mut fa = vec![0.0; n];
        sys.rhs(ta, &ya, &mut fa);
        let mut lo = 0.0;
        let mut glo = ga;
        let mut hi = hstep;
        self.step(sys, ta, &ya, &fa, hi, &mut w);
        let mut ghi = event(ta + hi, &w.y_new);
        let mut side = 0;
        let mut s = hi;
        for _ in 0..100 {
            s = (lo * ghi - hi * glo) / (ghi - glo);
            if !(s > lo && s < hi) {
                s = 0.5 * (lo + hi);
            }
            self.step(sys, ta, &ya, &fa, s, &mut w);
            let gs = event(ta + s, &w.y_new);
            if gs == 0.0 || (hi - lo) < 1e-15 * (1.0 + ta.abs()) {
                break;
            }
            if (gs > 0.0) == (ghi > 0.0) {
                hi = s;
                ghi = gs;
                if side == 1 {
                    glo *= 0.5;
                }
                side = 1;
            } else {
                lo = s;
                glo = gs;
                if side == -1 {
                    ghi *= 0.5;
                }
                side = -1;
            }
            if gs.abs() < 1e-15 {
                break;
            }
        }
        self.step(sys, ta, &ya, &fa, s, &mut w);
        Ok(Some((ta + s, w.y_new.clone())))
    }

    /// States at the uniformly spaced times `t0 + k (t1 - t0) / n`, `k = 0..=n`.
    pub fn sample<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64],
        t1: f64,
        n: usize,
    ) -> Result<Vec<Vec<f64>>, IntegrationError> {
        let mut out = Vec::with_capacity(n + 1);
        out.push(y0.to_vec());
        let mut y = y0.to_vec();
        let dt = (t1 - t0) / n as f64;
        for k in 0..n {
            let ta = t0 + k as f64 * dt;
            let tb = if k + 1 == n {
                t1
            } else {
                t0 + (k + 1) as f64 * dt
            };
            y = self.integrate(sys, ta, &y, tb, |_, _| {})?;
            out.push(y.clone());
        }
        Ok(out)
    }
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    let s: f64 = v.iter().zip(scale).map(|(a, b)| (a / b).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}

/// Separable Hamiltonian `T(t, p) + U(t, q)` for Stormer–Verlet.
pub trait SeparableHamiltonian {
    fn degrees(&self) -> usize;
    /// `dT/dp`.
    fn velocity(&self, t: f64, p: &[f64], out: &mut [f64]);
    /// `-dU/dq`.
    fn force(&self, t: f64, q: &[f64], out: &mut [f64]);
}

/// Kick-drift-kick leapfrog with `steps` equal steps from `t0` to `t1`.
pub fn stormer_verlet<H: SeparableHamiltonian + ?Sized>(
    ham: &H,
    t0: f64,
    q0: &[f64],
    p0: &[f64],
    t1: f64,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = ham.degrees();
    let h = (t1 - t0) / steps as f64;
    let mut q = q0.to_vec();
    let mut p = p0.to_vec();
    let mut force = vec![0.0; n];
    let mut vel = vec![0.0; n];
    ham.force(t0, &q, &mut force);
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        for i in 0..n {
            p[i] += 0.5 * h * force[i];
        }
        ham.velocity(t + 0.5 * h, &p, &mut vel);
        for i in 0..n {
            q[i] += h * vel[i];
        }
        ham.force(t + h, &q, &mut force);
        for i in 0..n {
            p[i] += 0.5 * h * force[i];
        }
    }
    (q, p)
}
