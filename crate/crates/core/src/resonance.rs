//! Double resonances along a single-resonance path and the strong/weak
//! classification of each.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::{wrap_angle, FourierError, FourierField};
use crate::normal_form::{
    cross, is_irreducible, solve_double_resonance, AffinePerturbation, Lattice,
    MomentumHamiltonian, NormalFormError,
};

/// Largest period searched when testing `K dh(p) in Z^3`.
pub const PERIOD_CAP: u32 = 10_000;
/// Points closer than this are the same double resonance.
pub const DEDUP_RADIUS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResonanceError {
    #[error("{0:?} is not an irreducible nonzero vector")]
    Reducible(Lattice),
    #[error("kmax must be at least 1")]
    EmptyBox,
    #[error("h has no interior minimum below the energy {0}")]
    EnergyTooLow(f64),
    #[error("h is not convex along the path")]
    NotConvex,
    #[error("path point at angle {theta} did not converge (residual {residual:e})")]
    PathPoint { theta: f64, residual: f64 },
    #[error("smoothness order r = {0} must be at least 4")]
    Order(u32),
    #[error("nondegeneracy {lambda} is at or below the floor {floor}; classification refused")]
    Degenerate { lambda: f64, floor: f64 },
    #[error("{0} samples requested; at least 100 are needed")]
    TooFewSamples(usize),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

fn as_f64(k: Lattice) -> Vector3<f64> {
    Vector3::new(k[0] as f64, k[1] as f64, k[2] as f64)
}

fn widen(k: Lattice) -> [i64; 3] {
    [k[0] as i64, k[1] as i64, k[2] as i64]
}

fn sup_norm(k: Lattice) -> i32 {
    k.iter().map(|v| v.abs()).max().unwrap_or(0)
}

fn is_canonical(k: Lattice) -> bool {
    k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

/// The curve `{h = E, <dh, k'> = 0}`, parameterized by the angle of its
/// projection onto the plane orthogonal to `k'`, seen from the minimum of `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonantPath {
    pub kprime: Lattice,
    pub hamiltonian: MomentumHamiltonian,
    pub energy: f64,
    center: [f64; 3],
    basis: [[f64; 3]; 2],
}

impl ResonantPath {
    pub fn new(
        hamiltonian: MomentumHamiltonian,
        kprime: Lattice,
        energy: f64,
    ) -> Result<Self, ResonanceError> {
        if !is_irreducible(kprime) {
            return Err(ResonanceError::Reducible(kprime));
        }
        let center = minimum_of(&hamiltonian)?;
        if !(hamiltonian.value(center) < energy) {
            return Err(ResonanceError::EnergyTooLow(energy));
        }
        let n = as_f64(kprime).normalize();
        let seed = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = (seed - n * n.dot(&seed)).normalize();
        let e2 = n.cross(&e1);
        Ok(Self {
            kprime,
            hamiltonian,
            energy,
            center,
            basis: [e1.into(), e2.into()],
        })
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    /// `max(|h - E|, |<dh, k'>|)`.
    pub fn residual(&self, p: [f64; 3]) -> f64 {
        let g = Vector3::from(self.hamiltonian.gradient(p));
        (self.hamiltonian.value(p) - self.energy)
            .abs()
            .max(g.dot(&as_f64(self.kprime)).abs())
    }

    fn direction(&self, theta: f64) -> Vector3<f64> {
        let (s, c) = theta.sin_cos();
        Vector3::from(self.basis[0]) * c + Vector3::from(self.basis[1]) * s
    }

    pub fn point(&self, theta: f64) -> Result<[f64; 3], ResonanceError> {
        self.point_from(theta, None)
    }

    /// Newton solve for `(s, t)` in `p = center + s u(theta) + t k'/|k'|`.
    fn point_from(&self, theta: f64, warm: Option<(f64, f64)>) -> Result<[f64; 3], ResonanceError> {
        let u = self.direction(theta);
        let k = as_f64(self.kprime);
        let n = k.normalize();
        let c = Vector3::from(self.center);
        let h = &self.hamiltonian;
        let hess = |p: Vector3<f64>| {
            let m = h.hessian(p.into());
            nalgebra::Matrix3::from_fn(|i, j| m[i][j])
        };
        let (mut s, mut t) = warm.unwrap_or_else(|| {
            let m = hess(c);
            let ku = (m * k).dot(&u);
            let kk = (m * k).dot(&n);
            // slope of the constraint surface along u
            let lean = -ku / kk;
            let w = u + n * lean;
            let curv = (m * w).dot(&w);
            let s0 = (2.0 * (self.energy - h.value(self.center)) / curv).sqrt();
            (s0, s0 * lean)
        });
        let scale = 1.0 + self.energy.abs();
        let eval = |s: f64, t: f64| {
            let p = c + u * s + n * t;
            let g = Vector3::from(h.gradient(p.into()));
            let m = hess(p);
            let r = Vector2::new(h.value(p.into()) - self.energy, g.dot(&k));
            let j = Matrix2::new(g.dot(&u), g.dot(&n), (m * k).dot(&u), (m * k).dot(&n));
            (r, j)
        };
        let (mut r, mut j) = eval(s, t);
        for _ in 0..60 {
            if r.amax() <= 1e-13 * scale {
                break;
            }
            let Some(step) = j.lu().solve(&r) else {
                break;
            };
            let mut lam = 1.0;
            let mut moved = false;
            while lam > 1e-8 {
                let (ts, tt) = (s - lam * step.x, t - lam * step.y);
                if ts > 0.0 {
                    let (rt, jt) = eval(ts, tt);
                    if rt.norm() < r.norm() {
                        (s, t, r, j) = (ts, tt, rt, jt);
                        moved = true;
                        break;
                    }
                }
                lam *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if r.amax() > 1e-11 * scale {
            return Err(ResonanceError::PathPoint {
                theta,
                residual: r.amax(),
            });
        }
        Ok((c + u * s + n * t).into())
    }

    fn coordinates(&self, p: [f64; 3]) -> (f64, f64) {
        let d = Vector3::from(p) - Vector3::from(self.center);
        let n = as_f64(self.kprime).normalize();
        let w = d - n * n.dot(&d);
        (w.norm(), n.dot(&d))
    }

    /// Angle of `p` in the parameterization.
    pub fn angle_of(&self, p: [f64; 3]) -> f64 {
        let d = Vector3::from(p) - Vector3::from(self.center);
        let a = d
            .dot(&Vector3::from(self.basis[1]))
            .atan2(d.dot(&Vector3::from(self.basis[0])));
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }

    /// `n` points at equally spaced angles in `[0, 2 pi)`, by continuation.
    pub fn sample(&self, n: usize) -> Result<Vec<(f64, [f64; 3])>, ResonanceError> {
        let mut out = Vec::with_capacity(n);
        let mut warm = None;
        for i in 0..n {
            let theta = 2.0 * PI * i as f64 / n as f64;
            let p = self.point_from(theta, warm)?;
            warm = Some(self.coordinates(p));
            out.push((theta, p));
        }
        Ok(out)
    }
}

fn minimum_of(h: &MomentumHamiltonian) -> Result<[f64; 3], ResonanceError> {
    let mut p = Vector3::zeros();
    for _ in 0..100 {
        let g = Vector3::from(h.gradient(p.into()));
        if g.amax() < 1e-14 {
            break;
        }
        let hh = h.hessian(p.into());
        let m = nalgebra::Matrix3::from_fn(|i, j| hh[i][j]);
        let Some(chol) = m.cholesky() else {
            return Err(ResonanceError::NotConvex);
        };
        let step = chol.solve(&g);
        let mut t = 1.0;
        let v0 = h.value(p.into());
        while t > 1e-10 && h.value((p - step * t).into()) > v0 {
            t *= 0.5;
        }
        p -= step * t;
    }
    let hh = h.hessian(p.into());
    let m = nalgebra::Matrix3::from_fn(|i, j| hh[i][j]);
    if m.cholesky().is_none() {
        return Err(ResonanceError::NotConvex);
    }
    Ok(p.into())
}

/// Strong or weak double resonance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Strong,
    Weak,
}

/// One double-resonant point on the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    /// Shortest second resonance vector at this point.
    pub kdoubleprime: Lattice,
    pub momentum: [f64; 3],
    pub theta: f64,
    /// Smallest `K` with `K dh(p) in Z^3`; `None` past [`PERIOD_CAP`].
    pub period: Option<u32>,
    pub lambda: Option<f64>,
    /// `d(k') |P|_{C^r} |k''|^{2-r}`.
    pub coefficient_bound: Option<f64>,
    /// `|k''|^{r-2}` minus the threshold.
    pub margin: Option<f64>,
    pub verdict: Option<Verdict>,
}

/// Result of the double-resonance search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub points: Vec<ResonanceReport>,
    /// Candidates without a crossing on the path.
    pub unsolved: Vec<Lattice>,
}

/// Smallest `K <= cap` with `K w` integral to `tol`.
pub fn resonance_period(w: [f64; 3], cap: u32, tol: f64) -> Option<u32> {
    (1..=cap).find(|&k| {
        w.iter().all(|&x| {
            let y = k as f64 * x;
            (y - y.round()).abs() <= tol * (1.0 + y.abs())
        })
    })
}

/// Candidate second resonances: irreducible, canonical sign, independent of
/// `k'`, ordered by sup norm, then Euclidean norm, then lexicographically.
pub fn candidates(kprime: Lattice, kmax: i32) -> Vec<Lattice> {
    let mut out = Vec::new();
    for a in -kmax..=kmax {
        for b in -kmax..=kmax {
            for c in -kmax..=kmax {
                let k = [a, b, c];
                if is_canonical(k) && is_irreducible(k) && cross(widen(kprime), widen(k)) != [0; 3]
                {
                    out.push(k);
                }
            }
        }
    }
    out.sort_by_key(|k| (sup_norm(*k), k.iter().map(|v| v * v).sum::<i32>(), *k));
    out
}

/// All double resonances with `|k''|_inf <= kmax`, located by sign changes
/// of `<dh, k''>` along the path and polished on the 3-equation system.
pub fn enumerate_double_resonances(
    path: &ResonantPath,
    kmax: i32,
) -> Result<Enumeration, ResonanceError> {
    if kmax < 1 {
        return Err(ResonanceError::EmptyBox);
    }
    let samples = path.sample((64 * kmax as usize).max(720))?;
    let grads: Vec<Vector3<f64>> = samples
        .iter()
        .map(|(_, p)| Vector3::from(path.hamiltonian.gradient(*p)))
        .collect();
    let mut points: Vec<ResonanceReport> = Vec::new();
    let mut unsolved = Vec::new();
    for k in candidates(path.kprime, kmax) {
        let kv = as_f64(k);
        let g: Vec<f64> = grads.iter().map(|d| d.dot(&kv)).collect();
        let n = g.len();
        let mut found = false;
        for i in 0..n {
            let j = (i + 1) % n;
            if g[i] == 0.0 || g[i].signum() != g[j].signum() {
                let t0 = samples[i].0;
                let t1 = if j == 0 { 2.0 * PI } else { samples[j].0 };
                let guess = crossing(path, kv, (t0, samples[i].1), t1, g[i], g[j])?;
                let p =
                    solve_double_resonance(&path.hamiltonian, path.kprime, k, path.energy, guess)?;
                found = true;
                let dup = points.iter().any(|q| {
                    let d = Vector3::from(q.momentum) - Vector3::from(p);
                    d.amax() <= DEDUP_RADIUS
                });
                if !dup {
                    points.push(ResonanceReport {
                        kdoubleprime: k,
                        momentum: p,
                        theta: path.angle_of(p),
                        period: resonance_period(path.hamiltonian.gradient(p), PERIOD_CAP, 1e-9),
                        lambda: None,
                        coefficient_bound: None,
                        margin: None,
                        verdict: None,
                    });
                }
            }
        }
        if !found {
            unsolved.push(k);
        }
    }
    points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    Ok(Enumeration { points, unsolved })
}

/// Regula falsi on `<dh(p(theta)), k''>` between two bracketing samples.
fn crossing(
    path: &ResonantPath,
    k: Vector3<f64>,
    (mut a, start): (f64, [f64; 3]),
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
) -> Result<[f64; 3], ResonanceError> {
    let warm = path.coordinates(start);
    let f = |t: f64| -> Result<([f64; 3], f64), ResonanceError> {
        let p = path.point_from(t, Some(warm))?;
        Ok((p, Vector3::from(path.hamiltonian.gradient(p)).dot(&k)))
    };
    let mut best = start;
    for _ in 0..40 {
        let t = if fb != fa {
            b - fb * (b - a) / (fb - fa)
        } else {
            0.5 * (a + b)
        };
        let t = t.clamp(a.min(b), a.max(b));
        let (p, ft) = f(t)?;
        best = p;
        if ft.abs() < 1e-13 || (b - a).abs() < 1e-14 {
            break;
        }
        if ft.signum() == fa.signum() {
            a = t;
            fa = ft;
            fb *= 0.5;
        } else {
            b = t;
            fb = ft;
            fa *= 0.5;
        }
    }
    Ok(best)
}

/// `Z_{k'}` and `Z_{k',k''}`: the single- and double-resonant parts of `P`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResonantTerms {
    /// Modes `j k'`, `j != 0`.
    pub single: FourierField,
    /// Nonzero modes in the plane of `k'` and `k''` off the line of `k'`.
    pub double: FourierField,
    pub mean: f64,
}

impl ResonantTerms {
    /// `mean + single + double`: the average over the two resonances.
    pub fn total(&self) -> Result<FourierField, FourierError> {
        self.single
            .plus(&self.double)?
            .plus(&FourierField::constant(3, self.mean)?)
    }
}

pub fn resonant_terms(
    p: &FourierField,
    kprime: Lattice,
    kdoubleprime: Lattice,
) -> Result<ResonantTerms, ResonanceError> {
    if !is_irreducible(kprime) {
        return Err(ResonanceError::Reducible(kprime));
    }
    let normal = cross(widen(kprime), widen(kdoubleprime));
    if normal == [0; 3] {
        return Err(NormalFormError::Dependent(kprime, kdoubleprime).into());
    }
    let single = p.filter(|l| l != [0; 3] && cross(widen(l), widen(kprime)) == [0; 3]);
    let double = p.filter(|l| {
        let w = widen(l);
        w[0] * normal[0] + w[1] * normal[1] + w[2] * normal[2] == 0
            && cross(w, widen(kprime)) != [0; 3]
    });
    Ok(ResonantTerms {
        single,
        double,
        mean: p.mean(),
    })
}

/// `V(s) = -sum_j c_j e^{i j s}`, the single-resonance potential as a
/// function of the resonant angle `s = <k', q>`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnglePotential {
    terms: Vec<(i32, Complex64)>,
}

/// A critical point of an [`AnglePotential`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleMinimum {
    pub angle: f64,
    pub value: f64,
    pub curvature: f64,
}

impl AnglePotential {
    pub fn value(&self, s: f64) -> f64 {
        self.jet(s).0
    }

    /// Value, first and second derivative.
    pub fn jet(&self, s: f64) -> (f64, f64, f64) {
        let (mut v, mut d, mut dd) = (0.0, 0.0, 0.0);
        for &(j, c) in &self.terms {
            let e = Complex64::from_polar(1.0, j as f64 * s) * c;
            let jf = j as f64;
            v -= e.re;
            d -= (e * Complex64::new(0.0, jf)).re;
            dd += jf * jf * e.re;
        }
        (v, d, dd)
    }

    /// Newton on `V'` from `s`.
    pub fn polish(&self, mut s: f64) -> f64 {
        for _ in 0..50 {
            let (_, d, dd) = self.jet(s);
            if dd.abs() < 1e-300 {
                break;
            }
            let step = (d / dd).clamp(-0.5, 0.5);
            s -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        wrap_angle(s)
    }

    fn critical(&self, s: f64) -> AngleMinimum {
        let (value, _, curvature) = self.jet(s);
        AngleMinimum {
            angle: s,
            value,
            curvature,
        }
    }

    /// Local minima found from a uniform grid, lowest first.
    pub fn local_minima(&self, grid: usize) -> Vec<AngleMinimum> {
        let vals: Vec<f64> = (0..grid)
            .map(|i| self.value(2.0 * PI * i as f64 / grid as f64))
            .collect();
        let mut out: Vec<AngleMinimum> = Vec::new();
        for i in 0..grid {
            let l = vals[(i + grid - 1) % grid];
            let r = vals[(i + 1) % grid];
            if vals[i] <= l && vals[i] <= r {
                let m = self.critical(self.polish(2.0 * PI * i as f64 / grid as f64));
                if !out
                    .iter()
                    .any(|o| wrap_angle(o.angle - m.angle).abs() < 1e-7)
                {
                    out.push(m);
                }
            }
        }
        out.sort_by(|a, b| a.value.total_cmp(&b.value));
        out
    }

    pub fn global_minimum(&self) -> AngleMinimum {
        let grid = 64
            * (1 + self
                .terms
                .iter()
                .map(|t| t.0.unsigned_abs() as usize)
                .max()
                .unwrap_or(0));
        self.local_minima(grid)
            .into_iter()
            .next()
            .unwrap_or(AngleMinimum {
                angle: 0.0,
                value: 0.0,
                curvature: 0.0,
            })
    }
}

/// The `p`-dependent single-resonant term `Z_{k'}(p, s)` of an affine perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleResonance {
    pub kprime: Lattice,
    /// `(j, c_j(0), dc_j/dp)` for every mode `j k'` of the perturbation.
    terms: Vec<(i32, Complex64, [Complex64; 3])>,
}

impl SingleResonance {
    pub fn new(pert: &AffinePerturbation, kprime: Lattice) -> Result<Self, ResonanceError> {
        if !is_irreducible(kprime) {
            return Err(ResonanceError::Reducible(kprime));
        }
        let bound = [
            &pert.base,
            &pert.slopes[0],
            &pert.slopes[1],
            &pert.slopes[2],
        ]
        .iter()
        .map(|f| f.max_index())
        .max()
        .unwrap_or(0);
        let kinf = sup_norm(kprime);
        let jmax = if kinf == 0 { 0 } else { bound / kinf };
        let mut terms = Vec::new();
        for j in -jmax..=jmax {
            if j == 0 {
                continue;
            }
            let l = [j * kprime[0], j * kprime[1], j * kprime[2]];
            let c = pert.base.coefficient(l);
            let d = [
                pert.slopes[0].coefficient(l),
                pert.slopes[1].coefficient(l),
                pert.slopes[2].coefficient(l),
            ];
            if c != Complex64::new(0.0, 0.0) || d.iter().any(|v| v.norm() > 0.0) {
                terms.push((j, c, d));
            }
        }
        Ok(Self { kprime, terms })
    }

    /// The effective potential `-Z_{k'}(p, .)`.
    pub fn potential(&self, p: [f64; 3]) -> AnglePotential {
        AnglePotential {
            terms: self
                .terms
                .iter()
                .map(|&(j, c, d)| (j, c + d[0] * p[0] + d[1] * p[1] + d[2] * p[2]))
                .collect(),
        }
    }

    /// Curvature of the effective potential at its global minimum.
    pub fn nondegeneracy(&self, p: [f64; 3]) -> f64 {
        self.potential(p).global_minimum().curvature
    }
}

/// Strong/weak thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    /// Smoothness order `r`.
    pub order: u32,
    /// `d1(lambda) = c0 lambda`.
    pub c0: f64,
    pub lambda_floor: f64,
}

impl Default for Classifier {
    fn default() -> Self {
        Self {
            order: 6,
            c0: 0.25,
            lambda_floor: 1e-8,
        }
    }
}

/// `zeta(s)` for `s >= 2` by direct summation with an Euler-Maclaurin tail.
pub fn zeta(s: f64) -> f64 {
    // Euler-Maclaurin after 15 terms; B_2 .. B_10 corrections
    const BERNOULLI: [f64; 5] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let n = 16.0f64;
    let mut sum: f64 = (1..16).rev().map(|k| (k as f64).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut rising = s;
    let mut factorial = 2.0;
    let mut power = n.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b / factorial * rising * power;
        let m = 2.0 * j as f64 + 2.0;
        rising *= (s + m - 1.0) * (s + m);
        factorial *= (m + 1.0) * (m + 2.0);
        power /= n * n;
    }
    sum
}

impl Classifier {
    /// `d(k') = sum_{j != 0} |j k'|^{2-r}` with the sup norm, for
    /// coefficients normalized by the torus volume.
    pub fn tail_constant(&self, kprime: Lattice) -> Result<f64, ResonanceError> {
        if self.order < 4 {
            return Err(ResonanceError::Order(self.order));
        }
        let e = (self.order - 2) as f64;
        Ok(2.0 * zeta(e) / (sup_norm(kprime) as f64).powf(e))
    }

    /// `d(k') |P|_{C^r} / d1(lambda)`: `|k''|^{r-2}` at or above it is weak.
    pub fn threshold(
        &self,
        kprime: Lattice,
        p_norm: f64,
        lambda: f64,
    ) -> Result<f64, ResonanceError> {
        if !(lambda > self.lambda_floor) {
            return Err(ResonanceError::Degenerate {
                lambda,
                floor: self.lambda_floor,
            });
        }
        Ok(self.tail_constant(kprime)? * p_norm / (self.c0 * lambda))
    }

    /// Verdict for a second resonance of sup norm `knorm`.
    pub fn verdict(
        &self,
        kprime: Lattice,
        knorm: f64,
        p_norm: f64,
        lambda: f64,
    ) -> Result<Verdict, ResonanceError> {
        let t = self.threshold(kprime, p_norm, lambda)?;
        Ok(if knorm.powi(self.order as i32 - 2) >= t {
            Verdict::Weak
        } else {
            Verdict::Strong
        })
    }

    /// Fills in the bound, margin and verdict of `report`.
    pub fn classify(
        &self,
        kprime: Lattice,
        report: &mut ResonanceReport,
        p_norm: f64,
        lambda: f64,
    ) -> Result<Verdict, ResonanceError> {
        let knorm = sup_norm(report.kdoubleprime) as f64;
        let t = self.threshold(kprime, p_norm, lambda)?;
        let power = knorm.powi(self.order as i32 - 2);
        let v = self.verdict(kprime, knorm, p_norm, lambda)?;
        report.lambda = Some(lambda);
        report.coefficient_bound = Some(self.tail_constant(kprime)? * p_norm / power);
        report.margin = Some(power - t);
        report.verdict = Some(v);
        Ok(v)
    }
}

/// One sample of the nondegeneracy scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub theta: f64,
    pub momentum: [f64; 3],
    pub minimizer: f64,
    pub lambda: f64,
}

/// A point where two minima of the effective potential have equal depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bifurcation {
    pub theta: f64,
    pub momentum: [f64; 3],
    pub minimizers: [f64; 2],
    pub gap: f64,
    /// Distance to the nearest strong double resonance, if any were given.
    pub strong_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegScan {
    pub samples: Vec<ScanSample>,
    pub min_lambda: f64,
    pub argmin: [f64; 3],
    pub bifurcations: Vec<Bifurcation>,
    /// A bifurcation lies within 1e-4 of a strong double resonance.
    pub strong_coincidence: bool,
}

/// Curvature of the effective potential along the path and the points where
/// its global minimizer jumps.
pub fn nondeg_scan(
    single: &SingleResonance,
    path: &ResonantPath,
    samples: usize,
    strong: &[[f64; 3]],
) -> Result<NondegScan, ResonanceError> {
    if samples < 100 {
        return Err(ResonanceError::TooFewSamples(samples));
    }
    let pts = path.sample(samples)?;
    let mut out: Vec<ScanSample> = Vec::with_capacity(samples);
    for &(theta, p) in &pts {
        let m = single.potential(p).global_minimum();
        out.push(ScanSample {
            theta,
            momentum: p,
            minimizer: m.angle,
            lambda: m.curvature,
        });
    }
    let mut bifurcations = Vec::new();
    for i in 0..samples {
        let j = (i + 1) % samples;
        let (a, b) = (out[i], out[j]);
        let carried = single.potential(b.momentum).polish(a.minimizer);
        if wrap_angle(carried - b.minimizer).abs() < 1e-6 {
            continue;
        }
        let t1 = if j == 0 { 2.0 * PI } else { b.theta };
        let gap_at = |t: f64| -> Result<(f64, [f64; 3], [f64; 2]), ResonanceError> {
            let p = path.point(t)?;
            let v = single.potential(p);
            let sa = v.polish(a.minimizer);
            let sb = v.polish(b.minimizer);
            Ok((v.value(sa) - v.value(sb), p, [sa, sb]))
        };
        let (mut lo, mut hi) = (a.theta, t1);
        let mut cur = gap_at(lo)?;
        let f_lo = cur.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            cur = gap_at(mid)?;
            if cur.0 == 0.0 || hi - lo < 1e-15 {
                lo = mid;
                break;
            }
            if cur.0.signum() == f_lo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if cur.0.abs() <= 1e-6 {
            let strong_distance = strong
                .iter()
                .map(|s| (Vector3::from(*s) - Vector3::from(cur.1)).norm())
                .reduce(f64::min);
            bifurcations.push(Bifurcation {
                theta: lo,
                momentum: cur.1,
                minimizers: cur.2,
                gap: cur.0.abs(),
                strong_distance,
            });
        }
    }
    let (min_lambda, argmin) =
        out.iter()
            .map(|s| (s.lambda, s.momentum))
            .fold(
                (f64::INFINITY, [0.0; 3]),
                |acc, x| if x.0 < acc.0 { x } else { acc },
            );
    let strong_coincidence = bifurcations
        .iter()
        .any(|b| b.strong_distance.is_some_and(|d| d <= 1e-4));
    Ok(NondegScan {
        samples: out,
        min_lambda,
        argmin,
        bifurcations,
        strong_coincidence,
    })
}
