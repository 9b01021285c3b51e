//! Real trigonometric polynomials on the 2- and 3-torus.
//!
//! A field stores complex coefficients `c_l` for `f(x) = sum_l c_l exp(i<l,x>)`
//! and keeps `c_{-l} = conj(c_l)` at all times, so every field is real valued.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use num_complex::Complex64;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Integer mode index; unused trailing components are zero.
pub type ModeIndex = [i32; 3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FourierError {
    #[error("unsupported torus dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),
    #[error("mode {index:?} has nonzero components beyond dimension {dim}")]
    IndexOutOfDimension { index: ModeIndex, dim: usize },
    #[error("constant mode must be real, got imaginary part {0}")]
    ComplexConstant(f64),
    #[error("mode pair {0:?} listed more than once")]
    DuplicatePair(ModeIndex),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operation needs a field of dimension {expected}, got {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("small divisor <l, omega> = {divisor:e} for mode {index:?}")]
    SmallDivisor { index: ModeIndex, divisor: f64 },
    #[error("coefficient for mode {0:?} is not finite")]
    NonFinite(ModeIndex),
}

/// Value and derivatives up to third order at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
    pub third: [[[f64; 3]; 3]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    index: [f64; 3],
    re: f64,
    im: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    dim: usize,
    coeffs: BTreeMap<ModeIndex, Complex64>,
    // One representative per +-l pair, with the factor 2 folded in.
    terms: Vec<Term>,
    constant: f64,
}

fn negate(l: ModeIndex) -> ModeIndex {
    [-l[0], -l[1], -l[2]]
}

/// True if `l` is the representative of its pair: first nonzero entry positive.
pub fn is_canonical(l: ModeIndex) -> bool {
    for v in l {
        if v != 0 {
            return v > 0;
        }
    }
    true
}

fn canonical(l: ModeIndex) -> ModeIndex {
    if is_canonical(l) {
        l
    } else {
        negate(l)
    }
}

fn norm2(l: ModeIndex) -> f64 {
    let s: f64 = l.iter().map(|&v| (v as f64) * (v as f64)).sum();
    s.sqrt()
}

fn check_dim(dim: usize) -> Result<(), FourierError> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(FourierError::UnsupportedDimension(dim))
    }
}

fn check_index(dim: usize, l: ModeIndex) -> Result<(), FourierError> {
    if l[dim..].iter().any(|&v| v != 0) {
        Err(FourierError::IndexOutOfDimension { index: l, dim })
    } else {
        Ok(())
    }
}

impl FourierField {
    pub fn zero(dim: usize) -> Result<Self, FourierError> {
        check_dim(dim)?;
        Ok(Self::from_map(dim, BTreeMap::new()))
    }

    /// Builds a field from one coefficient per pair. `(l, c)` contributes
    /// `c e^{i<l,x>} + conj(c) e^{-i<l,x>}`; for `l = 0` it contributes `c`.
    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self, FourierError>
    where
        I: IntoIterator<Item = (ModeIndex, Complex64)>,
    {
        check_dim(dim)?;
        let mut coeffs = BTreeMap::new();
        let mut seen = BTreeMap::new();
        for (l, c) in pairs {
            check_index(dim, l)?;
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(FourierError::NonFinite(l));
            }
            let key = canonical(l);
            if seen.insert(key, ()).is_some() {
                return Err(FourierError::DuplicatePair(key));
            }
            if l == [0; 3] {
                if c.im != 0.0 {
                    return Err(FourierError::ComplexConstant(c.im));
                }
                coeffs.insert(l, c);
            } else {
                coeffs.insert(l, c);
                coeffs.insert(negate(l), c.conj());
            }
        }
        Ok(Self::from_map(dim, coeffs))
    }

    /// `amp * cos<l,x>`.
    pub fn cosine(dim: usize, l: ModeIndex, amp: f64) -> Result<Self, FourierError> {
        if l == [0; 3] {
            return Self::from_pairs(dim, [(l, Complex64::new(amp, 0.0))]);
        }
        Self::from_pairs(dim, [(l, Complex64::new(amp / 2.0, 0.0))])
    }

    /// `amp * sin<l,x>`.
    pub fn sine(dim: usize, l: ModeIndex, amp: f64) -> Result<Self, FourierError> {
        if l == [0; 3] {
            return Self::zero(dim);
        }
        Self::from_pairs(dim, [(l, Complex64::new(0.0, -amp / 2.0))])
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self, FourierError> {
        Self::cosine(dim, [0; 3], value)
    }

    /// Random field with `n_pairs` distinct nonconstant pairs, indices bounded
    /// by `max_index` in each component and coefficient moduli at most `amp`.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        n_pairs: usize,
        max_index: i32,
        amp: f64,
        rng: &mut R,
    ) -> Result<Self, FourierError> {
        check_dim(dim)?;
        let mut pairs: BTreeMap<ModeIndex, Complex64> = BTreeMap::new();
        let available = ((2 * max_index + 1).pow(dim as u32) - 1) / 2;
        let target = n_pairs.min(available as usize);
        while pairs.len() < target {
            let mut l = [0i32; 3];
            for v in l.iter_mut().take(dim) {
                *v = rng.gen_range(-max_index..=max_index);
            }
            if l == [0; 3] {
                continue;
            }
            let key = canonical(l);
            if pairs.contains_key(&key) {
                continue;
            }
            let r = amp * rng.gen_range(0.1..1.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            pairs.insert(key, Complex64::from_polar(r, phase));
        }
        Self::from_pairs(dim, pairs)
    }

    fn from_map(dim: usize, mut coeffs: BTreeMap<ModeIndex, Complex64>) -> Self {
        coeffs.retain(|_, c| c.re != 0.0 || c.im != 0.0);
        let mut terms = Vec::new();
        let mut constant = 0.0;
        for (l, c) in &coeffs {
            if *l == [0; 3] {
                constant = c.re;
            } else if is_canonical(*l) {
                terms.push(Term {
                    index: [l[0] as f64, l[1] as f64, l[2] as f64],
                    re: 2.0 * c.re,
                    im: 2.0 * c.im,
                });
            }
        }
        Self {
            dim,
            coeffs,
            terms,
            constant,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficient(&self, l: ModeIndex) -> Complex64 {
        self.coeffs.get(&l).copied().unwrap_or_default()
    }

    /// All stored modes, both members of each pair, in index order.
    pub fn modes(&self) -> impl Iterator<Item = (ModeIndex, Complex64)> + '_ {
        self.coeffs.iter().map(|(l, c)| (*l, *c))
    }

    /// One representative per pair, in index order.
    pub fn pairs(&self) -> impl Iterator<Item = (ModeIndex, Complex64)> + '_ {
        self.modes().filter(|(l, _)| is_canonical(*l))
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn max_index(&self) -> i32 {
        self.coeffs
            .keys()
            .flat_map(|l| l.iter().map(|v| v.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn mean(&self) -> f64 {
        self.constant
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for t in &self.terms {
            let th = self.phase(t, x);
            let (s, c) = th.sin_cos();
            v += t.re * c - t.im * s;
        }
        v
    }

    fn phase(&self, t: &Term, x: &[f64]) -> f64 {
        let mut th = 0.0;
        for j in 0..self.dim {
            th += t.index[j] * x[j];
        }
        th
    }

    /// Value, gradient and Hessian.
    pub fn jet2(&self, x: &[f64]) -> Jet {
        let mut jet = Jet {
            value: self.constant,
            ..Jet::default()
        };
        let n = self.dim;
        for t in &self.terms {
            let (s, c) = self.phase(t, x).sin_cos();
            let re = t.re * c - t.im * s;
            let im = t.re * s + t.im * c;
            jet.value += re;
            for a in 0..n {
                jet.grad[a] -= t.index[a] * im;
                for b in 0..n {
                    jet.hess[a][b] -= t.index[a] * t.index[b] * re;
                }
            }
        }
        jet
    }

    /// Value and all derivatives up to order three.
    pub fn jet3(&self, x: &[f64]) -> Jet {
        let mut jet = self.jet2(x);
        let n = self.dim;
        for t in &self.terms {
            let (s, c) = self.phase(t, x).sin_cos();
            let im = t.re * s + t.im * c;
            for a in 0..n {
                for b in 0..n {
                    for d in 0..n {
                        jet.third[a][b][d] += t.index[a] * t.index[b] * t.index[d] * im;
                    }
                }
            }
        }
        jet
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for t in &self.terms {
            let (s, c) = self.phase(t, x).sin_cos();
            let im = t.re * s + t.im * c;
            for a in 0..self.dim {
                g[a] -= t.index[a] * im;
            }
        }
        g
    }

    /// Partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Result<Self, FourierError> {
        if axis >= self.dim {
            return Err(FourierError::WrongDimension {
                expected: axis + 1,
                got: self.dim,
            });
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(l, c)| (*l, *c * Complex64::new(0.0, l[axis] as f64)))
            .collect();
        Ok(Self::from_map(self.dim, coeffs))
    }

    pub fn scaled(&self, a: f64) -> Self {
        let coeffs = self.coeffs.iter().map(|(l, c)| (*l, *c * a)).collect();
        Self::from_map(self.dim, coeffs)
    }

    pub fn plus(&self, other: &Self) -> Result<Self, FourierError> {
        self.combine(other, 1.0)
    }

    pub fn minus(&self, other: &Self) -> Result<Self, FourierError> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self, FourierError> {
        if self.dim != other.dim {
            return Err(FourierError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let mut coeffs = self.coeffs.clone();
        for (l, c) in &other.coeffs {
            *coeffs.entry(*l).or_default() += *c * sign;
        }
        Ok(Self::from_map(self.dim, coeffs))
    }

    /// Keeps the modes accepted by `keep`.
    pub fn filter<F: Fn(ModeIndex) -> bool>(&self, keep: F) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(l, _)| keep(**l))
            .map(|(l, c)| (*l, *c))
            .collect();
        Self::from_map(self.dim, coeffs)
    }

    /// `sum |c_l| (1 + |l|)^r`, an upper bound for the `C^r` norm.
    pub fn cr_norm_bound(&self, r: u32) -> f64 {
        self.coeffs
            .iter()
            .map(|(l, c)| c.norm() * (1.0 + norm2(*l)).powi(r as i32))
            .sum()
    }

    /// `sum |c_l| |l|^k`, bounding the operator norm of the `k`-th derivative.
    pub fn derivative_majorant(&self, k: u32) -> f64 {
        self.coeffs
            .iter()
            .map(|(l, c)| c.norm() * norm2(*l).powi(k as i32))
            .sum()
    }

    /// Largest coefficient modulus difference against `other` (same dimension).
    pub fn max_coeff_distance(&self, other: &Self) -> f64 {
        let mut keys: Vec<ModeIndex> = self.coeffs.keys().copied().collect();
        keys.extend(other.coeffs.keys().copied());
        keys.iter()
            .map(|l| (self.coefficient(*l) - other.coefficient(*l)).norm())
            .fold(0.0, f64::max)
    }

    /// Average over the fast angle: keeps exactly the modes with `l_3 = 0`.
    pub fn resonant_average(&self) -> Result<Self, FourierError> {
        self.require_dim(3)?;
        Ok(self.filter(|l| l[2] == 0))
    }

    /// Reinterprets a 3-torus field without `l_3` dependence as a 2-torus field.
    pub fn restrict_to_plane(&self) -> Result<Self, FourierError> {
        self.require_dim(3)?;
        if let Some(l) = self.coeffs.keys().find(|l| l[2] != 0) {
            return Err(FourierError::IndexOutOfDimension { index: *l, dim: 2 });
        }
        Ok(Self::from_map(2, self.coeffs.clone()))
    }

    /// Embeds a 2-torus field into the 3-torus.
    pub fn lift_to_space(&self) -> Result<Self, FourierError> {
        self.require_dim(2)?;
        Ok(Self::from_map(3, self.coeffs.clone()))
    }

    /// Average over the first angle: keeps modes with `l_1 = 0`.
    pub fn line_average(&self) -> Result<LineAverage, FourierError> {
        self.require_dim(2)?;
        Ok(LineAverage {
            field: self.filter(|l| l[0] == 0),
        })
    }

    /// Solves `<omega, dF/dq> + P - Z = 0` with `Z` the resonant average of `P`:
    /// `F_l = i P_l / <l, omega>` for every mode with `l_3 != 0`.
    pub fn solve_homological(&self, omega: [f64; 3]) -> Result<Self, FourierError> {
        self.require_dim(3)?;
        let mut coeffs = BTreeMap::new();
        let scale = omega.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        for (l, c) in &self.coeffs {
            if l[2] == 0 {
                continue;
            }
            let div: f64 = (0..3).map(|j| l[j] as f64 * omega[j]).sum();
            if div.abs() <= 1e-12 * scale.max(1.0) {
                return Err(FourierError::SmallDivisor {
                    index: *l,
                    divisor: div,
                });
            }
            coeffs.insert(*l, Complex64::new(0.0, 1.0) * *c / div);
        }
        Ok(Self::from_map(3, coeffs))
    }

    /// Residual `<omega, dF/dq> + P - Z` as a field.
    pub fn homological_residual(p: &Self, f: &Self, omega: [f64; 3]) -> Result<Self, FourierError> {
        let z = p.resonant_average()?;
        let mut coeffs: BTreeMap<ModeIndex, Complex64> = BTreeMap::new();
        for (l, c) in &f.coeffs {
            let div: f64 = (0..3).map(|j| l[j] as f64 * omega[j]).sum();
            coeffs.insert(*l, Complex64::new(0.0, div) * *c);
        }
        let drift = Self::from_map(3, coeffs);
        drift.plus(p)?.minus(&z)
    }

    /// Change of angle coordinates: each mode `l` moves to `m l` (integer matrix).
    pub fn remap_modes(&self, m: &[[i32; 3]; 3]) -> Result<Self, FourierError> {
        let mut coeffs: BTreeMap<ModeIndex, Complex64> = BTreeMap::new();
        for (l, c) in &self.coeffs {
            let mut k = [0i32; 3];
            for (i, ki) in k.iter_mut().enumerate() {
                *ki = (0..3).map(|j| m[i][j] * l[j]).sum();
            }
            check_index(self.dim, k)?;
            *coeffs.entry(k).or_default() += *c;
        }
        Ok(Self::from_map(self.dim, coeffs))
    }

    fn require_dim(&self, dim: usize) -> Result<(), FourierError> {
        if self.dim != dim {
            Err(FourierError::WrongDimension {
                expected: dim,
                got: self.dim,
            })
        } else {
            Ok(())
        }
    }

    /// Global minimum on the 2-torus: grid scan followed by Newton polishing.
    pub fn minimize_on_torus(&self, grid: usize) -> Result<TorusMinimum, FourierError> {
        self.require_dim(2)?;
        let step = 2.0 * PI / grid as f64;
        let mut best: Vec<(f64, [f64; 2])> = Vec::new();
        for i in 0..grid {
            for j in 0..grid {
                let x = [i as f64 * step - PI, j as f64 * step - PI];
                best.push((self.eval(&x), x));
            }
        }
        best.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut result: Option<TorusMinimum> = None;
        for (_, x0) in best.iter().take(8) {
            let x = self.polish_critical(*x0);
            let v = self.eval(&x);
            let jet = self.jet2(&x);
            let better = result.as_ref().is_none_or(|r| v < r.value);
            if better {
                result = Some(TorusMinimum {
                    point: x,
                    value: v,
                    hessian: [
                        [jet.hess[0][0], jet.hess[0][1]],
                        [jet.hess[1][0], jet.hess[1][1]],
                    ],
                    gradient: [jet.grad[0], jet.grad[1]],
                });
            }
        }
        Ok(result.unwrap_or(TorusMinimum {
            point: [0.0; 2],
            value: self.constant,
            hessian: [[0.0; 2]; 2],
            gradient: [0.0; 2],
        }))
    }

    /// Distinct local minima found from a `grid x grid` scan, polished by
    /// Newton and sorted by value.
    pub fn local_minima(&self, grid: usize) -> Result<Vec<TorusMinimum>, FourierError> {
        self.require_dim(2)?;
        let step = 2.0 * PI / grid as f64;
        let at = |i: usize, j: usize| {
            self.eval(&[(i % grid) as f64 * step - PI, (j % grid) as f64 * step - PI])
        };
        let mut out: Vec<TorusMinimum> = Vec::new();
        for i in 0..grid {
            for j in 0..grid {
                let v = at(i, j);
                let is_min = [
                    (1, 0),
                    (grid - 1, 0),
                    (0, 1),
                    (0, grid - 1),
                    (1, 1),
                    (grid - 1, grid - 1),
                    (1, grid - 1),
                    (grid - 1, 1),
                ]
                .iter()
                .all(|&(di, dj)| v <= at(i + di, j + dj));
                if !is_min {
                    continue;
                }
                let x = self.polish_critical([i as f64 * step - PI, j as f64 * step - PI]);
                let jet = self.jet2(&x);
                let dup = out.iter().any(|m| {
                    wrap_angle(m.point[0] - x[0]).abs() < 1e-6
                        && wrap_angle(m.point[1] - x[1]).abs() < 1e-6
                });
                if dup || jet.grad[0].abs().max(jet.grad[1].abs()) > 1e-8 {
                    continue;
                }
                out.push(TorusMinimum {
                    point: x,
                    value: jet.value,
                    hessian: [
                        [jet.hess[0][0], jet.hess[0][1]],
                        [jet.hess[1][0], jet.hess[1][1]],
                    ],
                    gradient: [jet.grad[0], jet.grad[1]],
                });
            }
        }
        out.sort_by(|a, b| a.value.total_cmp(&b.value));
        Ok(out)
    }

    pub(crate) fn polish_critical(&self, mut x: [f64; 2]) -> [f64; 2] {
        for _ in 0..50 {
            let j = self.jet2(&x);
            let (a, b, c) = (j.hess[0][0], j.hess[0][1], j.hess[1][1]);
            let det = a * c - b * b;
            if det <= 0.0 || a <= 0.0 {
                break;
            }
            let dx = (c * j.grad[0] - b * j.grad[1]) / det;
            let dy = (a * j.grad[1] - b * j.grad[0]) / det;
            x[0] -= dx;
            x[1] -= dy;
            if dx.abs().max(dy.abs()) < 1e-15 {
                break;
            }
        }
        [wrap_angle(x[0]), wrap_angle(x[1])]
    }
}

/// Result of [`FourierField::minimize_on_torus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusMinimum {
    pub point: [f64; 2],
    pub value: f64,
    pub hessian: [[f64; 2]; 2],
    pub gradient: [f64; 2],
}

/// Maps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Average of a 2-torus field over the first angle, as a function of the second.
#[derive(Debug, Clone, PartialEq)]
pub struct LineAverage {
    field: FourierField,
}

/// Minimum structure of a [`LineAverage`].
#[derive(Debug, Clone, PartialEq)]
pub struct LineMinimum {
    pub minimizer: f64,
    pub value: f64,
    pub curvature: f64,
    /// Local minima whose value is within tolerance of the global minimum.
    pub global_minimizers: usize,
    /// Unique global minimum with curvature above the threshold.
    pub admissible: bool,
}

impl LineAverage {
    pub fn field(&self) -> &FourierField {
        &self.field
    }

    pub fn eval(&self, x2: f64) -> f64 {
        self.field.eval(&[0.0, x2])
    }

    fn derivs(&self, x2: f64) -> (f64, f64, f64) {
        let j = self.field.jet2(&[0.0, x2]);
        (j.value, j.grad[1], j.hess[1][1])
    }

    /// Finds all local minima on a grid, polishes them and tests uniqueness
    /// and nondegeneracy of the global one.
    pub fn analyze(&self, curvature_threshold: f64) -> LineMinimum {
        let n = 1024;
        let step = 2.0 * PI / n as f64;
        let vals: Vec<f64> = (0..n).map(|i| self.eval(i as f64 * step - PI)).collect();
        let spread = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut minima: Vec<(f64, f64, f64)> = Vec::new();
        for i in 0..n {
            let prev = vals[(i + n - 1) % n];
            let next = vals[(i + 1) % n];
            if vals[i] <= prev && vals[i] < next {
                let mut x = i as f64 * step - PI;
                for _ in 0..60 {
                    let (_, d1, d2) = self.derivs(x);
                    if d2 <= 0.0 {
                        break;
                    }
                    let dx = d1 / d2;
                    x -= dx.clamp(-step, step);
                    if dx.abs() < 1e-15 {
                        break;
                    }
                }
                let (v, _, d2) = self.derivs(x);
                minima.push((wrap_angle(x), v, d2));
            }
        }
        if minima.is_empty() {
            // Constant function: every point is a minimizer.
            return LineMinimum {
                minimizer: 0.0,
                value: vals[0],
                curvature: 0.0,
                global_minimizers: usize::MAX,
                admissible: false,
            };
        }
        minima.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = minima[0];
        let tol = 1e-9 * spread;
        let mut distinct: Vec<f64> = Vec::new();
        for m in minima.iter().filter(|m| m.1 - best.1 <= tol) {
            if !distinct.iter().any(|x| wrap_angle(x - m.0).abs() < 1e-6) {
                distinct.push(m.0);
            }
        }
        LineMinimum {
            minimizer: best.0,
            value: best.1,
            curvature: best.2,
            global_minimizers: distinct.len(),
            admissible: distinct.len() == 1 && best.2 > curvature_threshold,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireMode {
    l: Vec<i32>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireField {
    dim: usize,
    modes: Vec<WireMode>,
}

impl Serialize for FourierField {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let modes = self
            .pairs()
            .map(|(l, c)| WireMode {
                l: l[..self.dim].to_vec(),
                re: c.re,
                im: c.im,
            })
            .collect();
        WireField {
            dim: self.dim,
            modes,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FourierField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = WireField::deserialize(deserializer)?;
        let mut pairs = Vec::with_capacity(wire.modes.len());
        for m in wire.modes {
            if m.l.len() != wire.dim {
                return Err(D::Error::custom(alloc::format!(
                    "mode index {:?} has length {}, expected {}",
                    m.l,
                    m.l.len(),
                    wire.dim
                )));
            }
            let mut l = [0i32; 3];
            l[..m.l.len()].copy_from_slice(&m.l);
            pairs.push((l, Complex64::new(m.re, m.im)));
        }
        FourierField::from_pairs(wire.dim, pairs).map_err(D::Error::custom)
    }
}
