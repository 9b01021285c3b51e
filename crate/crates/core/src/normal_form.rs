//! Reduction near a double resonance: unimodular lattice completion,
//! homogenization around the resonant point, the implicit energy reduction
//! to a time-periodic two degree of freedom system, and the local charts
//! along the resonant path.

#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::fourier::{FourierError, FourierField};
use crate::system::{KineticMatrix, MechanicalSystem, Remainder, SystemError};

/// Integer frequency vector.
pub type Lattice = [i32; 3];

type Tensor3 = [[[f64; 3]; 3]; 3];
type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

/// Smoothness order of the majorants in the remainder report.
pub const REMAINDER_ORDER: u32 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NormalFormError {
    #[error("{0:?} is not irreducible")]
    Reducible(Lattice),
    #[error("{0:?} and {1:?} are linearly dependent")]
    Dependent(Lattice, Lattice),
    #[error(
        "no completion with determinant 1: the cross product {normal:?} has content {content}"
    )]
    NoUnimodularCompletion { normal: [i64; 3], content: i64 },
    #[error("the Hessian of h at the double resonance is not positive definite")]
    NotConvex,
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("Newton iteration for {what} stopped at residual {residual:e}")]
    NoConvergence { what: &'static str, residual: f64 },
    #[error("energy reduction is not solvable here: dG/dI = {0} < 1/2")]
    NotSolvable(f64),
    #[error("the fast frequency vanishes at the double resonance")]
    ZeroFrequency,
    #[error("chart {index} leaves the double-resonance disk: offset {offset} > radius {radius}")]
    OutsideDisk {
        index: i64,
        offset: f64,
        radius: f64,
    },
    #[error("monomial of degree {0}; degrees 1 to 4 are supported")]
    Degree(u32),
    #[error("point is not doubly resonant (residual {0:e})")]
    NotResonant(f64),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    System(#[from] SystemError),
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(g, s, t)` with `s a + t b = g = gcd(a, b) >= 0`.
fn extended_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i64, 0i64);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

pub fn content(k: &[i64; 3]) -> i64 {
    gcd(gcd(k[0], k[1]), k[2])
}

pub fn is_irreducible(k: Lattice) -> bool {
    content(&widen(k)) == 1
}

fn widen(k: Lattice) -> [i64; 3] {
    [k[0] as i64, k[1] as i64, k[2] as i64]
}

pub fn cross(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot_i(a: [i64; 3], b: [i64; 3]) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm_sq_i(a: [i64; 3]) -> i64 {
    dot_i(a, a)
}

/// Integer determinant of the matrix with the given columns.
pub fn determinant(c0: Lattice, c1: Lattice, c2: Lattice) -> i64 {
    dot_i(widen(c2), cross(widen(c0), widen(c1)))
}

/// Unimodular frame with columns `(k'', k', k3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonanceFrame {
    pub kprime: Lattice,
    pub kdoubleprime: Lattice,
    pub k3: Lattice,
}

impl ResonanceFrame {
    /// Completes `(k'', k')` to a unimodular frame with the shortest possible
    /// third column, ties broken lexicographically.
    pub fn complete(kprime: Lattice, kdoubleprime: Lattice) -> Result<Self, NormalFormError> {
        for k in [kprime, kdoubleprime] {
            if !is_irreducible(k) {
                return Err(NormalFormError::Reducible(k));
            }
        }
        let b1 = widen(kdoubleprime);
        let b2 = widen(kprime);
        let normal = cross(b1, b2);
        if normal == [0; 3] {
            return Err(NormalFormError::Dependent(kprime, kdoubleprime));
        }
        let c = content(&normal);
        if c != 1 {
            return Err(NormalFormError::NoUnimodularCompletion { normal, content: c });
        }
        // Particular solution of <k3, normal> = 1.
        let (g01, s, t) = extended_gcd(normal[0], normal[1]);
        let (_, u, w) = extended_gcd(g01, normal[2]);
        let base = [u * s, u * t, w];
        debug_assert_eq!(dot_i(base, normal), 1);
        // Solutions form base + span_Z(k'', k'); pick the shortest.
        let (r1, r2) = gauss_reduce(b1, b2);
        let best = closest_in_plane(base, r1, r2);
        let k3 = [best[0] as i32, best[1] as i32, best[2] as i32];
        Ok(Self {
            kprime,
            kdoubleprime,
            k3,
        })
    }

    /// Row-major matrix whose columns are `k'', k', k3`.
    pub fn matrix(&self) -> [[i32; 3]; 3] {
        let cols = [self.kdoubleprime, self.kprime, self.k3];
        let mut m = [[0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = cols[j][i];
            }
        }
        m
    }

    pub fn determinant(&self) -> i64 {
        determinant(self.kdoubleprime, self.kprime, self.k3)
    }

    /// Integer inverse (the adjugate, since the determinant is one).
    pub fn inverse(&self) -> [[i32; 3]; 3] {
        let m = self.matrix().map(|r| r.map(|v| v as i64));
        let mut inv = [[0i32; 3]; 3];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                // cofactor of (j, i)
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) as i32;
            }
        }
        inv
    }

    /// Frame momenta `v = M^{-1} p`.
    pub fn to_frame(&self, p: [f64; 3]) -> [f64; 3] {
        apply_int(&self.inverse(), p)
    }

    /// Original momenta `p = M v`.
    pub fn from_frame(&self, v: [f64; 3]) -> [f64; 3] {
        apply_int(&self.matrix(), v)
    }

    /// `h(M v)` as a function of the frame momenta.
    pub fn transform_hamiltonian(&self, h: &MomentumHamiltonian) -> MomentumHamiltonian {
        h.pulled_back(&self.matrix())
    }

    /// Perturbation in frame coordinates: angles `u = M^T q`, so mode `l`
    /// becomes `M^{-1} l`, and momentum slopes mix through `M`.
    pub fn transform_perturbation(
        &self,
        p: &AffinePerturbation,
    ) -> Result<AffinePerturbation, NormalFormError> {
        let inv = self.inverse();
        let m = self.matrix();
        let base = p.base.remap_modes(&inv)?;
        let mut slopes = [
            FourierField::zero(3)?,
            FourierField::zero(3)?,
            FourierField::zero(3)?,
        ];
        for (k, slope) in slopes.iter_mut().enumerate() {
            for j in 0..3 {
                if m[j][k] != 0 && !p.slopes[j].is_zero() {
                    *slope = slope.plus(&p.slopes[j].remap_modes(&inv)?.scaled(m[j][k] as f64))?;
                }
            }
        }
        Ok(AffinePerturbation { base, slopes })
    }
}

fn apply_int(m: &[[i32; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|j| m[i][j] as f64 * v[j]).sum();
    }
    out
}

fn gauss_reduce(mut a: [i64; 3], mut b: [i64; 3]) -> ([i64; 3], [i64; 3]) {
    if norm_sq_i(a) > norm_sq_i(b) {
        core::mem::swap(&mut a, &mut b);
    }
    loop {
        let q = (dot_i(a, b) as f64 / norm_sq_i(a) as f64).round() as i64;
        for i in 0..3 {
            b[i] -= q * a[i];
        }
        if norm_sq_i(b) >= norm_sq_i(a) {
            return (a, b);
        }
        core::mem::swap(&mut a, &mut b);
    }
}

/// Shortest vector of `base + span_Z(r1, r2)` for a Gauss-reduced pair.
fn closest_in_plane(base: [i64; 3], r1: [i64; 3], r2: [i64; 3]) -> [i64; 3] {
    // Real coordinates of the projection of -base onto the plane.
    let g11 = norm_sq_i(r1) as f64;
    let g12 = dot_i(r1, r2) as f64;
    let g22 = norm_sq_i(r2) as f64;
    let t1 = -dot_i(base, r1) as f64;
    let t2 = -dot_i(base, r2) as f64;
    let det = g11 * g22 - g12 * g12;
    let a0 = ((g22 * t1 - g12 * t2) / det).round() as i64;
    let b0 = ((g11 * t2 - g12 * t1) / det).round() as i64;
    let mut best: Option<[i64; 3]> = None;
    for da in -3..=3 {
        for db in -3..=3 {
            let (a, b) = (a0 + da, b0 + db);
            let v = [
                base[0] + a * r1[0] + b * r2[0],
                base[1] + a * r1[1] + b * r2[1],
                base[2] + a * r1[2] + b * r2[2],
            ];
            let better = match best {
                None => true,
                Some(w) => {
                    let (nv, nw) = (norm_sq_i(v), norm_sq_i(w));
                    nv < nw || (nv == nw && v < w)
                }
            };
            if better {
                best = Some(v);
            }
        }
    }
    best.unwrap_or(base)
}

/// Integrable part `h(p) = <b, p> + 1/2 <H p, p> + T3[p^3]/6 + T4[p^4]/24`
/// with symmetric coefficient tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumHamiltonian {
    pub linear: [f64; 3],
    pub quadratic: [[f64; 3]; 3],
    pub cubic: Tensor3,
    pub quartic: Tensor4,
}

impl MomentumHamiltonian {
    pub fn quadratic(h: [[f64; 3]; 3]) -> Self {
        let mut q = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                q[i][j] = 0.5 * (h[i][j] + h[j][i]);
            }
        }
        Self {
            linear: [0.0; 3],
            quadratic: q,
            cubic: [[[0.0; 3]; 3]; 3],
            quartic: [[[[0.0; 3]; 3]; 3]; 3],
        }
    }

    /// `1/2 |p|^2`.
    pub fn free() -> Self {
        Self::quadratic([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn with_linear(mut self, b: [f64; 3]) -> Self {
        self.linear = b;
        self
    }

    /// Adds `coeff * p1^a p2^b p3^c` for `powers = [a, b, c]`.
    pub fn with_monomial(mut self, coeff: f64, powers: [u32; 3]) -> Result<Self, NormalFormError> {
        let degree: u32 = powers.iter().sum();
        let mut idx = [0usize; 4];
        let mut n = 0;
        for (axis, &k) in powers.iter().enumerate() {
            for _ in 0..k.min(4) {
                if n < 4 {
                    idx[n] = axis;
                }
                n += 1;
            }
        }
        match degree {
            1 => self.linear[idx[0]] += coeff,
            2 => {
                for p in permutations(&idx[..2]) {
                    self.quadratic[p[0]][p[1]] += coeff;
                }
            }
            3 => {
                for p in permutations(&idx[..3]) {
                    self.cubic[p[0]][p[1]][p[2]] += coeff;
                }
            }
            4 => {
                for p in permutations(&idx[..4]) {
                    self.quartic[p[0]][p[1]][p[2]][p[3]] += coeff;
                }
            }
            d => return Err(NormalFormError::Degree(d)),
        }
        Ok(self)
    }

    pub fn value(&self, p: [f64; 3]) -> f64 {
        let mut v = 0.0;
        for i in 0..3 {
            v += self.linear[i] * p[i];
            for j in 0..3 {
                v += 0.5 * self.quadratic[i][j] * p[i] * p[j];
                for k in 0..3 {
                    v += self.cubic[i][j][k] * p[i] * p[j] * p[k] / 6.0;
                    for l in 0..3 {
                        v += self.quartic[i][j][k][l] * p[i] * p[j] * p[k] * p[l] / 24.0;
                    }
                }
            }
        }
        v
    }

    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let mut g = self.linear;
        for (i, gi) in g.iter_mut().enumerate() {
            for j in 0..3 {
                *gi += self.quadratic[i][j] * p[j];
                for k in 0..3 {
                    *gi += 0.5 * self.cubic[i][j][k] * p[j] * p[k];
                    for l in 0..3 {
                        *gi += self.quartic[i][j][k][l] * p[j] * p[k] * p[l] / 6.0;
                    }
                }
            }
        }
        g
    }

    pub fn hessian(&self, p: [f64; 3]) -> [[f64; 3]; 3] {
        let mut h = self.quadratic;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    h[i][j] += self.cubic[i][j][k] * p[k];
                    for l in 0..3 {
                        h[i][j] += 0.5 * self.quartic[i][j][k][l] * p[k] * p[l];
                    }
                }
            }
        }
        h
    }

    pub fn third(&self, p: [f64; 3]) -> Tensor3 {
        let mut t = self.cubic;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        t[i][j][k] += self.quartic[i][j][k][l] * p[l];
                    }
                }
            }
        }
        t
    }

    /// `h(base + d) - h(base)` from the Taylor expansion at `base`, which is
    /// exact for this polynomial and free of cancellation for small `d`.
    pub fn increment(&self, base: [f64; 3], d: [f64; 3]) -> f64 {
        let g = self.gradient(base);
        let h = self.hessian(base);
        let t = self.third(base);
        let mut v = 0.0;
        for i in 0..3 {
            v += g[i] * d[i];
            for j in 0..3 {
                v += 0.5 * h[i][j] * d[i] * d[j];
                for k in 0..3 {
                    v += t[i][j][k] * d[i] * d[j] * d[k] / 6.0;
                    for l in 0..3 {
                        v += self.quartic[i][j][k][l] * d[i] * d[j] * d[k] * d[l] / 24.0;
                    }
                }
            }
        }
        v
    }

    /// `grad h(base + d) - grad h(base)`, expanded at `base`.
    pub fn gradient_increment(&self, base: [f64; 3], d: [f64; 3]) -> [f64; 3] {
        let h = self.hessian(base);
        let t = self.third(base);
        let mut g = [0.0; 3];
        for (i, gi) in g.iter_mut().enumerate() {
            for j in 0..3 {
                *gi += h[i][j] * d[j];
                for k in 0..3 {
                    *gi += 0.5 * t[i][j][k] * d[j] * d[k];
                    for l in 0..3 {
                        *gi += self.quartic[i][j][k][l] * d[j] * d[k] * d[l] / 6.0;
                    }
                }
            }
        }
        g
    }

    /// `v -> h(M v)` for an integer matrix `M`.
    pub fn pulled_back(&self, m: &[[i32; 3]; 3]) -> Self {
        let mf = m.map(|r| r.map(|v| v as f64));
        let mut out = Self::quadratic([[0.0; 3]; 3]);
        for a in 0..3 {
            out.linear[a] = (0..3).map(|i| self.linear[i] * mf[i][a]).sum();
        }
        for a in 0..3 {
            for b in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += self.quadratic[i][j] * mf[i][a] * mf[j][b];
                    }
                }
                out.quadratic[a][b] = s;
            }
        }
        out.cubic = contract3(&self.cubic, &mf);
        out.quartic = contract4(&self.quartic, &mf);
        out
    }

    /// Frobenius norms of the quadratic, cubic and quartic coefficients.
    fn coefficient_norms(&self) -> [f64; 3] {
        let q: f64 = self.quadratic.iter().flatten().map(|v| v * v).sum();
        let c: f64 = self.cubic.iter().flatten().flatten().map(|v| v * v).sum();
        let d: f64 = self
            .quartic
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .map(|v| v * v)
            .sum();
        [q.sqrt(), c.sqrt(), d.sqrt()]
    }
}

fn permutations(idx: &[usize]) -> alloc::vec::Vec<[usize; 4]> {
    let n = idx.len();
    let mut out = alloc::vec::Vec::new();
    let mut order: [usize; 4] = [0, 1, 2, 3];
    heap_permute(n, &mut order, &mut |o| {
        let mut p = [0usize; 4];
        for i in 0..n {
            p[i] = idx[o[i]];
        }
        out.push(p);
    });
    out
}

fn heap_permute(k: usize, order: &mut [usize; 4], visit: &mut impl FnMut(&[usize; 4])) {
    if k <= 1 {
        visit(order);
        return;
    }
    for i in 0..k {
        heap_permute(k - 1, order, visit);
        if k.is_multiple_of(2) {
            order.swap(i, k - 1);
        } else {
            order.swap(0, k - 1);
        }
    }
}

fn contract3(t: &Tensor3, m: &[[f64; 3]; 3]) -> Tensor3 {
    let mut out = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            s += t[i][j][k] * m[i][a] * m[j][b] * m[k][c];
                        }
                    }
                }
                out[a][b][c] = s;
            }
        }
    }
    out
}

fn contract4(t: &Tensor4, m: &[[f64; 3]; 3]) -> Tensor4 {
    // one index at a time
    let mut cur = *t;
    for axis in 0..4 {
        let mut next = [[[[0.0; 3]; 3]; 3]; 3];
        for i0 in 0..3 {
            for i1 in 0..3 {
                for i2 in 0..3 {
                    for i3 in 0..3 {
                        let mut s = 0.0;
                        for r in 0..3 {
                            let mut ix = [i0, i1, i2, i3];
                            let a = ix[axis];
                            ix[axis] = r;
                            s += cur[ix[0]][ix[1]][ix[2]][ix[3]] * m[r][a];
                        }
                        next[i0][i1][i2][i3] = s;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Perturbation `P(p, q) = P0(q) + sum_j p_j P_j(q)` on `R^3 x T^3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffinePerturbation {
    pub base: FourierField,
    pub slopes: [FourierField; 3],
}

impl AffinePerturbation {
    pub fn new(base: FourierField) -> Result<Self, NormalFormError> {
        if base.dim() != 3 {
            return Err(FourierError::WrongDimension {
                expected: 3,
                got: base.dim(),
            }
            .into());
        }
        Ok(Self {
            base,
            slopes: [
                FourierField::zero(3)?,
                FourierField::zero(3)?,
                FourierField::zero(3)?,
            ],
        })
    }

    pub fn with_slope(mut self, axis: usize, field: FourierField) -> Result<Self, NormalFormError> {
        if field.dim() != 3 {
            return Err(FourierError::WrongDimension {
                expected: 3,
                got: field.dim(),
            }
            .into());
        }
        self.slopes[axis] = field;
        Ok(self)
    }

    /// `P(p, .)` as a field on the 3-torus.
    pub fn at(&self, p: [f64; 3]) -> Result<FourierField, NormalFormError> {
        let mut f = self.base.clone();
        for j in 0..3 {
            if p[j] != 0.0 && !self.slopes[j].is_zero() {
                f = f.plus(&self.slopes[j].scaled(p[j]))?;
            }
        }
        Ok(f)
    }
}

/// Double resonance in frame coordinates: `d1 h = d2 h = 0` at `momentum`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleResonancePoint {
    pub momentum: [f64; 3],
    pub omega3: f64,
    pub energy: f64,
}

impl DoubleResonancePoint {
    /// Validates a known point of `h` (frame coordinates).
    pub fn new(
        h: &MomentumHamiltonian,
        momentum: [f64; 3],
        tol: f64,
    ) -> Result<Self, NormalFormError> {
        let g = h.gradient(momentum);
        let res = g[0].abs().max(g[1].abs());
        if !(res <= tol) {
            return Err(NormalFormError::NotResonant(res));
        }
        if g[2] == 0.0 {
            return Err(NormalFormError::ZeroFrequency);
        }
        Ok(Self {
            momentum,
            omega3: g[2],
            energy: h.value(momentum),
        })
    }

    /// Newton solve for the double resonance on the level `h = energy`.
    pub fn locate(
        h: &MomentumHamiltonian,
        energy: f64,
        guess: [f64; 3],
    ) -> Result<Self, NormalFormError> {
        let p = solve_double_resonance(h, [1, 0, 0], [0, 1, 0], energy, guess)?;
        Self::new(h, p, 1e-10)
    }
}

/// Solves `h(p) = energy`, `<dh(p), k1> = 0`, `<dh(p), k2> = 0` by damped
/// Newton from `guess`.
pub fn solve_double_resonance(
    h: &MomentumHamiltonian,
    k1: Lattice,
    k2: Lattice,
    energy: f64,
    guess: [f64; 3],
) -> Result<[f64; 3], NormalFormError> {
    let k1 = Vector3::new(k1[0] as f64, k1[1] as f64, k1[2] as f64);
    let k2 = Vector3::new(k2[0] as f64, k2[1] as f64, k2[2] as f64);
    let scale = 1.0 + energy.abs();
    newton3("double resonance", guess, scale, |p| {
        let g = Vector3::from(h.gradient(p));
        let hs = Matrix3::from_fn(|i, j| h.hessian(p)[i][j]);
        let r = Vector3::new(h.value(p) - energy, g.dot(&k1), g.dot(&k2));
        let j = Matrix3::from_rows(&[g.transpose(), (hs * k1).transpose(), (hs * k2).transpose()]);
        (r, j)
    })
}

fn newton3<F>(
    what: &'static str,
    guess: [f64; 3],
    scale: f64,
    f: F,
) -> Result<[f64; 3], NormalFormError>
where
    F: Fn([f64; 3]) -> (Vector3<f64>, Matrix3<f64>),
{
    let mut p = guess;
    let (mut r, mut j) = f(p);
    for _ in 0..60 {
        if r.amax() <= 1e-13 * scale {
            return Ok(p);
        }
        let Some(step) = j.lu().solve(&r) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let trial = [p[0] - t * step[0], p[1] - t * step[1], p[2] - t * step[2]];
            let (rt, jt) = f(trial);
            if rt.norm() < r.norm() || rt.amax() <= 1e-13 * scale {
                p = trial;
                r = rt;
                j = jt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() <= 1e-11 * scale {
        Ok(p)
    } else {
        Err(NormalFormError::NoConvergence {
            what,
            residual: r.amax(),
        })
    }
}

/// Small parameter, exponent and disk radius of the homogenization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub epsilon: f64,
    pub sigma: f64,
    pub radius: f64,
}

impl Scales {
    pub fn new(epsilon: f64, sigma: f64, radius: f64) -> Result<Self, NormalFormError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(NormalFormError::OutOfRange {
                name: "epsilon",
                value: epsilon,
                range: "(0, 1)",
            });
        }
        if !(sigma > 0.0 && sigma < 0.5) {
            return Err(NormalFormError::OutOfRange {
                name: "sigma",
                value: sigma,
                range: "(0, 1/2)",
            });
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(NormalFormError::OutOfRange {
                name: "D",
                value: radius,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            epsilon,
            sigma,
            radius,
        })
    }

    /// `eps^sigma`.
    pub fn remainder_scale(&self) -> f64 {
        self.epsilon.powf(self.sigma)
    }

    /// Momentum radius `D eps^sigma` of the homogenized domain.
    pub fn momentum_radius(&self) -> f64 {
        self.radius * self.remainder_scale()
    }
}

/// Sup-norm majorants of the three remainder pieces on the homogenized
/// domain, and the same numbers divided by `eps^sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderBounds {
    /// Momentum dependence of the resonant average.
    pub averaged: f64,
    /// Frequency mismatch against the homological solution.
    pub frequency: f64,
    /// Second-order term of the averaging step.
    pub second_order: f64,
    pub constants: [f64; 3],
}

impl RemainderBounds {
    pub fn magnitudes(&self) -> [f64; 3] {
        [self.averaged, self.frequency, self.second_order]
    }
}

/// `(1/eps)(h(p'' + sqrt(eps) y~) - h(p'')) - V(x) + eps^sigma R(x, x3)`
/// near a double resonance, in frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogenizedSystem {
    pub hamiltonian: MomentumHamiltonian,
    pub point: DoubleResonancePoint,
    pub kinetic: KineticMatrix,
    /// `-Z(p'', .)` shifted to have minimum zero.
    pub potential: FourierField,
    /// The shift added to `-Z(p'', .)`.
    pub shift: f64,
    pub scales: Scales,
    /// Effective remainder on `T^2 x T`, carried with amplitude `eps^sigma`.
    pub remainder: Option<FourierField>,
    pub bounds: RemainderBounds,
}

/// Value and first derivatives of the reduced Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedJet {
    pub value: f64,
    pub dx: [f64; 2],
    pub dy: [f64; 2],
    pub dtheta: f64,
    /// `dG~/dI` at the solution.
    pub solvability: f64,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn positive_definite(h: &[[f64; 3]; 3]) -> bool {
    Matrix3::from_fn(|i, j| h[i][j]).cholesky().is_some()
}

/// Frame-coordinate homogenization around `point`.
pub fn homogenize(
    h: &MomentumHamiltonian,
    perturbation: &AffinePerturbation,
    point: &DoubleResonancePoint,
    scales: Scales,
) -> Result<HomogenizedSystem, NormalFormError> {
    let pdd = point.momentum;
    let hess = h.hessian(pdd);
    if !positive_definite(&hess) {
        return Err(NormalFormError::NotConvex);
    }
    if point.omega3 == 0.0 {
        return Err(NormalFormError::ZeroFrequency);
    }
    let kinetic = KineticMatrix::new([[hess[0][0], hess[0][1]], [hess[1][0], hess[1][1]]])
        .map_err(|_| NormalFormError::NotConvex)?;
    let z = perturbation
        .at(pdd)?
        .resonant_average()?
        .restrict_to_plane()?;
    let neg = z.scaled(-1.0);
    let shift = -neg.minimize_on_torus(128)?.value;
    let potential = neg.plus(&FourierField::constant(2, shift)?)?;
    let bounds = remainder_bounds(h, perturbation, point, &scales)?;
    Ok(HomogenizedSystem {
        hamiltonian: h.clone(),
        point: *point,
        kinetic,
        potential,
        shift,
        scales,
        remainder: None,
        bounds,
    })
}

fn remainder_bounds(
    h: &MomentumHamiltonian,
    pert: &AffinePerturbation,
    point: &DoubleResonancePoint,
    scales: &Scales,
) -> Result<RemainderBounds, NormalFormError> {
    let r = REMAINDER_ORDER;
    let eps = scales.epsilon;
    let rho = scales.momentum_radius();
    let pdd = point.momentum;
    let omega = h.gradient(pdd);

    let mut z_slopes = 0.0;
    for s in &pert.slopes {
        z_slopes += s.resonant_average()?.cr_norm_bound(r).powi(2);
    }
    let averaged = rho * z_slopes.sqrt();

    let [nq, nc, nd] = h.coefficient_norms();
    let reach = norm3(pdd) + rho;
    let curvature = nq + nc * reach + 0.5 * nd * reach * reach;
    let slope = norm3(omega) + curvature * rho;

    let f0 = pert.base.solve_homological(omega)?;
    let fj: [FourierField; 3] = [
        pert.slopes[0].solve_homological(omega)?,
        pert.slopes[1].solve_homological(omega)?,
        pert.slopes[2].solve_homological(omega)?,
    ];
    let angle_norm = |order: u32| {
        let mut s = f0.cr_norm_bound(order);
        for j in 0..3 {
            s += (pdd[j].abs() + rho) * fj[j].cr_norm_bound(order);
        }
        s
    };
    let fq1 = angle_norm(r + 1);
    let fq = angle_norm(r + 2);
    let fp = fj
        .iter()
        .map(|f| f.cr_norm_bound(r + 2).powi(2))
        .sum::<f64>()
        .sqrt();
    let frequency = rho * curvature * fq1;

    let mut pq = pert.base.cr_norm_bound(r + 2);
    for j in 0..3 {
        pq += (pdd[j].abs() + rho) * pert.slopes[j].cr_norm_bound(r + 2);
    }
    let pp = pert
        .slopes
        .iter()
        .map(|f| f.cr_norm_bound(r + 2).powi(2))
        .sum::<f64>()
        .sqrt();
    let bracket_q = eps * pq * fp + slope * fq;
    let bracket_p = eps * pp * fp + curvature * fq + slope * fp;
    let second_order = 0.5 * eps * (bracket_q * fp + bracket_p * fq);

    let s = scales.remainder_scale();
    Ok(RemainderBounds {
        averaged,
        frequency,
        second_order,
        constants: [averaged / s, frequency / s, second_order / s],
    })
}

impl HomogenizedSystem {
    /// Attaches the effective remainder `R(x1, x2, x3)`.
    pub fn with_remainder(mut self, field: FourierField) -> Result<Self, NormalFormError> {
        if field.dim() != 3 {
            return Err(SystemError::RemainderDimension.into());
        }
        self.remainder = Some(field);
        Ok(self)
    }

    pub fn omega3(&self) -> f64 {
        self.point.omega3
    }

    /// The truncated system `1/2 <A y, y> - V(x)` with the remainder attached.
    pub fn mechanical(&self) -> Result<MechanicalSystem, NormalFormError> {
        self.chart_system(0.0, self.omega3())
    }

    fn chart_system(&self, drift: f64, omega3: f64) -> Result<MechanicalSystem, NormalFormError> {
        let mut sys =
            MechanicalSystem::new(self.kinetic, self.potential.clone())?.with_drift(drift);
        if let Some(r) = &self.remainder {
            let rate = omega3 / self.scales.epsilon.sqrt();
            sys = sys.with_remainder(Remainder::new(
                r.clone(),
                self.scales.remainder_scale(),
                rate,
            )?);
        }
        Ok(sys)
    }

    /// The unique `G` with `G~(x, omega3 theta / sqrt(eps), y, -sqrt(eps) G / omega3) = 0`.
    pub fn reduce_energy(
        &self,
        x: [f64; 2],
        y: [f64; 2],
        theta: f64,
    ) -> Result<f64, NormalFormError> {
        Ok(self
            .reduce_from(self.point.momentum, self.omega3(), x, y, theta)?
            .value)
    }

    /// Reduced Hamiltonian with its gradient by implicit differentiation.
    pub fn reduced_jet(
        &self,
        x: [f64; 2],
        y: [f64; 2],
        theta: f64,
    ) -> Result<ReducedJet, NormalFormError> {
        self.reduce_from(self.point.momentum, self.omega3(), x, y, theta)
    }

    /// `G~` at a point of the extended phase space, momenta relative to `base`.
    pub fn homogenized_value(&self, base: [f64; 3], x: [f64; 3], y: [f64; 3]) -> f64 {
        let eps = self.scales.epsilon;
        let se = eps.sqrt();
        let pdd = self.point.momentum;
        let offset = [base[0] - pdd[0], base[1] - pdd[1], base[2] - pdd[2]];
        let level = self.hamiltonian.increment(pdd, offset);
        let d = [se * y[0], se * y[1], se * y[2]];
        let kinetic = (level + self.hamiltonian.increment(base, d)) / eps;
        let mut v = kinetic - self.potential.eval(&x[..2]);
        if let Some(r) = &self.remainder {
            v += self.scales.remainder_scale() * r.eval(&x);
        }
        v
    }

    fn reduce_from(
        &self,
        base: [f64; 3],
        omega: f64,
        x: [f64; 2],
        y: [f64; 2],
        theta: f64,
    ) -> Result<ReducedJet, NormalFormError> {
        let eps = self.scales.epsilon;
        let se = eps.sqrt();
        let x3 = omega * theta / se;
        let angles = [x[0], x[1], x3];
        let mut g = 0.0;
        let mut last = f64::INFINITY;
        for _ in 0..=50 {
            let yt = [y[0], y[1], -se * g / omega];
            let f = self.homogenized_value(base, angles, yt);
            let d = [se * yt[0], se * yt[1], se * yt[2]];
            let grad = self.hamiltonian.gradient(base);
            let inc = self.hamiltonian.gradient_increment(base, d);
            let solvability = (grad[2] + inc[2]) / omega;
            if !(solvability >= 0.5) {
                return Err(NormalFormError::NotSolvable(solvability));
            }
            last = f.abs();
            if last <= 1e-11 {
                return Ok(self.jet_at(g, angles, grad, inc, omega, solvability));
            }
            g += f / solvability;
        }
        Err(NormalFormError::NoConvergence {
            what: "energy reduction",
            residual: last,
        })
    }

    fn jet_at(
        &self,
        g: f64,
        angles: [f64; 3],
        grad: [f64; 3],
        inc: [f64; 3],
        omega: f64,
        s: f64,
    ) -> ReducedJet {
        let se = self.scales.epsilon.sqrt();
        let vg = self.potential.gradient(&angles[..2]);
        let mut fx = [-vg[0], -vg[1]];
        let mut ftheta = 0.0;
        if let Some(r) = &self.remainder {
            let a = self.scales.remainder_scale();
            let rg = r.gradient(&angles);
            fx[0] += a * rg[0];
            fx[1] += a * rg[1];
            ftheta = a * rg[2] * omega / se;
        }
        let fy = [(grad[0] + inc[0]) / se, (grad[1] + inc[1]) / se];
        ReducedJet {
            value: g,
            dx: [fx[0] / s, fx[1] / s],
            dy: [fy[0] / s, fy[1] / s],
            dtheta: ftheta / s,
            solvability: s,
        }
    }

    /// Chart `i` along the resonant path: drift `K i` and base momentum on
    /// the same energy level with `d1 h = K i sqrt(eps)`, `d2 h = 0`.
    pub fn local_chart(&self, index: i64, spacing: f64) -> Result<LocalChart, NormalFormError> {
        let se = self.scales.epsilon.sqrt();
        let target = spacing * index as f64 * se;
        let radius = self.scales.momentum_radius();
        if !(target.abs() <= radius) {
            return Err(NormalFormError::OutsideDisk {
                index,
                offset: target.abs(),
                radius,
            });
        }
        let pdd = self.point.momentum;
        let h = &self.hamiltonian;
        let momentum = if index == 0 {
            pdd
        } else {
            let scale = 1.0 + norm3(h.gradient(pdd));
            newton3("chart base point", pdd, scale, |p| {
                let g = h.gradient(p);
                let hs = h.hessian(p);
                let d = [p[0] - pdd[0], p[1] - pdd[1], p[2] - pdd[2]];
                let r = Vector3::new(g[0] - target, g[1], h.increment(pdd, d));
                let j = Matrix3::new(
                    hs[0][0], hs[0][1], hs[0][2], hs[1][0], hs[1][1], hs[1][2], g[0], g[1], g[2],
                );
                (r, j)
            })?
        };
        Ok(LocalChart {
            index,
            momentum,
            drift: spacing * index as f64,
            omega3: h.gradient(momentum)[2],
        })
    }
}

/// Chart `G_i = Omega_i y1 + 1/2 <A y, y> - V(x)` around `momentum`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalChart {
    pub index: i64,
    pub momentum: [f64; 3],
    pub drift: f64,
    pub omega3: f64,
}

/// Affine map taking a level of the upper chart to the level of the lower
/// chart on the same energy surface: `E_lower = scale E_upper + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMatch {
    pub scale: f64,
    pub offset: f64,
}

impl EnergyMatch {
    pub fn lower_level(&self, upper: f64) -> f64 {
        self.scale * upper + self.offset
    }

    pub fn upper_level(&self, lower: f64) -> f64 {
        (lower - self.offset) / self.scale
    }
}

impl LocalChart {
    /// `G_i` with `eps^sigma R` attached, time `theta`.
    pub fn system(&self, sys: &HomogenizedSystem) -> Result<MechanicalSystem, NormalFormError> {
        sys.chart_system(self.drift, self.omega3)
    }

    /// Implicit energy reduction in this chart's coordinates.
    pub fn reduce_energy(
        &self,
        sys: &HomogenizedSystem,
        x: [f64; 2],
        y: [f64; 2],
        theta: f64,
    ) -> Result<f64, NormalFormError> {
        Ok(sys
            .reduce_from(self.momentum, self.omega3, x, y, theta)?
            .value)
    }

    /// Level correspondence with `upper`. A point with momentum `p` has
    /// `G_i = -omega3_i (p3 - p'_{i,3}) / eps` in chart `i`.
    pub fn matching(&self, upper: &LocalChart, epsilon: f64) -> EnergyMatch {
        EnergyMatch {
            scale: self.omega3 / upper.omega3,
            offset: -self.omega3 / epsilon * (upper.momentum[2] - self.momentum[2]),
        }
    }

    /// `|p'_{upper} - p'_self| / sqrt(eps)`.
    pub fn spacing_to(&self, upper: &LocalChart, epsilon: f64) -> f64 {
        let d = [
            upper.momentum[0] - self.momentum[0],
            upper.momentum[1] - self.momentum[1],
            upper.momentum[2] - self.momentum[2],
        ];
        norm3(d) / epsilon.sqrt()
    }

    /// Chart coordinates `y = (p - p'_i) / sqrt(eps)` (first two components).
    pub fn chart_momentum(&self, p: [f64; 3], epsilon: f64) -> [f64; 2] {
        let se = epsilon.sqrt();
        [
            (p[0] - self.momentum[0]) / se,
            (p[1] - self.momentum[1]) / se,
        ]
    }

    /// Time `theta_i = sqrt(eps) x3 / omega3_i` for the fast angle `x3`.
    pub fn chart_time(&self, x3: f64, epsilon: f64) -> f64 {
        epsilon.sqrt() * x3 / self.omega3
    }
}
