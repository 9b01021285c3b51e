//! Small dense and structured solvers used by the orbit machinery.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2};

fn inverse_spd2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(m[(0, 0)] > 0.0 && m[(1, 1)] > 0.0 && det > 0.0) {
        return None;
    }
    Some(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Solves a symmetric positive definite cyclic block-tridiagonal system with
/// 2x2 blocks. `diag[k]` is the block `(k, k)`, `off[k]` the block `(k, k+1)`
/// with `off[n-1]` coupling the last block row to the first. Returns `None`
/// when a pivot fails to be positive definite.
pub fn solve_cyclic_block_tridiagonal(
    diag: &[Matrix2<f64>],
    off: &[Matrix2<f64>],
    rhs: &[Vector2<f64>],
) -> Option<Vec<Vector2<f64>>> {
    let n = diag.len();
    assert!(n >= 3 && off.len() == n && rhs.len() == n);
    let last = n - 1;
    let zero = Matrix2::zeros();
    // Row k (k < last) after elimination: pivot d[k], coupling u[k] to k+1
    // (only for k + 1 < last) and w[k] to the last column.
    let mut d = vec![zero; n];
    let mut u = vec![zero; n];
    let mut w = vec![zero; n];
    let mut p = vec![zero; n];
    let mut b: Vec<Vector2<f64>> = rhs.to_vec();
    d[0] = diag[0];
    u[0] = if 1 < last { off[0] } else { zero };
    w[0] = off[last].transpose();
    if last == 1 {
        w[0] += off[0];
    }
    // Last row coupling to column k.
    let mut lrow = off[last];
    let mut dlast = diag[last];
    for k in 0..last {
        p[k] = inverse_spd2(&d[k])?;
        if k + 1 < last {
            let ut_p = u[k].transpose() * p[k];
            d[k + 1] = diag[k + 1] - ut_p * u[k];
            let direct = if k + 1 == last - 1 { off[k + 1] } else { zero };
            w[k + 1] = direct - ut_p * w[k];
            u[k + 1] = if k + 2 < last { off[k + 1] } else { zero };
            let bk = b[k];
            b[k + 1] -= ut_p * bk;
            let lp = lrow * p[k];
            let direct_l = if k + 1 == last - 1 {
                off[k + 1].transpose()
            } else {
                zero
            };
            dlast -= lp * w[k];
            let bk = b[k];
            b[last] -= lp * bk;
            lrow = direct_l - lp * u[k];
        } else {
            let lp = lrow * p[k];
            dlast -= lp * w[k];
            let bk = b[k];
            b[last] -= lp * bk;
        }
    }
    let pl = inverse_spd2(&dlast)?;
    let mut x = vec![Vector2::zeros(); n];
    x[last] = pl * b[last];
    for k in (0..last).rev() {
        let mut r = b[k] - w[k] * x[last];
        if k + 1 < last {
            r -= u[k] * x[k + 1];
        }
        x[k] = p[k] * r;
    }
    Some(x)
}

/// Thomas algorithm for a scalar symmetric tridiagonal system; `None` if a
/// pivot is not positive.
pub fn solve_tridiagonal_spd(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv <= 0.0 {
        return None;
    }
    c[0] = if n > 1 { off[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - off[i - 1] * c[i - 1];
        if piv <= 0.0 {
            return None;
        }
        c[i] = if i + 1 < n { off[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Damped least-squares step: minimizes `|J dx + r|^2 + mu |dx|^2` by QR of
/// the stacked matrix, which avoids squaring the condition number.
pub fn damped_least_squares(j: &DMatrix<f64>, r: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let (m, n) = j.shape();
    let rows = if mu > 0.0 { m + n } else { m };
    let mut a = DMatrix::zeros(rows, n);
    a.view_mut((0, 0), (m, n)).copy_from(j);
    let mut rhs = DVector::zeros(rows);
    rhs.rows_mut(0, m).copy_from(&(-r));
    if mu > 0.0 {
        let s = mu.sqrt();
        for i in 0..n {
            a[(m + i, i)] = s;
        }
    }
    if rows < n {
        return minimum_norm_solution(&a, &rhs);
    }
    let qr = a.qr();
    let q = qr.q();
    let rmat = qr.r();
    let qtb = q.transpose() * rhs;
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let diag = rmat[(i, i)];
        if diag.abs() < 1e-300 {
            return None;
        }
        let mut s = qtb[i];
        for k in i + 1..n {
            s -= rmat[(i, k)] * x[k];
        }
        x[i] = s / diag;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn minimum_norm_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-14).ok()
}

/// Euclidean operator norm of a 4x4 matrix.
pub fn operator_norm4(m: &Matrix4<f64>) -> f64 {
    let s = (m.transpose() * m).symmetric_eigenvalues();
    s.iter().fold(0.0f64, |a, &v| a.max(v)).max(0.0).sqrt()
}

/// Least-squares line `y = slope x + intercept` with residual spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Max minus min of `y - slope x`.
    pub intercept_spread: f64,
    pub max_residual: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let offsets: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - slope * a).collect();
    let lo = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_residual = offsets
        .iter()
        .map(|o| (o - intercept).abs())
        .fold(0.0, f64::max);
    Some(LineFit {
        slope,
        intercept,
        intercept_spread: hi - lo,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(diag: &[Matrix2<f64>], off: &[Matrix2<f64>]) -> DMatrix<f64> {
        let n = diag.len();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            m.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&diag[k]);
            let j = (k + 1) % n;
            let o = off[k];
            let cur = m.view((2 * k, 2 * j), (2, 2)).clone_owned();
            m.view_mut((2 * k, 2 * j), (2, 2)).copy_from(&(cur + o));
            let cur = m.view((2 * j, 2 * k), (2, 2)).clone_owned();
            m.view_mut((2 * j, 2 * k), (2, 2))
                .copy_from(&(cur + o.transpose()));
        }
        m
    }

    #[test]
    fn cyclic_solver_matches_dense_lu() {
        for n in [3usize, 4, 5, 17] {
            let diag: Vec<_> = (0..n)
                .map(|k| Matrix2::new(6.0 + k as f64 * 0.1, 0.3, 0.3, 5.0))
                .collect();
            let off: Vec<_> = (0..n)
                .map(|k| Matrix2::new(-1.0, 0.2 * (k as f64).sin(), 0.1, -1.2))
                .collect();
            let rhs: Vec<_> = (0..n)
                .map(|k| Vector2::new((k as f64).cos(), 1.0 + k as f64))
                .collect();
            let x = solve_cyclic_block_tridiagonal(&diag, &off, &rhs).unwrap();
            let m = dense(&diag, &off);
            let b = DVector::from_iterator(2 * n, rhs.iter().flat_map(|v| [v.x, v.y]));
            let xd = m.lu().solve(&b).unwrap();
            for k in 0..n {
                assert!((x[k].x - xd[2 * k]).abs() < 1e-12);
                assert!((x[k].y - xd[2 * k + 1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn open_chain_is_the_zero_corner_case() {
        let n = 6;
        let diag = vec![Matrix2::new(2.0, 0.0, 0.0, 2.0); n];
        let mut off = vec![Matrix2::new(-1.0, 0.0, 0.0, -1.0); n];
        off[n - 1] = Matrix2::zeros();
        let rhs = vec![Vector2::new(1.0, 0.0); n];
        let x = solve_cyclic_block_tridiagonal(&diag, &off, &rhs).unwrap();
        let scalar = solve_tridiagonal_spd(&[2.0; 6], &[-1.0; 5], &[1.0; 6]).unwrap();
        for k in 0..n {
            assert!((x[k].x - scalar[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn damped_step_solves_square_system() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let r = DVector::from_row_slice(&[1.0, -1.0]);
        let dx = damped_least_squares(&j, &r, 0.0).unwrap();
        let res = &j * &dx + &r;
        assert!(res.norm() < 1e-14);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-13);
        assert!(f.intercept_spread < 1e-13);
    }
}
