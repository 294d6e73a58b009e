//! Eigenvalues of an upper Hessenberg matrix inside a disk.
//!
//! Edge statistics only need the handful of eigenvalues within a few
//! microscopic lengths of the edge point. This module finds them with
//! shift-invert Arnoldi centred on the disk and certifies completeness with
//! the argument principle: after dividing `det(H - z)` by the factors of the
//! converged eigenvalues, the winding number around the disk boundary must
//! vanish. Every operation is `O(n^2)` per shift or solve, so a window can
//! be resolved for `n = 1024` without an `O(n^3)` factorisation.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{schur, ComplexMatrix, LinalgError, LinalgResult, ZERO};

/// Upper Hessenberg matrix stored row by row, keeping only columns
/// `j >= i - 1` of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedHessenberg {
    n: usize,
    offsets: Vec<usize>,
    data: Vec<Complex64>,
}

#[inline]
fn first_col(i: usize) -> usize {
    i.saturating_sub(1)
}

impl PackedHessenberg {
    pub fn zeros(n: usize) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for i in 0..n {
            offsets.push(acc);
            acc += n - first_col(i);
        }
        offsets.push(acc);
        Self {
            n,
            offsets,
            data: vec![ZERO; acc],
        }
    }

    /// Copies the Hessenberg part of `m`; entries below the subdiagonal
    /// are ignored.
    pub fn from_dense(m: &ComplexMatrix) -> LinalgResult<Self> {
        let n = m.ensure_square()?;
        let mut p = Self::zeros(n);
        for i in 0..n {
            let start = first_col(i);
            let row = p.row_mut(i);
            for (k, v) in row.iter_mut().enumerate() {
                *v = m[(i, start + k)];
            }
        }
        Ok(p)
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let start = first_col(i);
            for (k, v) in self.row(i).iter().enumerate() {
                m[(i, start + k)] = *v;
            }
        }
        m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Row `i`, starting at column `max(i - 1, 0)`.
    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let start = first_col(i);
        if j < start {
            ZERO
        } else {
            self.row(i)[j - start]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let start = first_col(i);
        assert!(j >= start, "entry ({i}, {j}) lies below the subdiagonal");
        self.row_mut(i)[j - start] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let start = first_col(i);
                self.row(i).iter().zip(&x[start..]).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `log |det(H - shift I)|` and the phase of the determinant, by
    /// streaming Hessenberg elimination with partial pivoting. Reads each
    /// row once and needs `O(n)` workspace.
    pub fn shifted_log_det(&self, shift: Complex64) -> (f64, Complex64) {
        let n = self.n;
        if n == 0 {
            return (0.0, Complex64::new(1.0, 0.0));
        }
        let mut cur: Vec<Complex64> = self.row(0).to_vec();
        cur[0] -= shift;
        let mut next: Vec<Complex64> = Vec::with_capacity(n);
        let mut log_abs = 0.0;
        let mut phase = Complex64::new(1.0, 0.0);
        for k in 0..n - 1 {
            // row k+1 restricted to columns k.. ; its packed storage starts at column k
            next.clear();
            next.extend_from_slice(self.row(k + 1));
            next[1] -= shift;
            if next[0].norm() > cur[0].norm() {
                std::mem::swap(&mut cur, &mut next);
                phase = -phase;
            }
            let pivot = cur[0];
            let pn = pivot.norm();
            if pn == 0.0 {
                return (f64::NEG_INFINITY, ZERO);
            }
            log_abs += pn.ln();
            phase *= pivot / pn;
            let l = next[0] / pivot;
            // new current row, columns k+1.., shifted down by one slot
            for j in 1..cur.len() {
                next[j - 1] = next[j] - l * cur[j];
            }
            next.pop();
            std::mem::swap(&mut cur, &mut next);
        }
        let pivot = cur[0];
        let pn = pivot.norm();
        if pn == 0.0 {
            return (f64::NEG_INFINITY, ZERO);
        }
        (log_abs + pn.ln(), phase * (pivot / pn))
    }
}

impl PackedHessenberg {
    /// `d/dz log det(H - z I)` at `z = shift`, which is
    /// `sum_i 1 / (z - lambda_i)`, by forward-mode differentiation of the
    /// same streaming elimination as [`PackedHessenberg::shifted_log_det`].
    /// `None` on an exactly zero pivot.
    pub fn shifted_log_derivative(&self, shift: Complex64) -> Option<Complex64> {
        let n = self.n;
        if n == 0 {
            return Some(ZERO);
        }
        let minus_one = Complex64::new(-1.0, 0.0);
        let mut cur: Vec<Complex64> = self.row(0).to_vec();
        cur[0] -= shift;
        let mut dcur = vec![ZERO; cur.len()];
        dcur[0] = minus_one;
        let mut next: Vec<Complex64> = Vec::with_capacity(n);
        let mut dnext: Vec<Complex64> = Vec::with_capacity(n);
        let mut acc = ZERO;
        for k in 0..n - 1 {
            next.clear();
            next.extend_from_slice(self.row(k + 1));
            next[1] -= shift;
            dnext.clear();
            dnext.resize(next.len(), ZERO);
            dnext[1] = minus_one;
            if next[0].norm() > cur[0].norm() {
                std::mem::swap(&mut cur, &mut next);
                std::mem::swap(&mut dcur, &mut dnext);
            }
            let pivot = cur[0];
            if pivot == ZERO {
                return None;
            }
            let inv = pivot.inv();
            acc += dcur[0] * inv;
            let l = next[0] * inv;
            let dl = (dnext[0] - l * dcur[0]) * inv;
            for j in 1..cur.len() {
                dnext[j - 1] = dnext[j] - (dl * cur[j] + l * dcur[j]);
                next[j - 1] = next[j] - l * cur[j];
            }
            next.pop();
            dnext.pop();
            std::mem::swap(&mut cur, &mut next);
            std::mem::swap(&mut dcur, &mut dnext);
        }
        if cur[0] == ZERO {
            return None;
        }
        Some(acc + dcur[0] / cur[0])
    }
}

/// LU factorisation of `H - shift I` with partial pivoting between
/// adjacent rows.
#[derive(Debug, Clone)]
pub struct HessenbergLu {
    n: usize,
    shift: Complex64,
    /// row k of U, columns k..n
    u: Vec<Vec<Complex64>>,
    mult: Vec<Complex64>,
    swapped: Vec<bool>,
}

impl HessenbergLu {
    pub fn factor(h: &PackedHessenberg, shift: Complex64) -> Self {
        let n = h.n();
        let mut u = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n.saturating_sub(1));
        let mut swapped = Vec::with_capacity(n.saturating_sub(1));
        if n > 0 {
            let mut cur: Vec<Complex64> = h.row(0).to_vec();
            cur[0] -= shift;
            for k in 0..n - 1 {
                let mut next: Vec<Complex64> = h.row(k + 1).to_vec();
                next[1] -= shift;
                let swap = next[0].norm() > cur[0].norm();
                if swap {
                    std::mem::swap(&mut cur, &mut next);
                }
                let pivot = cur[0];
                let l = if pivot == ZERO { ZERO } else { next[0] / pivot };
                for j in 1..cur.len() {
                    next[j] -= l * cur[j];
                }
                next.remove(0);
                u.push(cur);
                mult.push(l);
                swapped.push(swap);
                cur = next;
            }
            u.push(cur);
        }
        Self {
            n,
            shift,
            u,
            mult,
            swapped,
        }
    }

    pub fn shift(&self) -> Complex64 {
        self.shift
    }

    /// Smallest pivot modulus; zero means the shifted matrix is singular.
    pub fn min_pivot(&self) -> f64 {
        self.u.iter().map(|r| r[0].norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn determinant(&self) -> Complex64 {
        let sign = if self.swapped.iter().filter(|&&s| s).count() % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        self.u.iter().map(|r| r[0]).product::<Complex64>() * sign
    }

    /// Solves `(H - shift I) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                b.swap(k, k + 1);
            }
            let bk = b[k];
            b[k + 1] -= self.mult[k] * bk;
        }
        for k in (0..n).rev() {
            let row = &self.u[k];
            let mut acc = b[k];
            for (a, x) in row[1..].iter().zip(&b[k + 1..]) {
                acc -= a * x;
            }
            b[k] = acc / row[0];
        }
    }
}

/// Settings for [`eigenvalues_in_disk`].
#[derive(Debug, Clone, Copy)]
pub struct WindowSolver {
    pub initial_krylov: usize,
    pub krylov_step: usize,
    pub max_krylov: usize,
    /// Relative residual, in units of `||H||_F`, below which a Ritz pair
    /// is accepted as an eigenpair.
    pub residual_tol: f64,
    /// Disk radius multiple inside which converged Ritz values are divided
    /// out of the determinant before counting.
    pub guard: f64,
    pub contour_points: usize,
}

impl Default for WindowSolver {
    fn default() -> Self {
        Self {
            initial_krylov: 40,
            krylov_step: 20,
            max_krylov: 200,
            residual_tol: 1e-10,
            guard: 1.6,
            contour_points: 64,
        }
    }
}

struct Arnoldi<'a> {
    lu: &'a HessenbergLu,
    basis: Vec<Vec<Complex64>>,
    // column-major (m+1) x m upper Hessenberg projection, stored by column
    h: Vec<Vec<Complex64>>,
    breakdown: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl<'a> Arnoldi<'a> {
    fn new(lu: &'a HessenbergLu, n: usize) -> Self {
        // fixed, deterministic start vector with all components nonzero
        let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
        let mut v: Vec<Complex64> = (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                let phi = (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 * PI;
                Complex64::from_polar(1.0, phi)
            })
            .collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        Self {
            lu,
            basis: vec![v],
            h: Vec::new(),
            breakdown: false,
        }
    }

    fn dim(&self) -> usize {
        self.h.len()
    }

    fn extend_to(&mut self, m: usize) {
        while self.dim() < m && !self.breakdown {
            let j = self.dim();
            let mut w = self.basis[j].clone();
            self.lu.solve_in_place(&mut w);
            let mut col = vec![ZERO; j + 2];
            // classical Gram-Schmidt, twice
            for _ in 0..2 {
                for (i, v) in self.basis.iter().enumerate() {
                    let c = dot(v, &w);
                    col[i] += c;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                }
            }
            let nw = norm(&w);
            col[j + 1] = Complex64::new(nw, 0.0);
            let scale = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            self.h.push(col);
            if nw <= 1e-14 * scale {
                self.breakdown = true;
            } else {
                w.iter_mut().for_each(|z| *z /= nw);
                self.basis.push(w);
            }
        }
    }

    /// Ritz values of the shift-inverted operator and the bound
    /// `|h_{m+1,m}| |y_m|` on their residuals.
    fn ritz(&self) -> LinalgResult<Vec<(Complex64, f64)>> {
        let m = self.dim();
        let hm = ComplexMatrix::from_fn(m, m, |i, j| if i < self.h[j].len() { self.h[j][i] } else { ZERO });
        let beta = if self.breakdown { 0.0 } else { self.h[m - 1][m].norm() };
        let s = schur(&hm)?;
        let t = &s.t;
        let mut out = Vec::with_capacity(m);
        let tnorm = t.frobenius_norm().max(f64::MIN_POSITIVE);
        for k in 0..m {
            let theta = t[(k, k)];
            // eigenvector of T for theta
            let mut y = vec![ZERO; m];
            y[k] = Complex64::new(1.0, 0.0);
            for j in (0..k).rev() {
                let mut acc = ZERO;
                for l in (j + 1)..=k {
                    acc += t[(j, l)] * y[l];
                }
                let mut d = t[(j, j)] - theta;
                if d.norm() < 1e-14 * tnorm {
                    d = Complex64::new(1e-14 * tnorm, 0.0);
                }
                y[j] = -acc / d;
            }
            let x = s.q.matvec(&y)?;
            let nx = norm(&x);
            let last = x[m - 1].norm() / nx;
            out.push((theta, beta * last));
        }
        Ok(out)
    }
}

/// Number of eigenvalues of `h` inside `|z - center| = radius` that are not
/// in `known`, as the trapezoidal value of
/// `(1 / 2 pi i) \oint (log det(H - z) - sum log(lambda_k - z))' dz`.
///
/// Poles of the integrand outside the circle are either known (divided
/// out) or further away than the guard ring, so the rule converges
/// geometrically. The node count doubles from 16 up to `max_points`; the
/// count is certified once two successive levels round to the same integer
/// with small residue.
fn residual_count(h: &PackedHessenberg, known: &[Complex64], center: Complex64, radius: f64, max_points: usize) -> Option<i64> {
    let eval = |phi: f64| -> Option<Complex64> {
        let dz = Complex64::from_polar(radius, phi);
        let z = center + dz;
        let mut g = h.shifted_log_derivative(z)?;
        for &lam in known {
            g -= (z - lam).inv();
        }
        Some(g * dz)
    };
    let near_integer = |v: Complex64| -> Option<i64> {
        let r = v.re.round();
        ((v.re - r).abs() <= 0.05 && v.im.abs() <= 0.05 && v.re.is_finite()).then_some(r as i64)
    };
    // nodes offset from the real axis, where the spectrum tends to cluster
    let offset = 0.3 * PI;
    let mut k = 16;
    let mut sum = ZERO;
    for j in 0..k {
        sum += eval(offset + 2.0 * PI * j as f64 / k as f64)?;
    }
    let mut prev = near_integer(sum / k as f64);
    while 2 * k <= max_points.max(32) {
        // the new nodes sit halfway between the old ones
        for j in 0..k {
            sum += eval(offset + 2.0 * PI * (j as f64 + 0.5) / k as f64)?;
        }
        k *= 2;
        let cur = near_integer(sum / k as f64);
        if cur.is_some() && cur == prev {
            return cur;
        }
        if cur.is_none() && k >= 32 {
            // not converging towards an integer: more Ritz pairs are needed
            return None;
        }
        prev = cur;
    }
    None
}

/// All eigenvalues of `h` with `|lambda - center| <= radius`.
///
/// Fails with [`LinalgError::LocalIncomplete`] when the Krylov space
/// reaches `max_krylov` before the count is certified.
pub fn eigenvalues_in_disk(
    h: &PackedHessenberg,
    center: Complex64,
    radius: f64,
    opts: &WindowSolver,
) -> LinalgResult<Vec<Complex64>> {
    let n = h.n();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(LinalgError::InvalidTolerance(radius));
    }
    let hnorm = h.frobenius_norm().max(f64::MIN_POSITIVE);
    // avoid an exactly singular shift
    let mut shift = center;
    let mut lu = HessenbergLu::factor(h, shift);
    let mut nudge = 1e-9 * radius;
    while lu.min_pivot() <= f64::EPSILON * hnorm * 1e-3 {
        shift = center + Complex64::new(nudge, 0.5 * nudge);
        lu = HessenbergLu::factor(h, shift);
        nudge *= 10.0;
        if nudge > radius {
            break;
        }
    }
    let shifted_norm = (hnorm * hnorm + n as f64 * shift.norm_sqr()).sqrt();
    let mut arnoldi = Arnoldi::new(&lu, n);
    let cap = opts.max_krylov.min(n);
    let mut m = opts.initial_krylov.min(cap);
    loop {
        arnoldi.extend_to(m);
        let mut known = Vec::new();
        for (theta, beta_y) in arnoldi.ritz()? {
            if theta == ZERO {
                continue;
            }
            let lambda = shift + theta.inv();
            if (lambda - center).norm() > opts.guard * radius {
                continue;
            }
            let bound = shifted_norm * beta_y / theta.norm();
            if bound <= opts.residual_tol * hnorm {
                known.push(lambda);
            }
        }
        let certified = if arnoldi.breakdown && arnoldi.dim() == n {
            Some(0)
        } else {
            residual_count(h, &known, center, radius, opts.contour_points)
        };
        if certified == Some(0) {
            let mut inside: Vec<Complex64> = known.into_iter().filter(|l| (l - center).norm() <= radius).collect();
            inside.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            return Ok(inside);
        }
        if m >= cap || arnoldi.breakdown {
            return Err(LinalgError::LocalIncomplete(format!(
                "winding {:?} with {} accepted eigenvalues at Krylov dimension {}",
                certified,
                known.len(),
                arnoldi.dim()
            )));
        }
        m = (m + opts.krylov_step).min(cap);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hessenberg_in_place, log_determinant, EigenSolver};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lcg_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        ComplexMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    fn hess(n: usize, seed: u64) -> (ComplexMatrix, PackedHessenberg) {
        let mut m = lcg_matrix(n, seed);
        hessenberg_in_place(&mut m, None).unwrap();
        let p = PackedHessenberg::from_dense(&m).unwrap();
        (m, p)
    }

    #[test]
    fn packed_round_trip() {
        let (m, p) = hess(9, 3);
        assert_eq!(p.to_dense(), m);
        assert_eq!(p.get(5, 3), ZERO);
        assert_eq!(p.get(5, 4), m[(5, 4)]);
    }

    #[test]
    fn streaming_log_det_matches_dense_lu() {
        let (m, p) = hess(12, 5);
        let shift = c(0.1, -0.2);
        let shifted = m.sub(&ComplexMatrix::identity(12).scale(shift)).unwrap();
        let dense = log_determinant(&shifted).unwrap();
        let (la, ph) = p.shifted_log_det(shift);
        assert!((la - dense.log_abs).abs() < 1e-12);
        assert!((ph - dense.phase).norm() < 1e-12);
        let lu = HessenbergLu::factor(&p, shift);
        assert!((lu.determinant() - dense.value()).norm() < 1e-12 * dense.value().norm());
    }

    #[test]
    fn log_derivative_is_resolvent_trace() {
        let (m, p) = hess(20, 8);
        let eig = EigenSolver::new().balance(false).solve(&m).unwrap().eigenvalues;
        for z in [c(0.1, -0.2), c(1.5, 0.7), c(-0.02, 0.3)] {
            let exact: Complex64 = eig.iter().map(|l| (z - l).inv()).sum();
            let d = p.shifted_log_derivative(z).unwrap();
            assert!((d - exact).norm() < 1e-10 * exact.norm().max(1.0), "{d} vs {exact}");
            // central difference of log det
            let h = 1e-6;
            let (a1, p1) = p.shifted_log_det(z + h);
            let (a0, p0) = p.shifted_log_det(z - h);
            let fd = Complex64::new(a1 - a0, (p1 / p0).arg()) / (2.0 * h);
            assert!((d - fd).norm() < 1e-5 * d.norm().max(1.0));
        }
    }

    #[test]
    fn lu_solve_inverts() {
        let (m, p) = hess(15, 11);
        let shift = c(-0.3, 0.05);
        let lu = HessenbergLu::factor(&p, shift);
        let b: Vec<Complex64> = (0..15).map(|i| c(i as f64, 1.0 - i as f64 * 0.5)).collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let shifted = m.sub(&ComplexMatrix::identity(15).scale(shift)).unwrap();
        let back = shifted.matvec(&x).unwrap();
        let err: f64 = back.iter().zip(&b).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-11, "{err:e}");
    }

    #[test]
    fn window_matches_full_spectrum() {
        for seed in 0..6u64 {
            let n = 80;
            let (m, p) = hess(n, 100 + seed);
            let full = EigenSolver::new().balance(false).solve(&m).unwrap().eigenvalues;
            let center = full[(seed as usize * 13) % n] + c(0.01, -0.02);
            let radius = 0.45;
            let mut expected: Vec<Complex64> = full
                .iter()
                .copied()
                .filter(|l| (l - center).norm() <= radius)
                .collect();
            expected.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            // skip configurations with an eigenvalue on the circle itself
            if full.iter().any(|l| ((l - center).norm() - radius).abs() < 1e-6) {
                continue;
            }
            let got = eigenvalues_in_disk(&p, center, radius, &WindowSolver::default()).unwrap();
            assert_eq!(got.len(), expected.len(), "seed {seed}");
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).norm() < 1e-8, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_window() {
        let (_, p) = hess(30, 9);
        let got = eigenvalues_in_disk(&p, c(50.0, 50.0), 0.5, &WindowSolver::default()).unwrap();
        assert!(got.is_empty());
    }
}
