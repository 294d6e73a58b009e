//! Numerical checks of auxiliary matrix-integral identities: tensor
//! commutation, the integral over negative definite Hermitian matrices,
//! a Gaussian integral over strictly upper triangular matrices, the HCIZ
//! formula and Andréief's formula.
//!
//! Monte Carlo checks run in fixed-size batches, one random stream per
//! batch, and reduce batch sums in index order, so results do not depend
//! on the thread count.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::AtomMeasure;
use crate::linalg::{qr_positive, ComplexMatrix, EigenSolver};
use crate::quad::GaussLegendre;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Denominator floor in relative errors.
pub const REL_FLOOR: f64 = 1e-300;
/// Monte Carlo samples per batch.
const BATCH: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    MonteCarlo,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub rel_error: f64,
    pub method: Method,
    pub samples: usize,
    pub mc_std_error: Option<f64>,
    /// Relative tolerance for deterministic verdicts; Monte Carlo verdicts
    /// use three standard errors instead.
    pub tolerance: f64,
}

impl OracleVerdict {
    fn exact(lhs: Complex64, rhs: Complex64, method: Method, samples: usize, tolerance: f64) -> Self {
        Self {
            lhs,
            rhs,
            rel_error: rel_error(lhs, rhs),
            method,
            samples,
            mc_std_error: None,
            tolerance,
        }
    }

    fn monte_carlo(lhs: Complex64, rhs: Complex64, samples: usize, std_error: f64) -> Self {
        Self {
            lhs,
            rhs,
            rel_error: rel_error(lhs, rhs),
            method: Method::MonteCarlo,
            samples,
            mc_std_error: Some(std_error),
            tolerance: 3.0 * std_error / rhs.norm().max(REL_FLOOR),
        }
    }

    /// Absolute deviation measured in standard errors, for Monte Carlo.
    pub fn sigmas(&self) -> Option<f64> {
        self.mc_std_error.map(|s| (self.lhs - self.rhs).norm() / s)
    }

    pub fn passed(&self) -> bool {
        match self.mc_std_error {
            Some(s) => (self.lhs - self.rhs).norm() <= 3.0 * s,
            None => self.rel_error <= self.tolerance,
        }
    }
}

pub fn rel_error(lhs: Complex64, rhs: Complex64) -> f64 {
    (lhs - rhs).norm() / rhs.norm().max(REL_FLOOR)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Mean and standard error of `f` over `samples` draws.
fn mc_mean<F>(samples: usize, seed: u64, f: F) -> (f64, f64)
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    let batches = samples.div_ceil(BATCH);
    let sums: Vec<(f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = RngStream::new(seed, b as u64);
            let count = BATCH.min(samples - b * BATCH);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let v = f(&mut rng);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Tensor commutation

/// The perfect shuffle `I_{p,m}` with `I_{p,m} (A ⊗ B) I_{q,n}^t = B ⊗ A`
/// for `A` of size `p x q` and `B` of size `m x n`.
pub fn perfect_shuffle(p: usize, m: usize) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(p * m, p * m);
    for ia in 0..p {
        for ib in 0..m {
            s[(ib * p + ia, ia * m + ib)] = c(1.0);
        }
    }
    s
}

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_normal())
}

fn dims_ok(d: usize) -> Result<()> {
    if (1..=8).contains(&d) {
        Ok(())
    } else {
        Err(Error::Oracle(format!("tensor dimension {d} outside 1..=8")))
    }
}

pub fn verify_tensor_commutation(p: usize, m: usize, trials: usize, rng: &mut RngStream) -> Result<OracleVerdict> {
    dims_ok(p)?;
    dims_ok(m)?;
    let s = perfect_shuffle(p, m);
    let st = s.transpose();
    // inverse = transpose = I_{m,p}
    let inv_defect = s.matmul(&st)?.sub(&ComplexMatrix::identity(p * m))?.frobenius_norm()
        + perfect_shuffle(m, p).sub(&st)?.frobenius_norm();
    let mut worst = inv_defect;
    let (mut lhs_norm, mut rhs_norm) = (0.0, 0.0);
    for _ in 0..trials.max(1) {
        let q = 1 + (rng.next_u64() % 8) as usize;
        let n = 1 + (rng.next_u64() % 8) as usize;
        let a = random_matrix(p, q, rng);
        let b = random_matrix(m, n, rng);
        let left = s.matmul(&a.kron(&b))?.matmul(&perfect_shuffle(q, n).transpose())?;
        let right = b.kron(&a);
        let dev = left.sub(&right)?.frobenius_norm() / right.frobenius_norm();
        if dev >= worst {
            worst = dev;
            lhs_norm = left.frobenius_norm();
            rhs_norm = right.frobenius_norm();
        }
    }
    let mut v = OracleVerdict::exact(c(lhs_norm), c(rhs_norm), Method::ClosedForm, trials, 1e-14);
    v.rel_error = worst;
    Ok(v)
}

// ---------------------------------------------------------------------------
// Negative definite cone

/// Right-hand side of the cone integral for fixed diagonal `diag`.
pub fn cone_integral_rhs(r0: usize, diag: &[f64]) -> f64 {
    let n = diag.len();
    let lf = |k: usize| libm::lgamma(k as f64 + 1.0);
    let log_mag = (n * (n - 1) / 2) as f64 * PI.ln() - n as f64 * lf(r0 - 1) + (1..=n).map(|k| lf(r0 - k)).sum::<f64>();
    log_mag.exp() * diag.iter().map(|h| h.powi(r0 as i32 - 1)).product::<f64>()
}

/// Leading principal minors of a Hermitian matrix of size at most three.
fn leading_minors(h: &[[Complex64; 3]; 3], n: usize) -> [f64; 3] {
    let d1 = h[0][0].re;
    let d2 = (h[0][0] * h[1][1] - h[0][1] * h[1][0]).re;
    let d3 = if n == 3 {
        (h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1]) - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
            + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]))
            .re
    } else {
        0.0
    };
    [d1, d2, d3]
}

/// Negative definiteness by alternating leading minors, and the determinant.
fn negative_definite_det(h: &[[Complex64; 3]; 3], n: usize) -> Option<f64> {
    let d = leading_minors(h, n);
    for k in 0..n {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        if !(sign * d[k] > 0.0) {
            return None;
        }
    }
    Some(d[n - 1])
}

/// Box Monte Carlo over the off-diagonal entries of `H <= 0` with fixed
/// diagonal `diag`: each `h_ij` is uniform on the square that contains the
/// disk `|h_ij|^2 <= h_ii h_jj`.
pub fn verify_cone_integral(r0: usize, diag: &[f64], samples: usize, seed: u64) -> Result<OracleVerdict> {
    let n = diag.len();
    if !(1..=3).contains(&n) {
        return Err(Error::Oracle(format!("cone integral needs 1 <= n <= 3, got {n}")));
    }
    if r0 < n {
        return Err(Error::Oracle(format!("cone integral needs r0 >= n, got r0 = {r0}, n = {n}")));
    }
    if diag.iter().any(|&h| !(h < 0.0)) {
        return Err(Error::Oracle("cone integral needs a negative diagonal".into()));
    }
    let rhs = cone_integral_rhs(r0, diag);
    let power = (r0 - n) as i32;
    if n == 1 {
        return Ok(OracleVerdict::exact(c(diag[0].powi(power)), c(rhs), Method::ClosedForm, 0, 1e-14));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let half: Vec<f64> = pairs.iter().map(|&(i, j)| (diag[i] * diag[j]).sqrt()).collect();
    let volume: f64 = half.iter().map(|r| 4.0 * r * r).product();
    let (mean, se) = mc_mean(samples, seed, |rng| {
        let mut h = [[Complex64::new(0.0, 0.0); 3]; 3];
        for i in 0..n {
            h[i][i] = c(diag[i]);
        }
        for (&(i, j), &r) in pairs.iter().zip(&half) {
            let z = Complex64::new(rng.uniform_in(-r, r), rng.uniform_in(-r, r));
            h[i][j] = z;
            h[j][i] = z.conj();
        }
        negative_definite_det(&h, n).map_or(0.0, |d| d.powi(power))
    });
    Ok(OracleVerdict::monte_carlo(c(mean * volume), c(rhs), samples, se * volume))
}

// ---------------------------------------------------------------------------
// Triangular Gaussian integral

/// Per-slot data of the triangular Gaussian integral: the exponent is
/// `-v^* H v` in `v = (T_ij, g_2, ..., g_t)`.
#[derive(Debug, Clone)]
struct SlotForm {
    t: usize,
    tau: f64,
    /// `H`, row-major `t x t`.
    h: Vec<Complex64>,
    kappa: f64,
    s: Vec<f64>,
    f: Vec<f64>,
    w: Vec<Complex64>,
}

impl SlotForm {
    fn new(nu: &AtomMeasure, z0: Complex64, tau: f64) -> Result<Self> {
        let atoms = nu.atoms();
        let t = atoms.len();
        let f: Vec<f64> = atoms.iter().map(|a| (z0 - a.a).norm_sqr()).collect();
        if f.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Oracle("z0 coincides with an atom".into()));
        }
        let constraint: f64 = atoms.iter().zip(&f).map(|(a, fa)| tau * a.c / fa).sum();
        if (constraint - 1.0).abs() > 1e-10 {
            return Err(Error::Oracle(format!(
                "sum tau c_a / f_a = {constraint} differs from 1; z0 is not on the boundary"
            )));
        }
        let a1 = atoms[0].a;
        let kappa = f[0] * f[0] / (tau * tau * atoms[0].c);
        let s: Vec<f64> = (0..t).map(|k| if k == 0 { 1.0 } else { (tau * atoms[k].c / f[k]).sqrt() }).collect();
        let w: Vec<Complex64> = (0..t)
            .map(|k| if k == 0 { -(a1 - z0) } else { (atoms[k].a - a1) * s[k] })
            .collect();
        let mut h = vec![Complex64::new(0.0, 0.0); t * t];
        for i in 0..t {
            for j in 0..t {
                // kappa |u.v|^2 with real u = s, minus |w.v|^2 / tau
                let mut x = c(kappa * s[i] * s[j]) - w[i].conj() * w[j] / tau;
                if i == j && i > 0 {
                    x += f[i] / tau;
                }
                h[i * t + j] = x;
            }
        }
        Ok(Self { t, tau, h, kappa, s, f, w })
    }

    /// The `g`-block `M` of `H`.
    fn m_block(&self) -> Vec<Complex64> {
        let k = self.t - 1;
        let mut m = vec![Complex64::new(0.0, 0.0); k * k];
        for i in 0..k {
            for j in 0..k {
                m[i * k + j] = self.h[(i + 1) * self.t + j + 1];
            }
        }
        m
    }

    /// Exponent evaluated directly from its defining expression.
    fn exponent(&self, tij: Complex64, g: &[Complex64]) -> f64 {
        let mut first = tij;
        let mut third = self.w[0] * tij;
        let mut diag = 0.0;
        for (k, gk) in g.iter().enumerate() {
            first += self.s[k + 1] * gk;
            third += self.w[k + 1] * gk;
            diag += self.f[k + 1] / self.tau * gk.norm_sqr();
        }
        -self.kappa * first.norm_sqr() - diag + third.norm_sqr() / self.tau
    }
}

/// Lower Cholesky factor of a Hermitian `k x k` matrix (row-major), or
/// `None` when it is not positive definite.
fn cholesky(m: &[Complex64], k: usize) -> Option<Vec<Complex64>> {
    let mut l = vec![Complex64::new(0.0, 0.0); k * k];
    for j in 0..k {
        let mut d = m[j * k + j].re;
        for p in 0..j {
            d -= l[j * k + p].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[j * k + j] = c(d);
        for i in j + 1..k {
            let mut x = m[i * k + j];
            for p in 0..j {
                x -= l[i * k + p] * l[j * k + p].conj();
            }
            l[i * k + j] = x / d;
        }
    }
    Some(l)
}

/// Solves `L L^* x = b`.
fn cholesky_solve(l: &[Complex64], k: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            let v = l[i * k + p] * y[p];
            y[i] -= v;
        }
        y[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            let v = l[p * k + i].conj() * y[p];
            y[i] -= v;
        }
        y[i] /= l[i * k + i];
    }
    y
}

/// Strictly upper triangular entries of a random `n x n` matrix.
pub fn random_strict_upper(n: usize, rng: &mut RngStream) -> Vec<Complex64> {
    (0..n * (n - 1) / 2).map(|_| rng.complex_normal()).collect()
}

/// Right-hand side of the triangular Gaussian integral.
pub fn triangular_gaussian_rhs(n: usize, nu: &AtomMeasure, z0: Complex64, tau: f64) -> f64 {
    let atoms = nu.atoms();
    let t = atoms.len() as f64;
    let m = (n * (n - 1) / 2) as f64;
    let f: Vec<f64> = atoms.iter().map(|a| (z0 - a.a).norm_sqr()).collect();
    let p0: Complex64 = atoms.iter().zip(&f).map(|(a, fa)| a.c * (a.a - z0) / (fa * fa)).sum();
    let inner = f[0] / atoms[0].c * f.iter().product::<f64>() * p0.norm_sqr();
    tau.powf(m * (t - 2.0)) * inner.powf(-m) * PI.powf(m * (t - 1.0))
}

/// Closed-form left-hand side for a fixed strictly upper triangular `T`
/// (entries in row order), by completing the square slot by slot.
pub fn triangular_gaussian_lhs(n: usize, nu: &AtomMeasure, z0: Complex64, tau: f64, t_entries: &[Complex64]) -> Result<f64> {
    let slots = n * (n - 1) / 2;
    if t_entries.len() != slots {
        return Err(Error::Oracle(format!("T needs {slots} strictly upper entries")));
    }
    let form = SlotForm::new(nu, z0, tau)?;
    let k = form.t - 1;
    let t_norm2: f64 = t_entries.iter().map(|x| x.norm_sqr()).sum();
    if k == 0 {
        return Ok((-form.h[0].re * t_norm2).exp());
    }
    let m = form.m_block();
    let l = cholesky(&m, k)
        .ok_or_else(|| Error::Oracle("quadratic form in G is not negative definite; atoms and z0 are inconsistent".into()))?;
    let det_m: f64 = (0..k).map(|i| l[i * k + i].re.powi(2)).product();
    let hgt: Vec<Complex64> = (0..k).map(|i| form.h[(i + 1) * form.t]).collect();
    let sol = cholesky_solve(&l, k, &hgt);
    let quad: Complex64 = hgt.iter().zip(&sol).map(|(a, b)| a.conj() * b).sum();
    let schur = form.h[0].re - quad.re;
    Ok((PI.powi(k as i32) / det_m).powi(slots as i32) * (-schur * t_norm2).exp())
}

/// Closed-form check of the triangular Gaussian integral. The left side
/// is evaluated at `T = 0` and at `t_draws` random `T`; the verdict fails
/// unless all of them agree with each other to `1e-10`.
pub fn verify_triangular_gaussian(
    n: usize,
    nu: &AtomMeasure,
    z0: Complex64,
    tau: f64,
    t_draws: usize,
    rng: &mut RngStream,
) -> Result<OracleVerdict> {
    if !(2..=3).contains(&n) {
        return Err(Error::Oracle(format!("triangular Gaussian needs n in 2..=3, got {n}")));
    }
    let base = triangular_gaussian_lhs(n, nu, z0, tau, &vec![Complex64::new(0.0, 0.0); n * (n - 1) / 2])?;
    let mut spread: f64 = 0.0;
    for _ in 0..t_draws {
        let t = random_strict_upper(n, rng);
        let v = triangular_gaussian_lhs(n, nu, z0, tau, &t)?;
        spread = spread.max((v - base).abs() / base.abs());
    }
    let rhs = triangular_gaussian_rhs(n, nu, z0, tau);
    let mut v = OracleVerdict::exact(c(base), c(rhs), Method::ClosedForm, t_draws, 1e-8);
    if spread > 1e-10 {
        v.rel_error = v.rel_error.max(spread).max(f64::MIN_POSITIVE);
        v.tolerance = v.tolerance.min(1e-10);
    }
    Ok(v)
}

/// Spread of the closed-form left side over `draws` random `T`, relative
/// to `T = 0`.
pub fn triangular_t_spread(n: usize, nu: &AtomMeasure, z0: Complex64, tau: f64, draws: usize, rng: &mut RngStream) -> Result<f64> {
    let base = triangular_gaussian_lhs(n, nu, z0, tau, &vec![Complex64::new(0.0, 0.0); n * (n - 1) / 2])?;
    let mut spread: f64 = 0.0;
    for _ in 0..draws {
        let v = triangular_gaussian_lhs(n, nu, z0, tau, &random_strict_upper(n, rng))?;
        spread = spread.max((v - base).abs() / base.abs());
    }
    Ok(spread)
}

/// Monte Carlo check of the triangular Gaussian integral at a fixed `T`.
/// The integrand is evaluated from its defining expression; the `G`
/// entries are drawn from a centred complex Gaussian with precision
/// `M / 1.5`, which keeps the weight variance finite.
pub fn verify_triangular_gaussian_mc(
    n: usize,
    nu: &AtomMeasure,
    z0: Complex64,
    tau: f64,
    t_entries: &[Complex64],
    samples: usize,
    seed: u64,
) -> Result<OracleVerdict> {
    let slots = n * (n - 1) / 2;
    if t_entries.len() != slots {
        return Err(Error::Oracle(format!("T needs {slots} strictly upper entries")));
    }
    let form = SlotForm::new(nu, z0, tau)?;
    let k = form.t - 1;
    let rhs = triangular_gaussian_rhs(n, nu, z0, tau);
    if k == 0 {
        let lhs = triangular_gaussian_lhs(n, nu, z0, tau, t_entries)?;
        return Ok(OracleVerdict::exact(c(lhs), c(rhs), Method::ClosedForm, 0, 1e-8));
    }
    const WIDEN: f64 = 1.5;
    let m = form.m_block();
    let l = cholesky(&m, k).ok_or_else(|| Error::Oracle("quadratic form in G is not negative definite".into()))?;
    let log_det_m: f64 = (0..k).map(|i| 2.0 * l[i * k + i].re.ln()).sum();
    // log density of the proposal is log det(M / WIDEN) - k log pi - g^* M g / WIDEN
    let log_norm = log_det_m - k as f64 * WIDEN.ln() - k as f64 * PI.ln();
    let (mean, se) = mc_mean(samples, seed, |rng| {
        let mut log_w = 0.0;
        for &tij in t_entries {
            let xi: Vec<Complex64> = (0..k).map(|_| rng.complex_normal() * WIDEN.sqrt()).collect();
            // g = L^{-*} xi
            let mut g = xi;
            for i in (0..k).rev() {
                for p in i + 1..k {
                    let v = l[p * k + i].conj() * g[p];
                    g[i] -= v;
                }
                g[i] /= l[i * k + i];
            }
            let mut gmg = 0.0;
            for i in 0..k {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..k {
                    row += m[i * k + j] * g[j];
                }
                gmg += (g[i].conj() * row).re;
            }
            log_w += form.exponent(tij, &g) - (log_norm - gmg / WIDEN);
        }
        log_w.exp()
    });
    Ok(OracleVerdict::monte_carlo(c(mean), c(rhs), samples, se))
}

// ---------------------------------------------------------------------------
// HCIZ

/// `prod_{i<n} i! det[e^{a_i b_j}] / (Delta(a) Delta(b))` for real
/// diagonals with distinct entries.
pub fn hciz_rhs(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len();
    if b.len() != n || n == 0 {
        return Err(Error::Oracle("HCIZ diagonals must have equal positive length".into()));
    }
    let vandermonde = |x: &[f64]| -> f64 {
        let mut v = 1.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                v *= x[j] - x[i];
            }
        }
        v
    };
    let (va, vb) = (vandermonde(a), vandermonde(b));
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Oracle("HCIZ needs distinct diagonal entries".into()));
    }
    let mut e: Vec<f64> = Vec::with_capacity(n * n);
    for ai in a {
        for bj in b {
            e.push((ai * bj).exp());
        }
    }
    let factorials: f64 = (1..n).map(|i| libm::tgamma(i as f64 + 1.0)).product();
    Ok(factorials * real_det(&mut e, n) / (va * vb))
}

/// Haar average of `exp Tr(A U B U^*)` for diagonal `A`, `B`.
pub fn verify_hciz(a: &[f64], b: &[f64], samples: usize, seed: u64) -> Result<OracleVerdict> {
    let n = a.len();
    if !(1..=3).contains(&n) {
        return Err(Error::Oracle(format!("HCIZ check needs n in 1..=3, got {n}")));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Ok(OracleVerdict::exact(c(1.0), c(1.0), Method::ClosedForm, 0, 0.0));
    }
    let rhs = hciz_rhs(a, b)?;
    let (mean, se) = mc_mean(samples, seed, |rng| {
        let g = random_matrix(n, n, rng);
        let (u, _) = qr_positive(&g).expect("square input");
        let mut tr = 0.0;
        for i in 0..n {
            for j in 0..n {
                tr += a[i] * b[j] * u[(i, j)].norm_sqr();
            }
        }
        tr.exp()
    });
    Ok(OracleVerdict::monte_carlo(c(mean), c(rhs), samples, se))
}

// ---------------------------------------------------------------------------
// Andréief

/// Catalog function `x^power e^{rate x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalogFn {
    pub power: u32,
    pub rate: f64,
}

impl CatalogFn {
    pub fn monomial(k: u32) -> Self {
        Self { power: k, rate: 0.0 }
    }

    pub fn exponential(rate: f64) -> Self {
        Self { power: 0, rate }
    }

    pub fn eval(&self, x: f64) -> f64 {
        x.powi(self.power as i32) * (self.rate * x).exp()
    }

    fn times(&self, other: &Self) -> Self {
        Self {
            power: self.power + other.power,
            rate: self.rate + other.rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Lebesgue measure on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Standard normal probability measure.
    Gaussian,
}

fn double_factorial_odd(j: u32) -> f64 {
    // (j-1)!! for even j
    (1..j).step_by(2).map(|x| x as f64).product()
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫ x^p e^{c x} dmu` in closed form.
pub fn catalog_integral(f: CatalogFn, mu: Measure) -> f64 {
    let (p, cr) = (f.power, f.rate);
    match mu {
        Measure::Gaussian => {
            // E[(X + c)^p] e^{c^2 / 2}
            let mut s = 0.0;
            for j in (0..=p).step_by(2) {
                s += binom(p, j) * cr.powi((p - j) as i32) * double_factorial_odd(j);
            }
            (cr * cr / 2.0).exp() * s
        }
        Measure::Uniform { lo, hi } => {
            let mono = |q: u32| (hi.powi(q as i32 + 1) - lo.powi(q as i32 + 1)) / (q + 1) as f64;
            if cr == 0.0 {
                return mono(p);
            }
            let scale = lo.abs().max(hi.abs()) * cr.abs();
            if scale < 0.5 {
                // power series in c
                let mut s = 0.0;
                let mut coef = 1.0;
                for m in 0..60u32 {
                    let term = coef * mono(p + m);
                    s += term;
                    if term.abs() < 1e-18 * s.abs() {
                        break;
                    }
                    coef *= cr / (m + 1) as f64;
                }
                return s;
            }
            // integration by parts upward from p = 0
            let mut i = ((cr * hi).exp() - (cr * lo).exp()) / cr;
            for q in 1..=p {
                let bound = hi.powi(q as i32) * (cr * hi).exp() - lo.powi(q as i32) * (cr * lo).exp();
                i = bound / cr - q as f64 / cr * i;
            }
            i
        }
    }
}

/// Nodes and weights of a rule for `mu`.
pub fn measure_rule(mu: Measure, order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match mu {
        Measure::Uniform { lo, hi } => {
            if !(hi > lo) {
                return Err(Error::Oracle("uniform measure needs lo < hi".into()));
            }
            let gl = GaussLegendre::new(order);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            Ok((
                gl.nodes.iter().map(|x| mid + half * x).collect(),
                gl.weights.iter().map(|w| half * w).collect(),
            ))
        }
        Measure::Gaussian => gauss_hermite(order),
    }
}

/// Orthonormal probabilists' Hermite values `phi_0..phi_{n}` at `x`.
fn hermite_orthonormal(n: usize, x: f64) -> Vec<f64> {
    let mut v = vec![1.0; n + 1];
    if n >= 1 {
        v[1] = x;
    }
    for k in 1..n {
        v[k + 1] = (x * v[k] - (k as f64).sqrt() * v[k - 1]) / ((k + 1) as f64).sqrt();
    }
    v
}

/// Gauss rule for the standard normal measure: Golub-Welsch nodes from the
/// Jacobi matrix, polished by Newton on `phi_n`, with Christoffel weights.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Oracle("empty quadrature rule".into()));
    }
    let jac = ComplexMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            c((i.max(j) as f64).sqrt())
        } else {
            c(0.0)
        }
    });
    let mut nodes: Vec<f64> = EigenSolver::new().solve(&jac)?.eigenvalues.iter().map(|z| z.re).collect();
    nodes.sort_by(f64::total_cmp);
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let v = hermite_orthonormal(n, *x);
            // phi_n' = sqrt(n) phi_{n-1}
            let dx = v[n] / ((n as f64).sqrt() * v[n - 1]);
            *x -= dx;
        }
        let v = hermite_orthonormal(n - 1, *x);
        weights.push(1.0 / v.iter().map(|p| p * p).sum::<f64>());
    }
    Ok((nodes, weights))
}

/// Determinant of a real row-major `n x n` matrix by partial pivoting;
/// destroys the input.
fn real_det(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
        if a[p * n + k] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        let piv = a[k * n + k];
        det *= piv;
        for i in k + 1..n {
            let r = a[i * n + k] / piv;
            for j in k..n {
                a[i * n + j] -= r * a[k * n + j];
            }
        }
    }
    det
}

/// Quadrature order used for the tensor left-hand side.
pub const ANDREIEF_ORDER: usize = 40;

/// `∫ det[f_i(x_j)] det[g_i(x_j)] prod dmu(x_j)` by tensor quadrature
/// against `n! det[∫ f_i g_j dmu]` with the Gram entries in closed form.
pub fn verify_andreief(f: &[CatalogFn], g: &[CatalogFn], mu: Measure) -> Result<OracleVerdict> {
    let n = f.len();
    if n == 0 || n > 4 || g.len() != n {
        return Err(Error::Oracle(format!(
            "Andréief check needs two families of equal size 1..=4, got {} and {}",
            f.len(),
            g.len()
        )));
    }
    let (nodes, weights) = measure_rule(mu, ANDREIEF_ORDER)?;
    let q = nodes.len();
    let fv: Vec<Vec<f64>> = f.iter().map(|fi| nodes.iter().map(|&x| fi.eval(x)).collect()).collect();
    let gv: Vec<Vec<f64>> = g.iter().map(|gi| nodes.iter().map(|&x| gi.eval(x)).collect()).collect();
    let total = q.pow(n as u32);
    let lhs: f64 = (0..total)
        .into_par_iter()
        .with_min_len(4096)
        .map(|mut idx| {
            let mut pick = [0usize; 4];
            let mut w = 1.0;
            for slot in pick.iter_mut().take(n) {
                *slot = idx % q;
                idx /= q;
                w *= weights[*slot];
            }
            let mut a = [0.0; 16];
            let mut b = [0.0; 16];
            for i in 0..n {
                for j in 0..n {
                    a[i * n + j] = fv[i][pick[j]];
                    b[i * n + j] = gv[i][pick[j]];
                }
            }
            w * real_det(&mut a[..n * n], n) * real_det(&mut b[..n * n], n)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    let mut gram: Vec<f64> = Vec::with_capacity(n * n);
    for fi in f {
        for gj in g {
            gram.push(catalog_integral(fi.times(gj), mu));
        }
    }
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    let rhs = factorial * real_det(&mut gram, n);
    let mut v = OracleVerdict::exact(c(lhs), c(rhs), Method::Quadrature, total, 1e-10);
    // degenerate families: both sides vanish up to roundoff
    if rhs.abs() < 1e-13 && lhs.abs() < 1e-13 {
        v.rel_error = (lhs - rhs).abs();
    }
    Ok(v)
}

/// Built-in Andréief cases: `(name, f, g, measure)`.
pub fn andreief_catalog() -> Vec<(&'static str, Vec<CatalogFn>, Vec<CatalogFn>, Measure)> {
    let mono = CatalogFn::monomial;
    let expo = CatalogFn::exponential;
    let unit = Measure::Uniform { lo: 0.0, hi: 1.0 };
    vec![
        ("n1-uniform", vec![mono(2)], vec![expo(1.0)], unit),
        ("n2-monomials-uniform", vec![mono(0), mono(1)], vec![mono(0), mono(1)], unit),
        ("n2-mixed-uniform", vec![mono(1), expo(1.0)], vec![expo(-1.0), mono(2)], Measure::Uniform { lo: -1.0, hi: 2.0 }),
        ("n2-mixed-gaussian", vec![mono(0), expo(0.5)], vec![mono(1), expo(-1.0)], Measure::Gaussian),
        ("n2-degenerate", vec![mono(1), mono(1)], vec![mono(0), mono(2)], unit),
        ("n3-gaussian", vec![mono(0), mono(1), mono(2)], vec![mono(2), expo(1.0), mono(0)], Measure::Gaussian),
        ("n4-uniform", vec![mono(0), mono(1), expo(1.0), mono(3)], vec![mono(2), expo(-1.0), mono(0), mono(1)], unit),
    ]
}

// ---------------------------------------------------------------------------
// Default suite

/// Names accepted by [`run_suite`].
pub const SUITE: [&str; 5] = ["tensor", "cone", "triangular", "hciz", "andreief"];

/// One line of the verify report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub group: String,
    pub case: String,
    pub verdict: Option<OracleVerdict>,
    pub error: Option<String>,
}

impl SuiteEntry {
    fn from(group: &str, case: String, r: Result<OracleVerdict>) -> Self {
        match r {
            Ok(v) => Self {
                group: group.into(),
                case,
                verdict: Some(v),
                error: None,
            },
            Err(e) => Self {
                group: group.into(),
                case,
                verdict: None,
                error: Some(e.to_string()),
            },
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.passed())
    }

    pub fn line(&self) -> String {
        let head = format!("{}/{}", self.group, self.case);
        match (&self.verdict, &self.error) {
            (Some(v), _) => {
                let status = if v.passed() { "PASS" } else { "FAIL" };
                let extra = match v.mc_std_error {
                    Some(s) => format!(" mc_std_error={s:.3e} sigmas={:.2}", v.sigmas().unwrap_or(0.0)),
                    None => format!(" tol={:.0e}", v.tolerance),
                };
                format!(
                    "{status} {head}: lhs={:.12e} rhs={:.12e} rel_error={:.3e} method={:?} samples={}{extra}",
                    v.lhs.re, v.rhs.re, v.rel_error, v.method, v.samples
                )
            }
            (None, Some(e)) => format!("FAIL {head}: {e}"),
            _ => format!("FAIL {head}: no verdict"),
        }
    }
}

/// Two symmetric atoms at `±1` with weight `1/2`, and the boundary point
/// nearest `0.5 + 0.8i` for `tau = 1`.
pub fn symmetric_pair_edge() -> Result<(AtomMeasure, Complex64)> {
    let nu = AtomMeasure::from_pairs(&[(c(-1.0), 0.5), (c(1.0), 0.5)])?;
    let e = crate::geometry::refine_to_boundary(&nu, 1.0, Complex64::new(0.5, 0.8))?;
    Ok((nu, e.z0))
}

/// Runs the default checks. `only` restricts to one group; `samples`
/// overrides the Monte Carlo sample count.
pub fn run_suite(only: Option<&str>, samples: Option<usize>, seed: u64) -> Result<Vec<SuiteEntry>> {
    if let Some(name) = only {
        if !SUITE.contains(&name) {
            return Err(Error::Config(format!("unknown oracle '{name}'; expected one of {}", SUITE.join(", "))));
        }
    }
    let want = |g: &str| only.is_none_or(|o| o == g);
    let mc = samples.unwrap_or(1_000_000);
    let mut out = Vec::new();
    if want("tensor") {
        let mut rng = RngStream::new(seed, 1);
        for p in 1..=4 {
            for m in 1..=4 {
                out.push(SuiteEntry::from("tensor", format!("p{p}-m{m}"), verify_tensor_commutation(p, m, 4, &mut rng)));
            }
        }
    }
    if want("cone") {
        out.push(SuiteEntry::from("cone", "n2-r3-diag(-1,-1)".into(), verify_cone_integral(3, &[-1.0, -1.0], mc, seed ^ 0xc0)));
        out.push(SuiteEntry::from("cone", "n2-r2-diag(-2,-1)".into(), verify_cone_integral(2, &[-2.0, -1.0], mc, seed ^ 0xc1)));
        out.push(SuiteEntry::from("cone", "n1-r4".into(), verify_cone_integral(4, &[-1.5], mc, seed)));
    }
    if want("triangular") {
        match symmetric_pair_edge() {
            Ok((nu, z0)) => {
                let mut rng = RngStream::new(seed, 3);
                out.push(SuiteEntry::from(
                    "triangular",
                    "n2-closed-form".into(),
                    verify_triangular_gaussian(2, &nu, z0, 1.0, 10, &mut rng),
                ));
                out.push(SuiteEntry::from(
                    "triangular",
                    "n3-closed-form".into(),
                    verify_triangular_gaussian(3, &nu, z0, 1.0, 10, &mut rng),
                ));
                let t = random_strict_upper(2, &mut rng);
                out.push(SuiteEntry::from(
                    "triangular",
                    "n2-monte-carlo".into(),
                    verify_triangular_gaussian_mc(2, &nu, z0, 1.0, &t, mc.min(200_000), seed ^ 0x7a),
                ));
            }
            Err(e) => out.push(SuiteEntry::from("triangular", "edge".into(), Err(e))),
        }
    }
    if want("hciz") {
        out.push(SuiteEntry::from("hciz", "n2-diag(0,1)-diag(0,1)".into(), verify_hciz(&[0.0, 1.0], &[0.0, 1.0], mc, seed ^ 0x4c)));
        out.push(SuiteEntry::from(
            "hciz",
            "n3".into(),
            verify_hciz(&[-0.5, 0.2, 0.7], &[0.0, 0.4, 1.0], mc.min(300_000), seed ^ 0x4d),
        ));
    }
    if want("andreief") {
        for (name, f, g, mu) in andreief_catalog() {
            out.push(SuiteEntry::from("andreief", name.into(), verify_andreief(&f, &g, mu)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_is_a_transposed_inverse() {
        for (p, m) in [(1, 1), (2, 3), (4, 2), (8, 8)] {
            let s = perfect_shuffle(p, m);
            assert_eq!(s.transpose(), perfect_shuffle(m, p));
            let prod = s.matmul(&s.transpose()).unwrap();
            assert_eq!(prod, ComplexMatrix::identity(p * m));
        }
        assert_eq!(perfect_shuffle(1, 1), ComplexMatrix::identity(1));
        let mut rng = RngStream::new(5, 0);
        let v = verify_tensor_commutation(2, 3, 10, &mut rng).unwrap();
        assert!(v.rel_error <= 1e-14 && v.passed(), "{v:?}");
        assert!(verify_tensor_commutation(9, 1, 1, &mut rng).is_err());
    }

    #[test]
    fn cone_rhs_by_hand() {
        assert!((cone_integral_rhs(3, &[-1.0, -1.0]) - PI / 2.0).abs() < 1e-14);
        assert!((cone_integral_rhs(2, &[-2.0, -1.0]) - 2.0 * PI).abs() < 1e-14);
        assert!((cone_integral_rhs(5, &[-0.7]) - 0.7f64.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn cone_monte_carlo_small() {
        let v = verify_cone_integral(2, &[-2.0, -1.0], 100_000, 11).unwrap();
        assert!(v.passed(), "{v:?}");
        let v = verify_cone_integral(3, &[-1.0, -0.5, -2.0], 200_000, 12).unwrap();
        assert!(v.sigmas().unwrap() < 4.0, "{v:?}");
        assert!(verify_cone_integral(2, &[-1.0, -1.0, -1.0, -1.0], 10, 1).is_err());
        assert!(verify_cone_integral(1, &[-1.0, -1.0], 10, 1).is_err());
    }

    #[test]
    fn minors_agree_with_eigenvalues() {
        let mut rng = RngStream::new(2, 2);
        for _ in 0..200 {
            let mut h = [[Complex64::new(0.0, 0.0); 3]; 3];
            for i in 0..3 {
                h[i][i] = c(-rng.uniform_in(0.2, 2.0));
                for j in i + 1..3 {
                    let z = Complex64::new(rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0));
                    h[i][j] = z;
                    h[j][i] = z.conj();
                }
            }
            let m = ComplexMatrix::from_fn(3, 3, |i, j| h[i][j]);
            let eig = EigenSolver::new().solve(&m).unwrap().eigenvalues;
            let neg = eig.iter().all(|e| e.re < -1e-12);
            assert_eq!(negative_definite_det(&h, 3).is_some(), neg, "{eig:?}");
        }
    }

    #[test]
    fn hciz_by_hand() {
        assert!((hciz_rhs(&[0.0, 1.0], &[0.0, 1.0]).unwrap() - (std::f64::consts::E - 1.0)).abs() < 1e-14);
        // swapping a1 and a2 leaves the value unchanged
        let x = hciz_rhs(&[0.3, -0.4, 1.1], &[0.0, 0.5, 2.0]).unwrap();
        let y = hciz_rhs(&[-0.4, 0.3, 1.1], &[0.0, 0.5, 2.0]).unwrap();
        assert!((x - y).abs() < 1e-13 * x.abs());
        assert!(hciz_rhs(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        let v = verify_hciz(&[0.0, 0.0], &[0.0, 1.0], 10, 1).unwrap();
        assert_eq!((v.lhs, v.rhs), (c(1.0), c(1.0)));
        let v = verify_hciz(&[0.0, 1.0], &[0.0, 1.0], 100_000, 3).unwrap();
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite(20).unwrap();
        let moment = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert!((moment(2) - 1.0).abs() < 1e-13);
        assert!((moment(8) - 105.0).abs() < 1e-10);
        let e: f64 = x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum();
        assert!((e - 0.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn catalog_integrals_closed_form() {
        let unit = Measure::Uniform { lo: 0.0, hi: 1.0 };
        assert!((catalog_integral(CatalogFn::monomial(2), unit) - 1.0 / 3.0).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!((catalog_integral(CatalogFn::exponential(1.0), unit) - (e - 1.0)).abs() < 1e-14);
        // ∫_0^1 x e^x = 1
        assert!((catalog_integral(CatalogFn { power: 1, rate: 1.0 }, unit) - 1.0).abs() < 1e-14);
        // small rate takes the series branch
        let s = catalog_integral(CatalogFn { power: 1, rate: 0.1 }, unit);
        let exact = (0.1f64.exp() * (0.1 - 1.0) + 1.0) / 0.01;
        assert!((s - exact).abs() < 1e-13);
        // E[X^2 e^X] = e^{1/2} (1 + 1)
        let g = catalog_integral(CatalogFn { power: 2, rate: 1.0 }, Measure::Gaussian);
        assert!((g - 2.0 * 0.5f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn andreief_examples() {
        let unit = Measure::Uniform { lo: 0.0, hi: 1.0 };
        let fg = [CatalogFn::monomial(0), CatalogFn::monomial(1)];
        let v = verify_andreief(&fg, &fg, unit).unwrap();
        assert!((v.rhs.re - 1.0 / 6.0).abs() < 1e-15, "{v:?}");
        assert!(v.rel_error < 1e-10);
        let one = [CatalogFn::exponential(0.3)];
        let v = verify_andreief(&one, &one, Measure::Gaussian).unwrap();
        assert!(v.rel_error < 1e-12);
        let same = [CatalogFn::monomial(1), CatalogFn::monomial(1)];
        let v = verify_andreief(&same, &fg, unit).unwrap();
        assert!(v.lhs.re.abs() < 1e-14 && v.rhs.re.abs() < 1e-14 && v.passed());
        assert!(verify_andreief(&fg, &one, unit).is_err());
    }

    #[test]
    fn triangular_closed_form() {
        let (nu, z0) = symmetric_pair_edge().unwrap();
        let mut rng = RngStream::new(9, 0);
        for n in [2, 3] {
            let v = verify_triangular_gaussian(n, &nu, z0, 1.0, 10, &mut rng).unwrap();
            assert!(v.rel_error <= 1e-8, "n = {n}: {v:?}");
            assert!(triangular_t_spread(n, &nu, z0, 1.0, 10, &mut rng).unwrap() <= 1e-10);
        }
        // off the boundary the constraint check fires
        assert!(verify_triangular_gaussian(2, &nu, c(0.3), 1.0, 1, &mut rng).is_err());
    }

    #[test]
    fn triangular_three_atoms_and_tau() {
        let nu = AtomMeasure::from_pairs(&[(c(0.0), 0.5), (Complex64::new(2.0, 0.5), 0.3), (c(-1.5), 0.2)]).unwrap();
        let tau = 0.8;
        let e = crate::geometry::refine_to_boundary(&nu, tau, Complex64::new(0.4, 1.0)).unwrap();
        let mut rng = RngStream::new(4, 0);
        let v = verify_triangular_gaussian(2, &nu, e.z0, tau, 10, &mut rng).unwrap();
        assert!(v.rel_error <= 1e-8, "{v:?}");
        // rescaling atoms and z0 by s and tau by |s|^2
        let s = Complex64::new(1.3, -0.4);
        let scaled = AtomMeasure::from_pairs(&nu.atoms().iter().map(|a| (a.a * s, a.c)).collect::<Vec<_>>()).unwrap();
        let tau2 = tau * s.norm_sqr();
        let w = verify_triangular_gaussian(2, &scaled, e.z0 * s, tau2, 3, &mut rng).unwrap();
        let ratio_l = w.lhs.re / v.lhs.re;
        let ratio_r = w.rhs.re / v.rhs.re;
        assert!((ratio_l / ratio_r - 1.0).abs() < 1e-8, "{ratio_l} {ratio_r}");
    }

    #[test]
    fn triangular_monte_carlo() {
        let (nu, z0) = symmetric_pair_edge().unwrap();
        let mut rng = RngStream::new(21, 0);
        let t = random_strict_upper(2, &mut rng);
        let v = verify_triangular_gaussian_mc(2, &nu, z0, 1.0, &t, 100_000, 8).unwrap();
        assert!(v.passed(), "{v:?}");
    }

    #[test]
    fn mc_reduction_is_deterministic() {
        let a = verify_hciz(&[0.0, 1.0], &[0.0, 1.0], 40_000, 17).unwrap();
        let b = verify_hciz(&[0.0, 1.0], &[0.0, 1.0], 40_000, 17).unwrap();
        assert_eq!(a, b);
    }
}
