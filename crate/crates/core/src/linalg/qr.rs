use num_complex::Complex64;

use super::{balance, hessenberg_in_place, ComplexMatrix, Givens, LinalgError, LinalgResult, ZERO};

/// Default deflation tolerance: eight machine epsilons.
pub const DEFAULT_TOL: f64 = 2.2e-16 * 8.0;
pub const DEFAULT_MAX_SWEEPS: usize = 30;

/// Eigenvalues of a square matrix together with the Frobenius norm of the
/// Schur reconstruction error, when it was requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub residual: Option<f64>,
}

/// Complex Schur factorisation `M = Q T Q*`.
#[derive(Debug, Clone)]
pub struct Schur {
    pub q: ComplexMatrix,
    pub t: ComplexMatrix,
}

impl Schur {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.t.diagonal()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.q
            .matmul(&self.t)
            .and_then(|qt| qt.matmul(&self.q.adjoint()))
            .expect("square factors")
    }
}

/// Hessenberg reduction followed by single-shift complex QR with
/// Wilkinson shifts.
#[derive(Debug, Clone, Copy)]
pub struct EigenSolver {
    pub max_sweeps: usize,
    pub tol: f64,
    pub balance: bool,
    pub schur_residual: bool,
}

impl Default for EigenSolver {
    fn default() -> Self {
        Self {
            max_sweeps: DEFAULT_MAX_SWEEPS,
            tol: DEFAULT_TOL,
            balance: true,
            schur_residual: false,
        }
    }
}

impl EigenSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn max_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = sweeps;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn balance(mut self, on: bool) -> Self {
        self.balance = on;
        self
    }

    pub fn schur_residual(mut self, on: bool) -> Self {
        self.schur_residual = on;
        self
    }

    pub fn solve(&self, m: &ComplexMatrix) -> LinalgResult<Spectrum> {
        let n = m.ensure_square()?;
        if !(self.tol > 0.0) {
            return Err(LinalgError::InvalidTolerance(self.tol));
        }
        let (mut h, scaling) = if self.balance {
            balance(m)
        } else {
            (m.clone(), vec![1.0; n])
        };
        if !self.schur_residual {
            hessenberg_in_place(&mut h, None)?;
            let eigenvalues = hessenberg_qr(&mut h, None, self.max_sweeps, self.tol)?;
            return Ok(Spectrum {
                eigenvalues,
                residual: None,
            });
        }
        let mut q = ComplexMatrix::identity(n);
        hessenberg_in_place(&mut h, Some(&mut q))?;
        let eigenvalues = hessenberg_qr(&mut h, Some(&mut q), self.max_sweeps, self.tol)?;
        let schur = Schur { q, t: h };
        let mut back = schur.reconstruct();
        for j in 0..n {
            for i in 0..n {
                back[(i, j)] *= scaling[i] / scaling[j];
            }
        }
        let residual = back.sub(m)?.frobenius_norm();
        Ok(Spectrum {
            eigenvalues,
            residual: Some(residual),
        })
    }
}

/// All eigenvalues of `m` with the Schur residual, using balancing and
/// the given sweep budget and deflation tolerance.
pub fn eigenvalues(m: &ComplexMatrix, max_sweeps: usize, tol: f64) -> LinalgResult<Spectrum> {
    EigenSolver::new()
        .max_sweeps(max_sweeps)
        .tol(tol)
        .schur_residual(true)
        .solve(m)
}

/// Complex Schur factorisation without balancing.
pub fn schur(m: &ComplexMatrix) -> LinalgResult<Schur> {
    let n = m.ensure_square()?;
    let mut t = m.clone();
    let mut q = ComplexMatrix::identity(n);
    hessenberg_in_place(&mut t, Some(&mut q))?;
    hessenberg_qr(&mut t, Some(&mut q), DEFAULT_MAX_SWEEPS, DEFAULT_TOL)?;
    Ok(Schur { q, t })
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let t = (a - d) * 0.5;
    let bc = b * c;
    let mut disc = (t * t + bc).sqrt();
    if (t + disc).norm() < (t - disc).norm() {
        disc = -disc;
    }
    let denom = t + disc;
    if denom == ZERO {
        d
    } else {
        d - bc / denom
    }
}

/// Shifted QR iteration on an upper Hessenberg matrix. With `z` present
/// the full triangular factor is formed in `h` and the rotations are
/// accumulated into `z`; otherwise only the active window is updated and
/// `h` is left in an unspecified quasi-reduced state.
pub(crate) fn hessenberg_qr(
    h: &mut ComplexMatrix,
    mut z: Option<&mut ComplexMatrix>,
    max_sweeps: usize,
    tol: f64,
) -> LinalgResult<Vec<Complex64>> {
    let n = h.ensure_square()?;
    let want_t = z.is_some();
    let mut eig = vec![ZERO; n];
    if n == 0 {
        return Ok(eig);
    }
    let scale = h.frobenius_norm().max(f64::MIN_POSITIVE);
    let tiny = f64::MIN_POSITIVE * n as f64;
    let budget = max_sweeps.max(1) * n;
    let mut total = 0usize;
    let mut its = 0usize;
    let mut hi = n - 1;
    loop {
        // locate the bottom unreduced block [l, hi]
        let mut l = hi;
        while l > 0 {
            let sub = h[(l, l - 1)].norm();
            let mut s = h[(l, l)].norm() + h[(l - 1, l - 1)].norm();
            if s == 0.0 {
                s = scale;
            }
            if sub <= tol * s || sub <= tiny {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            eig[hi] = h[(hi, hi)];
            its = 0;
            if hi == 0 {
                break;
            }
            hi -= 1;
            continue;
        }
        if total >= budget {
            return Err(LinalgError::NoConvergence { iterations: total });
        }
        total += 1;
        its += 1;

        let sigma = if its % 20 == 10 {
            h[(l, l)] + h[(l + 1, l)].re.abs() * 0.75
        } else if its % 20 == 0 {
            h[(hi, hi)] + h[(hi, hi - 1)].re.abs() * 0.75
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };

        let (row_lo, col_hi) = if want_t { (0, n) } else { (l, hi + 1) };
        for k in l..hi {
            let g = if k == l {
                Givens::new(h[(l, l)] - sigma, h[(l + 1, l)]).0
            } else {
                let (g, r) = Givens::new(h[(k, k - 1)], h[(k + 1, k - 1)]);
                h[(k, k - 1)] = r;
                h[(k + 1, k - 1)] = ZERO;
                g
            };
            for j in k..col_hi {
                let (mut a, mut b) = (h[(k, j)], h[(k + 1, j)]);
                g.apply_left(&mut a, &mut b);
                h[(k, j)] = a;
                h[(k + 1, j)] = b;
            }
            let last = (k + 2).min(hi);
            apply_right_cols(h, &g, k, row_lo, last + 1);
            if let Some(z) = z.as_deref_mut() {
                apply_right_cols(z, &g, k, 0, n);
            }
        }
    }
    Ok(eig)
}

#[inline]
fn apply_right_cols(m: &mut ComplexMatrix, g: &Givens, k: usize, r0: usize, r1: usize) {
    let rows = m.rows();
    let data = m.as_mut_slice();
    let (left, right) = data.split_at_mut((k + 1) * rows);
    let ck = &mut left[k * rows + r0..k * rows + r1];
    let ck1 = &mut right[r0..r1];
    for (a, b) in ck.iter_mut().zip(ck1.iter_mut()) {
        g.apply_right(a, b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        v
    }

    #[test]
    fn diagonal_matrix_is_exact() {
        let d = [c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)];
        let m = ComplexMatrix::from_diagonal(&d);
        let spec = eigenvalues(&m, 30, DEFAULT_TOL).unwrap();
        assert_eq!(sorted(spec.eigenvalues), sorted(d.to_vec()));
        assert_eq!(spec.residual, Some(0.0));
    }

    #[test]
    fn rotation_generator_has_imaginary_pair() {
        let m = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(-1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let ev = sorted(eigenvalues(&m, 30, DEFAULT_TOL).unwrap().eigenvalues);
        assert!((ev[0] - c(0.0, -1.0)).norm() < 1e-14);
        assert!((ev[1] - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn upper_triangular_returns_diagonal() {
        let m = ComplexMatrix::from_fn(6, 6, |i, j| if i <= j { c(i as f64 - 2.5, (i * j) as f64 * 0.1) } else { ZERO });
        let ev = eigenvalues(&m, 30, DEFAULT_TOL).unwrap().eigenvalues;
        for (i, z) in ev.iter().enumerate() {
            assert!((z - m[(i, i)]).norm() <= 1e-12);
        }
    }

    #[test]
    fn zero_matrix() {
        let m = ComplexMatrix::zeros(4, 4);
        let ev = eigenvalues(&m, 30, DEFAULT_TOL).unwrap().eigenvalues;
        assert!(ev.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn rejects_bad_tolerance() {
        let m = ComplexMatrix::identity(2);
        assert_eq!(eigenvalues(&m, 30, 0.0).unwrap_err(), LinalgError::InvalidTolerance(0.0));
    }

    #[test]
    fn tiny_budget_reports_non_convergence() {
        let m = ComplexMatrix::from_fn(6, 6, |i, j| c(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + j) % 3) as f64));
        let err = EigenSolver::new().max_sweeps(0).solve(&m);
        // a budget of zero sweeps is clamped to one sweep per eigenvalue
        // which is not enough for a dense 6x6 matrix
        assert!(matches!(err, Err(LinalgError::NoConvergence { .. })));
    }

    #[test]
    fn schur_factor_is_triangular() {
        let m = ComplexMatrix::from_fn(7, 7, |i, j| c(((i * 5 + j * 11) % 7) as f64 - 3.0, ((2 * i + j) % 4) as f64 - 1.5));
        let s = schur(&m).unwrap();
        assert!(s.t.is_upper_triangular());
        assert!(s.q.unitarity_defect() < 1e-13);
        let rel = s.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(rel < 1e-13);
    }
}
