//! Dense complex linear algebra.
//!
//! Storage is column-major: entry `(i, j)` of an `r x c` matrix lives at
//! `data[i + j * r]`. Householder updates and Givens sweeps are organised so
//! that the inner loops run down columns.

mod balance;
mod hessenberg;
pub mod local;
mod lu;
mod qr;

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

pub use balance::balance;
pub use hessenberg::{hessenberg, hessenberg_in_place};
pub use local::{eigenvalues_in_disk, PackedHessenberg, WindowSolver};
pub use lu::{determinant, log_determinant, HessenbergLu, LogDet};
pub use qr::{eigenvalues, schur, EigenSolver, Schur, Spectrum};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("shifted QR did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),

    #[error("windowed eigenvalue search incomplete: {0}")]
    LocalIncomplete(String),
}

pub type LinalgResult<T> = Result<T, LinalgError>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix in column-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from column-major data, rejecting non-finite entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<Complex64>) -> LinalgResult<Self> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|z| !z.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: k % rows.max(1),
                col: k / rows.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows, which is how matrices are
    /// usually written down in tests.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> LinalgResult<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LinalgError::Dimension("ragged rows".into()));
        }
        let mut data = vec![ZERO; r * c];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[i + j * r] = v;
            }
        }
        Self::from_col_major(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub(crate) fn ensure_square(&self) -> LinalgResult<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare {
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> Complex64 {
        self.diagonal().into_iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> LinalgResult<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> LinalgResult<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> LinalgResult<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> LinalgResult<Self> {
        if self.cols != other.rows {
            return Err(LinalgError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for k in 0..self.cols {
                let b = other[(k, j)];
                if b == ZERO {
                    continue;
                }
                for (d, &a) in dst.iter_mut().zip(self.col(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[Complex64]) -> LinalgResult<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(LinalgError::Dimension(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.cols
            )));
        }
        let mut y = vec![ZERO; self.rows];
        for (k, &xk) in x.iter().enumerate() {
            for (yi, &a) in y.iter_mut().zip(self.col(k)) {
                *yi += a * xk;
            }
        }
        Ok(y)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (m, n) = (self.rows, self.cols);
        let (p, q) = (other.rows, other.cols);
        Self::from_fn(m * p, n * q, |i, j| self[(i / p, j / q)] * other[(i % p, j % q)])
    }

    /// True when every entry below the first subdiagonal is exactly zero.
    pub fn is_upper_hessenberg(&self) -> bool {
        (0..self.cols).all(|j| ((j + 2)..self.rows).all(|i| self[(i, j)] == ZERO))
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.cols).all(|j| ((j + 1)..self.rows).all(|i| self[(i, j)] == ZERO))
    }

    /// `max |(M* M - I)_{ij}|`, zero for an exactly unitary matrix.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.adjoint().matmul(self).expect("square product");
        let mut worst = 0.0f64;
        for j in 0..g.cols {
            for i in 0..g.rows {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((g[(i, j)] - target).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>10.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Givens rotation `G = [[c, s], [-conj(s), c]]` with real `c`, chosen so
/// that `G [x; y] = [r; 0]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Givens {
    pub c: f64,
    pub s: Complex64,
}

impl Givens {
    pub fn new(x: Complex64, y: Complex64) -> (Self, Complex64) {
        if y == ZERO {
            return (Self { c: 1.0, s: ZERO }, x);
        }
        if x == ZERO {
            let ny = y.norm();
            return (Self { c: 0.0, s: y.conj() / ny }, Complex64::new(ny, 0.0));
        }
        let nx = x.norm();
        let norm = nx.hypot(y.norm());
        let phase = x / nx;
        let c = nx / norm;
        let s = phase * y.conj() / norm;
        (Self { c, s }, phase * norm)
    }

    /// `(a, b) <- G (a, b)`, used on row pairs.
    #[inline]
    pub fn apply_left(&self, a: &mut Complex64, b: &mut Complex64) {
        let (x, y) = (*a, *b);
        *a = x * self.c + self.s * y;
        *b = y * self.c - self.s.conj() * x;
    }

    /// `(a, b) <- (a, b) G^*`, used on column pairs.
    #[inline]
    pub fn apply_right(&self, a: &mut Complex64, b: &mut Complex64) {
        let (x, y) = (*a, *b);
        *a = x * self.c + self.s.conj() * y;
        *b = y * self.c - self.s * x;
    }
}

/// Unitary `Q` and upper-triangular `R` with positive real diagonal such
/// that `M = Q R`, by Householder reflections. For a Ginibre input the
/// returned `Q` is Haar distributed.
pub fn qr_positive(m: &ComplexMatrix) -> LinalgResult<(ComplexMatrix, ComplexMatrix)> {
    let n = m.ensure_square()?;
    let mut r = m.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n {
        let x: Vec<Complex64> = (k..n).map(|i| r[(i, k)]).collect();
        if let Some((v, beta)) = hessenberg::householder_vector(&x) {
            hessenberg::reflect_left(&mut r, &v, beta, k, k);
            hessenberg::reflect_right(&mut q, &v, beta, k, 0, n);
        }
        // phase fix: make R_kk real positive
        let d = r[(k, k)];
        let nd = d.norm();
        if nd > 0.0 {
            let ph = d / nd;
            for j in k..n {
                let v = r[(k, j)];
                r[(k, j)] = v * ph.conj();
            }
            for i in 0..n {
                let v = q[(i, k)];
                q[(i, k)] = v * ph;
            }
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            r[(i, j)] = ZERO;
        }
    }
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_nan_entries() {
        let err = ComplexMatrix::from_col_major(1, 2, vec![c(1.0, 0.0), c(f64::NAN, 0.0)]).unwrap_err();
        assert_eq!(err, LinalgError::NonFinite { row: 0, col: 1 });
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(ComplexMatrix::from_col_major(2, 2, vec![c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn givens_zeroes_second_component() {
        let (g, r) = Givens::new(c(1.0, 2.0), c(-3.0, 0.5));
        let (mut a, mut b) = (c(1.0, 2.0), c(-3.0, 0.5));
        g.apply_left(&mut a, &mut b);
        assert!((a - r).norm() < 1e-15);
        assert!(b.norm() < 1e-15);
    }

    #[test]
    fn kron_shape_and_entries() {
        let a = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)]]).unwrap();
        let b = ComplexMatrix::from_rows(&[vec![c(0.0, 1.0)], vec![c(3.0, 0.0)]]).unwrap();
        let k = a.kron(&b);
        assert_eq!((k.rows(), k.cols()), (2, 2));
        assert_eq!(k[(0, 1)], c(0.0, 2.0));
        assert_eq!(k[(1, 0)], c(3.0, 0.0));
    }

    #[test]
    fn qr_positive_reconstructs() {
        let m = ComplexMatrix::from_fn(4, 4, |i, j| c((i * 3 + j) as f64 * 0.37 - 1.0, ((i + 2 * j) % 5) as f64 * 0.21));
        let (q, r) = qr_positive(&m).unwrap();
        assert!(q.unitarity_defect() < 1e-13);
        assert!(r.is_upper_triangular());
        for k in 0..4 {
            assert!(r[(k, k)].re >= 0.0 && r[(k, k)].im.abs() < 1e-14);
        }
        let back = q.matmul(&r).unwrap();
        assert!(back.sub(&m).unwrap().frobenius_norm() < 1e-12 * m.frobenius_norm());
    }
}
