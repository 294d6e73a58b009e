use num_complex::Complex64;

use super::{ComplexMatrix, LinalgResult, ZERO};

pub use super::local::HessenbergLu;

/// `det = exp(log_abs) * phase`, or exactly zero when `singular`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub phase: Complex64,
    pub singular: bool,
}

impl LogDet {
    pub fn value(&self) -> Complex64 {
        if self.singular {
            ZERO
        } else {
            self.phase * self.log_abs.exp()
        }
    }
}

/// Logarithmic determinant by LU with partial pivoting.
pub fn log_determinant(m: &ComplexMatrix) -> LinalgResult<LogDet> {
    let n = m.ensure_square()?;
    let mut a = m.clone();
    let mut log_abs = 0.0;
    let mut phase = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, a[(i, k)].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax == 0.0 {
            return Ok(LogDet {
                log_abs: f64::NEG_INFINITY,
                phase: ZERO,
                singular: true,
            });
        }
        if p != k {
            for j in 0..n {
                let t = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = t;
            }
            phase = -phase;
        }
        let pivot = a[(k, k)];
        log_abs += pmax.ln();
        phase *= pivot / pmax;
        for i in (k + 1)..n {
            let l = a[(i, k)] / pivot;
            if l == ZERO {
                continue;
            }
            a[(i, k)] = l;
            for j in (k + 1)..n {
                let u = a[(k, j)];
                a[(i, j)] -= l * u;
            }
        }
    }
    Ok(LogDet {
        log_abs,
        phase,
        singular: false,
    })
}

/// Determinant by LU with partial pivoting; singular input gives zero.
pub fn determinant(m: &ComplexMatrix) -> LinalgResult<Complex64> {
    let n = m.ensure_square()?;
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    // direct product keeps triangular inputs exact up to rounding
    if m.is_upper_triangular() || m.transpose().is_upper_triangular() {
        return Ok(m.diagonal().into_iter().product());
    }
    Ok(log_determinant(m)?.value())
}
