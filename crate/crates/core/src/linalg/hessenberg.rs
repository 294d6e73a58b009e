use num_complex::Complex64;

use super::{ComplexMatrix, LinalgResult, ZERO};

/// Householder vector `v` (with `v[0] = 1`) and `beta` such that
/// `(I - beta v v*) x = alpha e1`. Returns `None` when the tail of `x` is
/// already zero, in which case no reflection is needed.
pub(crate) fn householder_vector(x: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
    let (&x0, tail) = x.split_first()?;
    let sigma: f64 = tail.iter().map(|z| z.norm_sqr()).sum();
    if sigma == 0.0 {
        return None;
    }
    let n0 = x0.norm();
    let norm = (n0 * n0 + sigma).sqrt();
    let phase = if n0 == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / n0 };
    let v0 = phase * (n0 + norm);
    let mut v = Vec::with_capacity(x.len());
    v.push(Complex64::new(1.0, 0.0));
    v.extend(tail.iter().map(|&z| z / v0));
    let vnorm2 = 1.0 + sigma / v0.norm_sqr();
    Some((v, 2.0 / vnorm2))
}

/// Applies `I - beta v v*` from the left to rows `row0..row0+len(v)`,
/// columns `col0..`.
pub(crate) fn reflect_left(a: &mut ComplexMatrix, v: &[Complex64], beta: f64, row0: usize, col0: usize) {
    let rows = a.rows();
    for j in col0..a.cols() {
        let col = &mut a.as_mut_slice()[j * rows + row0..j * rows + row0 + v.len()];
        let w: Complex64 = v.iter().zip(col.iter()).map(|(vi, ai)| vi.conj() * ai).sum();
        if w == ZERO {
            continue;
        }
        let bw = w * beta;
        for (ai, vi) in col.iter_mut().zip(v) {
            *ai -= vi * bw;
        }
    }
}

/// Applies `I - beta v v*` from the right to columns `col0..col0+len(v)`,
/// rows `r0..r1`.
pub(crate) fn reflect_right(
    a: &mut ComplexMatrix,
    v: &[Complex64],
    beta: f64,
    col0: usize,
    r0: usize,
    r1: usize,
) {
    let rows = a.rows();
    let mut y = vec![ZERO; r1 - r0];
    for (k, vk) in v.iter().enumerate() {
        let col = &a.as_slice()[(col0 + k) * rows + r0..(col0 + k) * rows + r1];
        for (yi, ai) in y.iter_mut().zip(col) {
            *yi += ai * vk;
        }
    }
    for (k, vk) in v.iter().enumerate() {
        let f = vk.conj() * beta;
        let col = &mut a.as_mut_slice()[(col0 + k) * rows + r0..(col0 + k) * rows + r1];
        for (ai, yi) in col.iter_mut().zip(&y) {
            *ai -= yi * f;
        }
    }
}

/// Reduces `m` to upper Hessenberg form in place, optionally accumulating
/// the unitary factor so that `m_original = Q H Q*`.
pub fn hessenberg_in_place(m: &mut ComplexMatrix, mut q: Option<&mut ComplexMatrix>) -> LinalgResult<()> {
    let n = m.ensure_square()?;
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = ((k + 1)..n).map(|i| m[(i, k)]).collect();
        let Some((v, beta)) = householder_vector(&x) else {
            continue;
        };
        reflect_left(m, &v, beta, k + 1, k);
        reflect_right(m, &v, beta, k + 1, 0, n);
        if let Some(q) = q.as_deref_mut() {
            reflect_right(q, &v, beta, k + 1, 0, n);
        }
        // entries annihilated by the reflection are set exactly
        for i in (k + 2)..n {
            m[(i, k)] = ZERO;
        }
    }
    Ok(())
}

/// Unitary Hessenberg reduction: returns `(H, Q)` with `M = Q H Q*`.
pub fn hessenberg(m: &ComplexMatrix) -> LinalgResult<(ComplexMatrix, ComplexMatrix)> {
    let n = m.ensure_square()?;
    let mut h = m.clone();
    let mut q = ComplexMatrix::identity(n);
    hessenberg_in_place(&mut h, Some(&mut q))?;
    Ok((h, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinalgError;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pseudo_random(n: usize, seed: u64) -> ComplexMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        ComplexMatrix::from_fn(n, n, |_, _| c(next(), next()))
    }

    #[test]
    fn upper_triangular_is_untouched() {
        let m = ComplexMatrix::from_fn(5, 5, |i, j| if i <= j { c(i as f64 + 1.0, j as f64) } else { ZERO });
        let (h, q) = hessenberg(&m).unwrap();
        assert_eq!(h, m);
        assert_eq!(q, ComplexMatrix::identity(5));
    }

    #[test]
    fn two_by_two_is_already_hessenberg() {
        let m = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let (h, q) = hessenberg(&m).unwrap();
        assert_eq!(h, m);
        assert_eq!(q, ComplexMatrix::identity(2));
    }

    #[test]
    fn random_reconstruction() {
        let m = pseudo_random(8, 7);
        let (h, q) = hessenberg(&m).unwrap();
        assert!(h.is_upper_hessenberg());
        assert!(q.unitarity_defect() < 1e-14);
        let back = q.matmul(&h).unwrap().matmul(&q.adjoint()).unwrap();
        let rel = back.sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(rel <= 1e-13, "relative reconstruction error {rel:e}");
    }

    #[test]
    fn non_square_is_rejected() {
        let m = ComplexMatrix::zeros(2, 3);
        assert_eq!(hessenberg(&m).unwrap_err(), LinalgError::NotSquare { rows: 2, cols: 3 });
    }

    #[test]
    fn householder_maps_to_multiple_of_e1() {
        let x = vec![c(0.3, -1.0), c(2.0, 0.5), c(-0.7, 0.1)];
        let (v, beta) = householder_vector(&x).unwrap();
        let w: Complex64 = v.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
        let y: Vec<Complex64> = x.iter().zip(&v).map(|(xi, vi)| xi - vi * (w * beta)).collect();
        assert!(y[1].norm() < 1e-15 && y[2].norm() < 1e-15);
        let nx: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((y[0].norm() - nx).abs() < 1e-14);
    }
}
