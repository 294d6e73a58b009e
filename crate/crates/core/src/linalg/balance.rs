use super::ComplexMatrix;

const RADIX: f64 = 2.0;

/// Diagonal similarity `B = D^{-1} M D` with power-of-two scalings chosen
/// so that off-diagonal row and column norms are comparable. Returns `B`
/// and the diagonal of `D`. Exact in floating point since only exponents
/// change.
pub fn balance(m: &ComplexMatrix) -> (ComplexMatrix, Vec<f64>) {
    let n = m.rows();
    let mut b = m.clone();
    let mut d = vec![1.0; n];
    if n < 2 {
        return (b, d);
    }
    let mut sweeps = 0;
    loop {
        let mut changed = false;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].norm();
                    r += b[(i, j)].norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c >= g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                d[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
                changed = true;
            }
        }
        sweeps += 1;
        if !changed || sweeps > 100 {
            break;
        }
    }
    (b, d)
}
