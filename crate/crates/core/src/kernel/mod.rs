//! The repeated-erfc limit kernel and the edge rescaling map.
//!
//! ```text
//! K_n(z, w) = sqrt(2/pi) Gamma(n+1) exp((z + conj w)^2 / 2)
//!             * sqrt(IE_{n-1}(-z - conj z) IE_{n-1}(-w - conj w))
//!             * IE_n(z + conj w)
//! ```
//!
//! Near a regular edge point `z0` eigenvalues are observed in the local
//! coordinate `zhat = -(conj P0 sqrt N / sqrt P1) (z - z0)`, in which the
//! outside of the support is `Re zhat > 0` and the bulk density is `1/pi`.

mod ie;

use num_complex::Complex64;

use crate::ensemble::EnsembleSpec;
use crate::geometry::EdgePoint;
use crate::linalg::{determinant, ComplexMatrix};
use crate::{Error, Result};

pub use ie::{ie, ie_fast, ie_sequence, j0, j_integer, j_quadrature, MAX_CONDITION, MAX_ORDER};

/// Local coordinate `zhat` near an edge point.
pub type ScaledPoint = Complex64;

/// Default bound on `|zhat|` for kernel evaluation.
pub const DEFAULT_WINDOW: f64 = 6.0;
/// `|Re (z + conj w)^2|` above which the exponential prefactor is folded
/// into a logarithm.
const LOG_FORM_THRESHOLD: f64 = 50.0;
/// `|z0|` at or below which the edge point counts as the origin.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// `K_n(z, w)` for real `n >= 0`, with `|z|, |w| <= window`.
pub fn kernel_value(n: f64, z: Complex64, w: Complex64, window: f64) -> Result<Complex64> {
    if !(n >= 0.0) {
        return Err(Error::KernelDomain(format!("kernel index {n} must be >= 0")));
    }
    for p in [z, w] {
        if !(p.norm() <= window) {
            return Err(Error::KernelDomain(format!("|{p}| exceeds the evaluation window {window}")));
        }
    }
    let u = z + w.conj();
    let da = ie_fast(n - 1.0, Complex64::new(-2.0 * z.re, 0.0))?.re;
    let db = if w.re == z.re {
        da
    } else {
        ie_fast(n - 1.0, Complex64::new(-2.0 * w.re, 0.0))?.re
    };
    let root = (da.max(0.0) * db.max(0.0)).sqrt();
    // sqrt(2/pi) Gamma(n+1) IE_n(u) = J_n(u) / pi
    let j = if n.fract() == 0.0 {
        j_integer(n as usize, u)?
    } else {
        j_quadrature(n, u)?
    };
    let half_sq = u * u * 0.5;
    let scaled = if (2.0 * half_sq.re).abs() > LOG_FORM_THRESHOLD {
        if j == Complex64::new(0.0, 0.0) {
            j
        } else {
            (half_sq + j.ln()).exp()
        }
    } else {
        half_sq.exp() * j
    };
    let k = scaled * root / std::f64::consts::PI;
    if !(k.re.is_finite() && k.im.is_finite()) {
        return Err(Error::KernelDomain(format!("K_{n}({z}, {w}) over- or underflows")));
    }
    Ok(k)
}

/// `K_n(x, x)` for a real coordinate, which is all the diagonal depends on.
pub fn kernel_diagonal(n: f64, x: f64) -> Result<f64> {
    let z = Complex64::new(x, 0.0);
    Ok(kernel_value(n, z, z, f64::INFINITY)?.re)
}

/// Kernel index: `r0 + R0` when the edge point is the origin, else `r0`.
pub fn kernel_index(spec: &EnsembleSpec, edge: &EdgePoint) -> usize {
    if edge.z0.norm() <= ZERO_THRESHOLD {
        spec.r0 + spec.big_r0
    } else {
        spec.r0
    }
}

/// `zhat = -(conj P0 sqrt N / sqrt P1)(z - z0)`.
pub fn rescale(edge: &EdgePoint, n: usize, z: Complex64) -> ScaledPoint {
    -(edge.p0.conj() * (n as f64).sqrt() / edge.p1.sqrt()) * (z - edge.z0)
}

/// Inverse of [`rescale`]: `z = z0 - sqrt P1 zhat / (conj P0 sqrt N)`.
pub fn unscale(edge: &EdgePoint, n: usize, zhat: ScaledPoint) -> Complex64 {
    edge.z0 - zhat * edge.p1.sqrt() / (edge.p0.conj() * (n as f64).sqrt())
}

/// Jacobian `|dz / dzhat|^2 = P1 / (|P0|^2 N)`.
pub fn area_factor(edge: &EdgePoint, n: usize) -> f64 {
    edge.p1 / (edge.p0.norm_sqr() * n as f64)
}

/// Kernel index, the edge it applies to and the evaluation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelModel {
    pub index: usize,
    pub edge: EdgePoint,
    pub tau: f64,
    pub window: f64,
}

impl KernelModel {
    pub fn new(spec: &EnsembleSpec, edge: EdgePoint) -> Result<Self> {
        edge.require_regular()?;
        Ok(Self {
            index: kernel_index(spec, &edge),
            edge,
            tau: spec.tau,
            window: DEFAULT_WINDOW,
        })
    }

    /// A model with an explicit index, for kernel studies without an
    /// ensemble.
    pub fn with_index(index: usize, edge: EdgePoint, tau: f64) -> Self {
        Self {
            index,
            edge,
            tau,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn kernel(&self, z: ScaledPoint, w: ScaledPoint) -> Result<Complex64> {
        kernel_value(self.index as f64, z, w, self.window)
    }

    /// One-point density `K(x, x)` at real part `x`.
    pub fn density(&self, x: f64) -> Result<f64> {
        if x.abs() > self.window {
            return Err(Error::KernelDomain(format!("|{x}| exceeds the evaluation window {}", self.window)));
        }
        kernel_diagonal(self.index as f64, x)
    }
}

/// `det [K(z_i, z_j)]`, the predicted `n`-point correlation.
pub fn predicted_correlation(model: &KernelModel, points: &[ScaledPoint]) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let k = model.kernel(points[i], points[j])?;
            m[(i, j)] = k;
            m[(j, i)] = k.conj();
        }
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
    }
    if n == 1 {
        return Ok(m[(0, 0)].re);
    }
    // repeated points give exactly repeated rows
    for i in 0..n {
        if points[..i].contains(&points[i]) {
            return Ok(0.0);
        }
    }
    Ok(determinant(&m)?.re)
}

/// `1/(2 pi) erfc(sqrt 2 x)`, the index-0 diagonal in closed form.
pub fn ginibre_edge_density(x: f64) -> f64 {
    libm::erfc(std::f64::consts::SQRT_2 * x) / (2.0 * std::f64::consts::PI)
}
