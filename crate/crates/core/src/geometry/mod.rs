//! Geometry of the limiting spectral support.
//!
//! For an atomic measure `nu = sum c_k delta_{a_k}` the support of the
//! limiting eigenvalue distribution is `{ z : P00(z) >= 1/tau }` with
//!
//! ```text
//! P00(z) = sum c_k / |a_k - z|^2
//! P0(z)  = sum c_k (a_k - z) / |a_k - z|^4
//! P1(z)  = sum c_k / |a_k - z|^4
//! ```
//!
//! The real gradient of `P00` is `2 (Re P0, Im P0)`, so `P0` points into the
//! support. Boundary points with `P0 != 0` are regular edges; `P0 = 0` marks
//! a quadratic (critical) point.

mod boundary;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::AtomMeasure;
use crate::{Error, Result};

pub use boundary::{trace_boundary, BoundaryCurve, Polyline, SearchBox};

/// Default tolerance on `|P00 - 1/tau|` for a point to count as on the
/// boundary.
pub const DEFAULT_TOL_B: f64 = 1e-8;
/// Default dimensionless threshold on `|P0| / P1^{3/4}` for a quadratic point.
pub const DEFAULT_TOL_Q: f64 = 1e-6;

/// `P00`, `P0` and `P1` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Functionals {
    pub p00: f64,
    pub p0: Complex64,
    pub p1: f64,
}

pub fn functionals(nu: &AtomMeasure, z: Complex64) -> Result<Functionals> {
    let mut p00 = 0.0;
    let mut p0 = Complex64::new(0.0, 0.0);
    let mut p1 = 0.0;
    for at in nu.atoms() {
        let d = at.a - z;
        let r2 = d.norm_sqr();
        if r2 == 0.0 {
            return Err(Error::AtomPole { re: z.re, im: z.im });
        }
        let inv2 = 1.0 / r2;
        let inv4 = inv2 * inv2;
        p00 += at.c * inv2;
        p0 += d * (at.c * inv4);
        p1 += at.c * inv4;
    }
    Ok(Functionals { p00, p0, p1 })
}

pub fn p00(nu: &AtomMeasure, z: Complex64) -> Result<f64> {
    functionals(nu, z).map(|f| f.p00)
}

pub fn p0(nu: &AtomMeasure, z: Complex64) -> Result<Complex64> {
    functionals(nu, z).map(|f| f.p0)
}

pub fn p1(nu: &AtomMeasure, z: Complex64) -> Result<f64> {
    functionals(nu, z).map(|f| f.p1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    Regular,
    Quadratic,
    NotOnBoundary,
}

impl EdgeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeClass::Regular => "regular",
            EdgeClass::Quadratic => "quadratic",
            EdgeClass::NotOnBoundary => "not_on_boundary",
        }
    }
}

impl std::fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A candidate edge point with its cached functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub z0: Complex64,
    pub p00: f64,
    pub p0: Complex64,
    pub p1: f64,
    pub class: EdgeClass,
}

impl EdgePoint {
    pub fn is_regular(&self) -> bool {
        self.class == EdgeClass::Regular
    }

    pub fn require_regular(&self) -> Result<()> {
        match self.class {
            EdgeClass::Regular => Ok(()),
            EdgeClass::Quadratic => Err(Error::NotRegular(format!(
                "z0 = {} is a quadratic point (P0 = 0); its critical kernel is outside this crate",
                self.z0
            ))),
            EdgeClass::NotOnBoundary => Err(Error::NotRegular(format!(
                "z0 = {} is not on the boundary (P00 = {})",
                self.z0, self.p00
            ))),
        }
    }
}

fn is_quadratic(f: &Functionals, tol_q: f64) -> bool {
    f.p0.norm() <= tol_q * f.p1.powf(0.75)
}

pub fn classify_edge(nu: &AtomMeasure, tau: f64, z0: Complex64, tol_b: f64, tol_q: f64) -> Result<EdgePoint> {
    let f = functionals(nu, z0)?;
    let class = if (f.p00 - 1.0 / tau).abs() > tol_b {
        EdgeClass::NotOnBoundary
    } else if is_quadratic(&f, tol_q) {
        EdgeClass::Quadratic
    } else {
        EdgeClass::Regular
    };
    Ok(EdgePoint {
        z0,
        p00: f.p00,
        p0: f.p0,
        p1: f.p1,
        class,
    })
}

/// Residual target of [`refine_to_boundary`].
pub const REFINE_TOL: f64 = 1e-12;
const REFINE_MAX_ITER: usize = 100;

/// Newton iteration for `P00(z) = 1/tau` along the gradient direction
/// `2 P0`, with step halving whenever the residual grows.
pub fn refine_to_boundary(nu: &AtomMeasure, tau: f64, z_guess: Complex64) -> Result<EdgePoint> {
    let target = 1.0 / tau;
    let mut z = z_guess;
    let mut f = functionals(nu, z)?;
    let mut res = f.p00 - target;
    for _ in 0..REFINE_MAX_ITER {
        if res.abs() <= REFINE_TOL {
            return classify_edge(nu, tau, z, DEFAULT_TOL_B, DEFAULT_TOL_Q);
        }
        if is_quadratic(&f, DEFAULT_TOL_Q) {
            return Err(Error::NearQuadratic { re: z.re, im: z.im });
        }
        let grad = f.p0 * 2.0;
        let step = grad * (res / grad.norm_sqr());
        let mut lambda = 1.0;
        loop {
            let cand = z - step * lambda;
            if let Ok(fc) = functionals(nu, cand) {
                let rc = fc.p00 - target;
                if rc.abs() < res.abs() || lambda < 1e-10 {
                    z = cand;
                    f = fc;
                    res = rc;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::RefineNoConvergence {
                    iterations: REFINE_MAX_ITER,
                    residual: res.abs(),
                });
            }
        }
    }
    if res.abs() <= REFINE_TOL {
        return classify_edge(nu, tau, z, DEFAULT_TOL_B, DEFAULT_TOL_Q);
    }
    Err(Error::RefineNoConvergence {
        iterations: REFINE_MAX_ITER,
        residual: res.abs(),
    })
}
