//! Composite Gauss-Legendre quadrature.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use num_complex::Complex64;

/// Values that can be accumulated by a quadrature rule.
pub trait Integrand: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of `P_n` by Newton iteration from the Chebyshev-like guess
    /// `cos(pi (i + 3/4) / (n + 1/2))`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Integral over `[a, b]` with a single panel.
    pub fn panel<T: Integrand>(&self, f: &impl Fn(f64) -> T, a: f64, b: f64) -> T {
        let h = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + h * x) * *w;
        }
        acc * h
    }

    /// Integral over `[a, b]` split into `panels` equal panels.
    pub fn composite<T: Integrand>(&self, f: &impl Fn(f64) -> T, a: f64, b: f64, panels: usize) -> T {
        let h = (b - a) / panels as f64;
        let mut acc = T::zero();
        for k in 0..panels {
            acc = acc + self.panel(f, a + k as f64 * h, a + (k + 1) as f64 * h);
        }
        acc
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Order of the panel rule used by [`integrate`].
pub const PANEL_ORDER: usize = 20;

/// Result of an adaptive composite integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub panels: usize,
    /// `|I_{2m} - I_m| / |I_{2m}|` at termination.
    pub rel_change: f64,
}

/// Composite Gauss-Legendre integration on `[a, b]`, halving the panel
/// width until the relative change between successive refinements drops
/// below `rel_tol` (or an absolute floor of `abs_tol` is reached).
pub fn integrate<T: Integrand>(
    f: impl Fn(f64) -> T,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Quadrature<T> {
    thread_local! {
        static RULE: GaussLegendre = GaussLegendre::new(PANEL_ORDER);
    }
    RULE.with(|rule| {
        let mut panels = 4;
        let mut prev = rule.composite(&f, a, b, panels);
        let mut rel_change = f64::INFINITY;
        while panels < 1 << 12 {
            panels *= 2;
            let cur = rule.composite(&f, a, b, panels);
            let diff = (cur + prev * -1.0).magnitude();
            let scale = cur.magnitude();
            rel_change = if scale > 0.0 { diff / scale } else { diff };
            prev = cur;
            if diff <= rel_tol * scale || diff <= abs_tol {
                break;
            }
        }
        Quadrature {
            value: prev,
            panels,
            rel_change,
        }
    })
}
