//! Marching-squares extraction of the level set `P00 = 1/tau`.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_edge, functionals};
use crate::ensemble::AtomMeasure;
use crate::{Error, Result};

/// Level-set residual reached by edge bisection.
pub const BISECT_TOL: f64 = 1e-10;
const MIN_GRID: usize = 16;
/// Atom exclusion radius as a fraction of the box diagonal.
const EXCLUSION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl SearchBox {
    pub fn square(center: Complex64, half: f64) -> Self {
        Self {
            re_min: center.re - half,
            re_max: center.re + half,
            im_min: center.im - half,
            im_max: center.im + half,
        }
    }

    /// A box that contains the whole support: every support point lies
    /// within `sqrt(tau)` of some atom, since `P00(z) <= 1/dist(z)^2`.
    pub fn enclosing(nu: &AtomMeasure, tau: f64) -> Self {
        let pad = 1.25 * tau.sqrt();
        let mut b = Self {
            re_min: f64::INFINITY,
            re_max: f64::NEG_INFINITY,
            im_min: f64::INFINITY,
            im_max: f64::NEG_INFINITY,
        };
        for at in nu.atoms() {
            b.re_min = b.re_min.min(at.a.re - pad);
            b.re_max = b.re_max.max(at.a.re + pad);
            b.im_min = b.im_min.min(at.a.im - pad);
            b.im_max = b.im_max.max(at.a.im + pad);
        }
        b
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite())
            && self.re_min < self.re_max
            && self.im_min < self.im_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate search box {self:?}")))
        }
    }

    fn diagonal(&self) -> f64 {
        (self.re_max - self.re_min).hypot(self.im_max - self.im_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Complex64>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    pub polylines: Vec<Polyline>,
    pub tau: f64,
}

impl BoundaryCurve {
    pub fn vertices(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.polylines.iter().flat_map(|p| p.points.iter().copied())
    }

    /// CSV with one row per vertex:
    /// `polyline,vertex,re,im,p00,abs_p0,p1,class`.
    pub fn to_csv(&self, nu: &AtomMeasure, tol_b: f64, tol_q: f64) -> Result<String> {
        let mut out = String::from("polyline,vertex,re,im,p00,abs_p0,p1,class\n");
        for (k, line) in self.polylines.iter().enumerate() {
            for (i, &z) in line.points.iter().enumerate() {
                let e = classify_edge(nu, self.tau, z, tol_b, tol_q)?;
                writeln!(
                    out,
                    "{k},{i},{},{},{},{},{},{}",
                    z.re,
                    z.im,
                    e.p00,
                    e.p0.norm(),
                    e.p1,
                    e.class
                )
                .expect("write to string");
            }
        }
        Ok(out)
    }
}

struct Field<'a> {
    nu: &'a AtomMeasure,
    target: f64,
    exclusion: f64,
}

impl Field<'_> {
    /// `P00 - 1/tau`, with points at or very near an atom reported as
    /// `+inf` (they lie deep inside the support).
    fn eval(&self, z: Complex64) -> f64 {
        if self.nu.atoms().iter().any(|a| (a.a - z).norm() <= self.exclusion) {
            return f64::INFINITY;
        }
        match functionals(self.nu, z) {
            Ok(f) => f.p00 - self.target,
            Err(_) => f64::INFINITY,
        }
    }

    /// Level crossing on the segment `[za, zb]`, whose endpoints lie on
    /// opposite sides. Zero counts as inside.
    fn bisect(&self, mut za: Complex64, fa: f64, mut zb: Complex64, fb: f64) -> Complex64 {
        if fa.abs() <= BISECT_TOL {
            return za;
        }
        if fb.abs() <= BISECT_TOL {
            return zb;
        }
        let inside_a = fa >= 0.0;
        let (mut best, mut best_f) = if fa.abs() < fb.abs() { (za, fa) } else { (zb, fb) };
        for _ in 0..200 {
            let mid = (za + zb) * 0.5;
            if mid == za || mid == zb {
                break;
            }
            let fm = self.eval(mid);
            if fm.abs() < best_f.abs() {
                best = mid;
                best_f = fm;
            }
            if fm.abs() <= BISECT_TOL {
                return mid;
            }
            if (fm >= 0.0) == inside_a {
                za = mid;
            } else {
                zb = mid;
            }
        }
        best
    }
}

/// Traces `P00(z) = 1/tau` inside `bx` on a `grid x grid` cell lattice.
pub fn trace_boundary(nu: &AtomMeasure, tau: f64, bx: &SearchBox, grid: usize) -> Result<BoundaryCurve> {
    if grid < MIN_GRID {
        return Err(Error::Config(format!("grid must be at least {MIN_GRID}, got {grid}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    bx.validate()?;
    let field = Field {
        nu,
        target: 1.0 / tau,
        exclusion: EXCLUSION * bx.diagonal(),
    };
    let g = grid;
    let node = |i: usize, j: usize| {
        Complex64::new(
            bx.re_min + (bx.re_max - bx.re_min) * i as f64 / g as f64,
            bx.im_min + (bx.im_max - bx.im_min) * j as f64 / g as f64,
        )
    };
    let values: Vec<Vec<f64>> = (0..=g)
        .into_par_iter()
        .map(|j| (0..=g).map(|i| field.eval(node(i, j))).collect())
        .collect();
    let f = |i: usize, j: usize| values[j][i];
    let inside = |i: usize, j: usize| values[j][i] >= 0.0;

    let h_id = |i: usize, j: usize| j * g + i;
    let v_id = |i: usize, j: usize| (g + 1) * g + j * (g + 1) + i;

    let mut points: Vec<Complex64> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut crossing = |id: usize, (ia, ja): (usize, usize), (ib, jb): (usize, usize)| -> usize {
        *index.entry(id).or_insert_with(|| {
            let z = field.bisect(node(ia, ja), f(ia, ja), node(ib, jb), f(ib, jb));
            points.push(z);
            points.len() - 1
        })
    };

    let mut segments: Vec<(usize, usize)> = Vec::new();
    for j in 0..g {
        for i in 0..g {
            let corners = [inside(i, j), inside(i + 1, j), inside(i + 1, j + 1), inside(i, j + 1)];
            // edges: 0 bottom, 1 right, 2 top, 3 left
            let cut = [
                corners[0] != corners[1],
                corners[1] != corners[2],
                corners[3] != corners[2],
                corners[0] != corners[3],
            ];
            let count = cut.iter().filter(|&&c| c).count();
            if count == 0 {
                continue;
            }
            let mut ids = [usize::MAX; 4];
            if cut[0] {
                ids[0] = crossing(h_id(i, j), (i, j), (i + 1, j));
            }
            if cut[1] {
                ids[1] = crossing(v_id(i + 1, j), (i + 1, j), (i + 1, j + 1));
            }
            if cut[2] {
                ids[2] = crossing(h_id(i, j + 1), (i, j + 1), (i + 1, j + 1));
            }
            if cut[3] {
                ids[3] = crossing(v_id(i, j), (i, j), (i, j + 1));
            }
            if count == 2 {
                let e: Vec<usize> = (0..4).filter(|&k| cut[k]).collect();
                segments.push((ids[e[0]], ids[e[1]]));
            } else {
                // saddle cell: decide the connectivity from the centre value
                let centre = (node(i, j) + node(i + 1, j + 1)) * 0.5;
                let centre_inside = field.eval(centre) >= 0.0;
                if centre_inside == corners[0] {
                    segments.push((ids[0], ids[1]));
                    segments.push((ids[2], ids[3]));
                } else {
                    segments.push((ids[0], ids[3]));
                    segments.push((ids[1], ids[2]));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyContour);
    }

    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
    for &(a, b) in &segments {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut used = vec![false; points.len()];
    let mut polylines = Vec::new();
    let walk = |start: usize, used: &mut Vec<bool>| -> (Vec<usize>, bool) {
        let mut chain = vec![start];
        used[start] = true;
        let mut cur = start;
        loop {
            let next = adj[cur].iter().copied().find(|&n| !used[n]);
            match next {
                Some(n) => {
                    used[n] = true;
                    chain.push(n);
                    cur = n;
                }
                None => {
                    let closed = chain.len() > 2 && adj[cur].contains(&start);
                    return (chain, closed);
                }
            }
        }
    };
    // open chains first (they start at the box edge), then loops
    for start in 0..points.len() {
        if !used[start] && adj[start].len() == 1 {
            let (chain, _) = walk(start, &mut used);
            polylines.push(chain);
        }
    }
    let mut closed_flags = vec![false; polylines.len()];
    for start in 0..points.len() {
        if !used[start] {
            let (chain, closed) = walk(start, &mut used);
            polylines.push(chain);
            closed_flags.push(closed);
        }
    }
    let polylines = polylines
        .into_iter()
        .zip(closed_flags)
        .map(|(chain, closed)| {
            let mut pts: Vec<Complex64> = Vec::with_capacity(chain.len());
            for k in chain {
                if pts.last() != Some(&points[k]) {
                    pts.push(points[k]);
                }
            }
            Polyline { points: pts, closed }
        })
        .collect();
    Ok(BoundaryCurve { polylines, tau })
}
