//! Deformed Ginibre ensembles `X = X0 + sqrt(tau/N) G`.
//!
//! The mean `X0` is diagonal: each atom `a_k` of the limiting measure is
//! repeated `r_k ~ c_k N` times, followed by `r0` copies of the edge point,
//! a short list of extra normal eigenvalues and `R0` zeros.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{hessenberg_in_place, ComplexMatrix, PackedHessenberg, ZERO};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Complex number in `{re, im}` object form for JSON files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Point {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Point {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<Point> for Complex64 {
    fn from(p: Point) -> Self {
        Complex64::new(p.re, p.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub a: Complex64,
    pub c: f64,
}

/// Atomic probability measure `sum_k c_k delta_{a_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomMeasure {
    atoms: Vec<Atom>,
}

impl AtomMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for (i, at) in atoms.iter().enumerate() {
            if !(at.c > 0.0) || !at.c.is_finite() {
                return Err(Error::InvalidMeasure(format!("weight {} of atom {i} is not positive", at.c)));
            }
            if !at.a.re.is_finite() || !at.a.im.is_finite() {
                return Err(Error::InvalidMeasure(format!("atom {i} is not finite")));
            }
            if atoms[..i].iter().any(|b| b.a == at.a) {
                return Err(Error::InvalidMeasure(format!("atom {} repeated", at.a)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.c).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// Convenience constructor from `(a, c)` pairs.
    pub fn from_pairs(pairs: &[(Complex64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(a, c)| Atom { a, c }).collect())
    }

    /// The point mass at `a`.
    pub fn dirac(a: Complex64) -> Self {
        Self {
            atoms: vec![Atom { a, c: 1.0 }],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Finite-`N` description of the mean matrix and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub nu: AtomMeasure,
    pub tau: f64,
    pub n: usize,
    pub ranks: Vec<usize>,
    pub r0: usize,
    pub a_t1: Vec<Complex64>,
    pub big_r0: usize,
    pub z0_hint: Option<Complex64>,
    /// Largest allowed `|r_k - c_k N|`.
    pub rank_bound: f64,
}

/// Largest-remainder apportionment of `total` seats with the given shares.
fn apportion(shares: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|c| c * total as f64).collect();
    let mut seats: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = seats.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // ties go to the earlier atom
    order.sort_by(|&i, &j| {
        let ri = quotas[i] - quotas[i].floor();
        let rj = quotas[j] - quotas[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        seats[i] += 1;
    }
    seats
}

/// Builds a spec with ranks apportioned from `c_k (N - r0 - len(a_t1) - R0)`.
pub fn make_spec(
    nu: AtomMeasure,
    tau: f64,
    n: usize,
    r0: usize,
    a_t1: Vec<Complex64>,
    big_r0: usize,
    z0_hint: Option<Complex64>,
) -> Result<EnsembleSpec> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidSpec(format!("tau must be positive, got {tau}")));
    }
    let reserved = r0 + a_t1.len() + big_r0;
    if reserved >= n {
        return Err(Error::InvalidSpec(format!(
            "N = {n} leaves no room for the atoms after reserving {reserved} rows"
        )));
    }
    if let Some(z0) = z0_hint {
        if a_t1.iter().any(|&a| a == z0) {
            return Err(Error::InvalidSpec(format!("z0 = {z0} is an eigenvalue of the extra block")));
        }
    }
    let shares: Vec<f64> = nu.atoms().iter().map(|a| a.c).collect();
    let ranks = apportion(&shares, n - reserved);
    if let Some(k) = ranks.iter().position(|&r| r == 0) {
        return Err(Error::InvalidSpec(format!("N = {n} too small: atom {k} receives rank 0")));
    }
    let rank_bound = reserved as f64 + 1.0;
    let spec = EnsembleSpec {
        nu,
        tau,
        n,
        ranks,
        r0,
        a_t1,
        big_r0,
        z0_hint,
        rank_bound,
    };
    debug_assert_eq!(spec.ranks.iter().sum::<usize>() + reserved, n);
    for (r, at) in spec.ranks.iter().zip(spec.nu.atoms()) {
        if (*r as f64 - at.c * n as f64).abs() > spec.rank_bound {
            return Err(Error::InvalidSpec(format!("rank {r} deviates from c N = {}", at.c * n as f64)));
        }
    }
    Ok(spec)
}

impl EnsembleSpec {
    /// Same template at a different matrix size.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        make_spec(self.nu.clone(), self.tau, n, self.r0, self.a_t1.clone(), self.big_r0, self.z0_hint)
    }

    /// Fails unless `R0 >= n_points`.
    pub fn require_r0(&self, n_points: usize) -> Result<()> {
        if self.big_r0 < n_points {
            return Err(Error::InsufficientR0(n_points, self.big_r0));
        }
        Ok(())
    }

    pub fn x0_diagonal(&self) -> Result<Vec<Complex64>> {
        let mut d = Vec::with_capacity(self.n);
        for (r, at) in self.ranks.iter().zip(self.nu.atoms()) {
            d.extend(std::iter::repeat(at.a).take(*r));
        }
        if self.r0 > 0 {
            let z0 = self
                .z0_hint
                .ok_or_else(|| Error::InvalidSpec("r0 > 0 requires z0".into()))?;
            d.extend(std::iter::repeat(z0).take(self.r0));
        }
        d.extend_from_slice(&self.a_t1);
        d.extend(std::iter::repeat(ZERO).take(self.big_r0));
        if d.len() != self.n {
            return Err(Error::InvalidSpec(format!("diagonal has {} entries, N = {}", d.len(), self.n)));
        }
        Ok(d)
    }

    /// Noise scale `sqrt(tau / N)`.
    pub fn noise_scale(&self) -> f64 {
        (self.tau / self.n as f64).sqrt()
    }
}

pub fn build_x0(spec: &EnsembleSpec) -> Result<ComplexMatrix> {
    Ok(ComplexMatrix::from_diagonal(&spec.x0_diagonal()?))
}

/// `N x N` matrix of i.i.d. standard complex normals.
pub fn sample_ginibre(n: usize, rng: &mut RngStream) -> ComplexMatrix {
    let mut g = ComplexMatrix::zeros(n, n);
    for z in g.as_mut_slice() {
        *z = rng.complex_normal();
    }
    g
}

pub fn sample_deformed(spec: &EnsembleSpec, rng: &mut RngStream) -> Result<ComplexMatrix> {
    let d = spec.x0_diagonal()?;
    let mut x = sample_ginibre(spec.n, rng);
    let s = spec.noise_scale();
    for z in x.as_mut_slice() {
        *z *= s;
    }
    for (i, di) in d.iter().enumerate() {
        x[(i, i)] += di;
    }
    Ok(x)
}

/// A matrix unitarily similar to a fresh `sample_deformed` draw, in upper
/// Hessenberg form.
///
/// When `X0 = c I` the reduction is skipped: the Hessenberg form of a
/// Ginibre matrix has i.i.d. standard complex normals on and above the
/// diagonal and independent subdiagonal entries with
/// `|h_{k+1,k}|^2 ~ Gamma(N - 1 - k, 1)`, so it can be drawn directly in
/// `O(N^2)`. Otherwise a dense sample is reduced by Householder
/// reflections.
pub fn sample_hessenberg(spec: &EnsembleSpec, rng: &mut RngStream) -> Result<PackedHessenberg> {
    let d = spec.x0_diagonal()?;
    let n = spec.n;
    let s = spec.noise_scale();
    if d.iter().all(|&z| z == d[0]) {
        let mut h = PackedHessenberg::zeros(n);
        for i in 0..n {
            let row = h.row_mut(i);
            let skip = if i == 0 { 0 } else { 1 };
            if i > 0 {
                let shape = (n - i) as f64;
                row[0] = Complex64::new(s * rng.gamma(shape).sqrt(), 0.0);
            }
            for z in &mut row[skip..] {
                *z = rng.complex_normal() * s;
            }
            row[skip] += d[0];
        }
        return Ok(h);
    }
    let mut x = sample_deformed(spec, rng)?;
    hessenberg_in_place(&mut x, None)?;
    Ok(PackedHessenberg::from_dense(&x)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomJson {
    re: f64,
    im: f64,
    c: f64,
}

/// JSON form of an ensemble spec; ranks are recomputed on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecJson {
    pub tau: f64,
    #[serde(rename = "N")]
    pub n: usize,
    atoms: Vec<AtomJson>,
    #[serde(default)]
    pub r0: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Point>,
    #[serde(default)]
    pub a_t1: Vec<Point>,
    #[serde(rename = "R0", default)]
    pub big_r0: usize,
}

impl From<&EnsembleSpec> for SpecJson {
    fn from(s: &EnsembleSpec) -> Self {
        Self {
            tau: s.tau,
            n: s.n,
            atoms: s
                .nu
                .atoms()
                .iter()
                .map(|a| AtomJson {
                    re: a.a.re,
                    im: a.a.im,
                    c: a.c,
                })
                .collect(),
            r0: s.r0,
            z0: s.z0_hint.map(Point::from),
            a_t1: s.a_t1.iter().copied().map(Point::from).collect(),
            big_r0: s.big_r0,
        }
    }
}

impl TryFrom<SpecJson> for EnsembleSpec {
    type Error = Error;

    fn try_from(j: SpecJson) -> Result<Self> {
        let nu = AtomMeasure::new(
            j.atoms
                .iter()
                .map(|a| Atom {
                    a: Complex64::new(a.re, a.im),
                    c: a.c,
                })
                .collect(),
        )?;
        make_spec(
            nu,
            j.tau,
            j.n,
            j.r0,
            j.a_t1.into_iter().map(Complex64::from).collect(),
            j.big_r0,
            j.z0.map(Complex64::from),
        )
    }
}

impl Serialize for EnsembleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpecJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for EnsembleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SpecJson::deserialize(d)?;
        EnsembleSpec::try_from(j).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::EigenSolver;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_atom_takes_remaining_rank() {
        let spec = make_spec(AtomMeasure::dirac(ZERO), 1.0, 100, 0, vec![], 2, None).unwrap();
        assert_eq!(spec.ranks, vec![98]);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let nu = AtomMeasure::from_pairs(&[(c(-1.0, 0.0), 0.5), (c(1.0, 0.0), 0.5)]).unwrap();
        let spec = make_spec(nu, 1.0, 101, 0, vec![], 1, None).unwrap();
        assert_eq!(spec.ranks, vec![50, 50]);
    }

    #[test]
    fn infeasible_when_r0_block_exceeds_n() {
        assert!(make_spec(AtomMeasure::dirac(ZERO), 1.0, 10, 0, vec![], 11, None).is_err());
    }

    #[test]
    fn z0_may_not_hit_extra_block() {
        let err = make_spec(AtomMeasure::dirac(ZERO), 1.0, 10, 1, vec![c(1.0, 0.0)], 0, Some(c(1.0, 0.0)));
        assert!(matches!(err, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn measure_validation() {
        assert!(AtomMeasure::from_pairs(&[(ZERO, 0.4), (c(1.0, 0.0), 0.5)]).is_err());
        assert!(AtomMeasure::from_pairs(&[(ZERO, 0.5), (ZERO, 0.5)]).is_err());
        assert!(AtomMeasure::from_pairs(&[(ZERO, -0.5), (c(1.0, 0.0), 1.5)]).is_err());
    }

    #[test]
    fn x0_layout() {
        let spec = make_spec(AtomMeasure::dirac(ZERO), 1.0, 5, 0, vec![], 2, None).unwrap();
        assert_eq!(build_x0(&spec).unwrap(), ComplexMatrix::zeros(5, 5));

        let spec = make_spec(AtomMeasure::dirac(c(2.0, 0.0)), 1.0, 5, 1, vec![c(0.0, 3.0)], 1, Some(c(1.0, 0.0))).unwrap();
        assert_eq!(spec.ranks, vec![2]);
        let d = build_x0(&spec).unwrap().diagonal();
        assert_eq!(d, vec![c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(0.0, 3.0), ZERO]);
    }

    #[test]
    fn x0_needs_z0_when_r0_positive() {
        let mut spec = make_spec(AtomMeasure::dirac(ZERO), 1.0, 5, 1, vec![], 0, Some(c(1.0, 0.0))).unwrap();
        spec.z0_hint = None;
        assert!(build_x0(&spec).is_err());
    }

    #[test]
    fn x0_trace_identity() {
        let nu = AtomMeasure::from_pairs(&[(c(1.0, 0.0), 0.3), (c(0.0, 2.0), 0.7)]).unwrap();
        let spec = make_spec(nu.clone(), 0.5, 40, 2, vec![c(-1.0, 1.0)], 3, Some(c(0.5, 0.5))).unwrap();
        let tr = build_x0(&spec).unwrap().trace();
        let expect: Complex64 = spec
            .ranks
            .iter()
            .zip(nu.atoms())
            .map(|(r, a)| a.a * *r as f64)
            .sum::<Complex64>()
            + c(0.5, 0.5) * 2.0
            + c(-1.0, 1.0);
        assert!((tr - expect).norm() < 1e-12);
    }

    #[test]
    fn ginibre_moments() {
        let mut rng = RngStream::new(2024, 0);
        let g = sample_ginibre(200, &mut rng);
        let k = g.as_slice().len() as f64;
        let m2 = g.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() / k;
        let m1 = g.as_slice().iter().sum::<Complex64>() / k;
        assert!((0.97..=1.03).contains(&m2), "{m2}");
        assert!(m1.norm() <= 0.03, "{m1}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_ginibre(20, &mut RngStream::new(1, 7));
        let b = sample_ginibre(20, &mut RngStream::new(1, 7));
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip() {
        let nu = AtomMeasure::from_pairs(&[(c(1.0, 0.0), 0.5), (c(0.0, 2.0), 0.5)]).unwrap();
        let spec = make_spec(nu, 1.6, 64, 1, vec![c(3.0, -1.0)], 2, Some(c(0.1, 0.2))).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: EnsembleSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert!(text.contains("\"N\":64") && text.contains("\"R0\":2"));
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let text = r#"{"tau":1,"N":10,"atoms":[{"re":0,"im":0,"c":1}],"R0":1,"bogus":3}"#;
        assert!(serde_json::from_str::<EnsembleSpec>(text).is_err());
    }

    #[test]
    fn hessenberg_fast_path_has_ginibre_scale() {
        // spectral radius of sqrt(tau/N) G concentrates at sqrt(tau)
        let spec = make_spec(AtomMeasure::dirac(ZERO), 4.0, 200, 0, vec![], 2, None).unwrap();
        let h = sample_hessenberg(&spec, &mut RngStream::new(3, 0)).unwrap();
        let ev = EigenSolver::new().solve(&h.to_dense()).unwrap().eigenvalues;
        let rmax = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((1.85..2.3).contains(&rmax), "{rmax}");
        let mean_sq = ev.iter().map(|z| z.norm_sqr()).sum::<f64>() / 200.0;
        // circular law on radius 2: E|z|^2 = 2
        assert!((mean_sq - 2.0).abs() < 0.15, "{mean_sq}");
    }
}
