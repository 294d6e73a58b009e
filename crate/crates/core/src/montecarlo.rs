//! Monte Carlo edge experiments.
//!
//! Each trial draws a matrix, extracts the eigenvalues whose rescaled
//! coordinate `zhat` lies in the disk `|zhat| <= window`, and keeps them
//! grouped by trial. Histograms are normalised per unit `zhat`-area per
//! trial, so they estimate the kernel diagonal directly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ensemble::{sample_hessenberg, sample_deformed, EnsembleSpec};
use crate::geometry::EdgePoint;
use crate::kernel::{area_factor, kernel_diagonal, kernel_index, rescale, KernelModel, ScaledPoint, DEFAULT_WINDOW};
use crate::linalg::{eigenvalues_in_disk, EigenSolver, LinalgError, WindowSolver};
use crate::quad::{GaussLegendre, PANEL_ORDER};
use crate::rng::RngStream;
use crate::stats::{sup_relative_error, PREDICTION_FLOOR};
use crate::{Error, Result};

/// Default `|Im zhat|` band for the 1-D profile.
pub const DEFAULT_IM_BAND: f64 = 2.0;
/// Default `|zhat|` cut for harvested eigenvalues.
pub const DEFAULT_EXPERIMENT_WINDOW: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub spec: EnsembleSpec,
    pub edge: EdgePoint,
    pub trials: usize,
    pub window: f64,
    /// `(count_x, count_y)`; `count_x` is also the number of profile bins.
    pub bins: (usize, usize),
    pub seed: u64,
    pub im_band: f64,
}

impl ExperimentConfig {
    pub fn new(spec: EnsembleSpec, edge: EdgePoint, trials: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            spec,
            edge,
            trials,
            window: DEFAULT_EXPERIMENT_WINDOW,
            bins: (24, 24),
            seed,
            im_band: DEFAULT_IM_BAND,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.window > 0.0 && self.window <= DEFAULT_WINDOW) {
            return Err(Error::Config(format!(
                "window {} must lie in (0, {DEFAULT_WINDOW}]",
                self.window
            )));
        }
        if self.bins.0 == 0 || self.bins.1 == 0 {
            return Err(Error::Config("bin counts must be positive".into()));
        }
        if !(self.im_band > 0.0) {
            return Err(Error::Config(format!("im_band {} must be positive", self.im_band)));
        }
        self.edge.require_regular()
    }

    pub fn model(&self) -> KernelModel {
        KernelModel {
            index: kernel_index(&self.spec, &self.edge),
            edge: self.edge,
            tau: self.spec.tau,
            window: DEFAULT_WINDOW,
        }
    }

    /// Radius in the `z` plane that maps onto `|zhat| <= window`.
    pub fn z_radius(&self) -> f64 {
        self.window * area_factor(&self.edge, self.spec.n).sqrt()
    }
}

/// Hex SHA-256 of a byte string.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn spec_digest(spec: &EnsembleSpec) -> String {
    digest_hex(serde_json::to_string(spec).expect("spec serializes").as_bytes())
}

pub fn edge_digest(edge: &EdgePoint) -> String {
    let fields = [edge.z0.re, edge.z0.im, edge.p00, edge.p0.re, edge.p0.im, edge.p1];
    let text = format!("{:?}/{}", fields.map(f64::to_bits), edge.class);
    digest_hex(text.as_bytes())
}

/// Rescaled eigenvalues kept in the window, grouped by trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSampleSet {
    pub trials: Vec<Vec<ScaledPoint>>,
    pub trials_completed: usize,
    pub spec_digest: String,
    pub edge_digest: String,
    pub window: f64,
}

impl EdgeSampleSet {
    pub fn total_points(&self) -> usize {
        self.trials.iter().map(Vec::len).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &ScaledPoint> {
        self.trials.iter().flatten()
    }
}

fn trial_eigenvalues(cfg: &ExperimentConfig, trial: usize, attempt: u8) -> std::result::Result<Vec<Complex64>, LinalgError> {
    let mut rng = RngStream::for_trial(cfg.seed, trial as u64, attempt);
    let h = sample_hessenberg(&cfg.spec, &mut rng).map_err(|e| LinalgError::LocalIncomplete(e.to_string()))?;
    // a slightly larger disk so the |zhat| cut is applied after rescaling
    let radius = cfg.z_radius() * (1.0 + 1e-9);
    match eigenvalues_in_disk(&h, cfg.edge.z0, radius, &WindowSolver::default()) {
        Ok(v) => Ok(v),
        Err(LinalgError::LocalIncomplete(_)) => {
            let spec = EigenSolver::new().solve(&h.to_dense())?;
            Ok(spec.eigenvalues)
        }
        Err(e) => Err(e),
    }
}

/// Runs `cfg.trials` independent trials. Trial `t` uses stream
/// `(t, attempt)`; a failing trial is retried once on a fresh stream.
pub fn run_edge_experiment(cfg: &ExperimentConfig) -> Result<EdgeSampleSet> {
    cfg.validate()?;
    cfg.spec.x0_diagonal()?;
    let trials: Vec<Vec<ScaledPoint>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let eig = match trial_eigenvalues(cfg, t, 0) {
                Ok(v) => v,
                Err(_) => trial_eigenvalues(cfg, t, 1).map_err(|source| Error::TrialFailed { trial: t, source })?,
            };
            let mut kept: Vec<ScaledPoint> = eig
                .into_iter()
                .map(|z| rescale(&cfg.edge, cfg.spec.n, z))
                .filter(|zh| zh.norm() <= cfg.window)
                .collect();
            kept.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            Ok(kept)
        })
        .collect::<Result<_>>()?;
    Ok(EdgeSampleSet {
        trials_completed: trials.len(),
        trials,
        spec_digest: spec_digest(&cfg.spec),
        edge_digest: edge_digest(&cfg.edge),
        window: cfg.window,
    })
}

/// Direct dense sampling path, used to cross-check the Hessenberg sampler.
pub fn dense_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<ScaledPoint>> {
    let mut rng = RngStream::for_trial(cfg.seed, trial as u64, 0);
    let x = sample_deformed(&cfg.spec, &mut rng)?;
    let eig = EigenSolver::new().solve(&x)?.eigenvalues;
    Ok(eig
        .into_iter()
        .map(|z| rescale(&cfg.edge, cfg.spec.n, z))
        .filter(|zh| zh.norm() <= cfg.window)
        .collect())
}

// ---------------------------------------------------------------------------
// areas and bin integrals over rectangle ∩ disk

fn half_chord(x: f64, r: f64) -> f64 {
    (r * r - x * x).max(0.0).sqrt()
}

/// `int_{[a,b] ∩ [-r,r]} min(c, sqrt(r^2 - x^2)) dx` for `c >= 0`.
fn capped_chord_integral(a: f64, b: f64, c: f64, r: f64) -> f64 {
    let a = a.max(-r);
    let b = b.min(r);
    if b <= a {
        return 0.0;
    }
    let prim = |x: f64| 0.5 * (x * half_chord(x, r) + r * r * (x / r).clamp(-1.0, 1.0).asin());
    let arc = |lo: f64, hi: f64| if hi > lo { prim(hi) - prim(lo) } else { 0.0 };
    if c >= r {
        return arc(a, b);
    }
    let xc = half_chord(c, r);
    let flat = (b.min(xc) - a.max(-xc)).max(0.0) * c;
    arc(a, b.min(-xc)) + flat + arc(a.max(xc), b)
}

/// Area of `[a, b] x [y0, y1]` inside the disk of radius `r`.
pub fn rect_disk_area(a: f64, b: f64, y0: f64, y1: f64, r: f64) -> f64 {
    let g = |y: f64| y.signum() * capped_chord_integral(a, b, y.abs(), r);
    (g(y1) - g(y0)).max(0.0)
}

/// `int f(x) l(x) dx` over `[a, b]`, where `l(x)` is the length of
/// `[y0, y1] ∩ [-s(x), s(x)]`, `s(x) = sqrt(r^2 - x^2)`. Integrated in
/// `x = -r cos t` with breakpoints at the kinks of `l`, so every panel is
/// smooth.
fn bin_integral(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, y0: f64, y1: f64, r: f64) -> Result<f64> {
    thread_local! {
        static RULE: GaussLegendre = GaussLegendre::new(PANEL_ORDER);
    }
    let a = a.max(-r);
    let b = b.min(r);
    if b <= a {
        return Ok(0.0);
    }
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let x = half_chord(y, r);
            cuts.extend([-x, x]);
        }
    }
    let mut ts: Vec<f64> = cuts
        .into_iter()
        .filter(|x| *x >= a && *x <= b)
        .map(|x| (-x / r).clamp(-1.0, 1.0).acos())
        .collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    RULE.with(|rule| {
        let mut acc = 0.0;
        for w in ts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let h = 0.5 * (t1 - t0);
            let mid = 0.5 * (t0 + t1);
            for (node, weight) in rule.nodes.iter().zip(&rule.weights) {
                let t = mid + h * node;
                let x = -r * t.cos();
                let s = r * t.sin();
                let len = (y1.min(s) - y0.max(-s)).max(0.0);
                if len > 0.0 {
                    acc += weight * h * f(x)? * len * r * t.sin();
                }
            }
        }
        Ok(acc)
    })
}

// ---------------------------------------------------------------------------
// histograms

/// Density of kept points against `Re zhat`, restricted to
/// `|Im zhat| <= band` and the disk `|zhat| <= window`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Area of each bin ∩ band ∩ disk.
    pub areas: Vec<f64>,
    pub trials: usize,
    pub band: f64,
    pub window: f64,
}

impl Profile {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Counts per unit area per trial.
    pub fn density(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.areas)
            .map(|(&c, &a)| if a > 0.0 { c as f64 / (a * self.trials as f64) } else { 0.0 })
            .collect()
    }

    /// One-sigma Poisson error of [`Profile::density`].
    pub fn density_error(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.areas)
            .map(|(&c, &a)| if a > 0.0 { (c.max(1) as f64).sqrt() / (a * self.trials as f64) } else { 0.0 })
            .collect()
    }

    /// Expected counts per bin per trial under the kernel diagonal.
    pub fn expected_per_trial(&self, model: &KernelModel) -> Result<Vec<f64>> {
        let f = |x: f64| model.density(x);
        self.edges
            .windows(2)
            .map(|w| bin_integral(&f, w[0], w[1], -self.band, self.band, self.window))
            .collect()
    }

    /// Bin-averaged kernel diagonal.
    pub fn predicted(&self, model: &KernelModel) -> Result<Vec<f64>> {
        Ok(self
            .expected_per_trial(model)?
            .into_iter()
            .zip(&self.areas)
            .map(|(e, &a)| if a > 0.0 { e / a } else { 0.0 })
            .collect())
    }

    /// Bins whose centre lies in `[lo, hi]`.
    pub fn bins_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        self.centers()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c >= lo && **c <= hi)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Normalised 2-D histogram in the `zhat` plane plus the band profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramGrid {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major: `counts[iy * nx + ix]`.
    pub counts: Vec<u64>,
    pub areas: Vec<f64>,
    pub trials: usize,
    pub window: f64,
    pub profile: Profile,
}

impl HistogramGrid {
    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn density(&self) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.areas)
            .map(|(&c, &a)| if a > 0.0 { c as f64 / (a * self.trials as f64) } else { 0.0 })
            .collect()
    }

    /// `sum density * area`, which equals kept points per trial.
    pub fn total_mass(&self) -> f64 {
        self.density().iter().zip(&self.areas).map(|(d, a)| d * a).sum()
    }

    pub fn predicted(&self, model: &KernelModel) -> Result<Vec<f64>> {
        let f = |x: f64| model.density(x);
        let mut out = Vec::with_capacity(self.counts.len());
        for iy in 0..self.ny() {
            for ix in 0..self.nx() {
                let area = self.areas[iy * self.nx() + ix];
                if area <= 0.0 {
                    out.push(0.0);
                    continue;
                }
                let e = bin_integral(
                    &f,
                    self.x_edges[ix],
                    self.x_edges[ix + 1],
                    self.y_edges[iy],
                    self.y_edges[iy + 1],
                    self.window,
                )?;
                out.push(e / area);
            }
        }
        Ok(out)
    }
}

fn linspace(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

fn bin_of(edges: &[f64], x: f64) -> Option<usize> {
    let n = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n]);
    if !(x >= lo && x <= hi) {
        return None;
    }
    let i = ((x - lo) / (hi - lo) * n as f64).floor() as usize;
    Some(i.min(n - 1))
}

pub fn density_histogram(samples: &EdgeSampleSet, cfg: &ExperimentConfig) -> Result<HistogramGrid> {
    if samples.trials_completed == 0 || samples.trials.is_empty() {
        return Err(Error::Stats("empty sample set".into()));
    }
    let w = samples.window;
    let (nx, ny) = cfg.bins;
    let x_edges = linspace(-w, w, nx);
    let y_edges = linspace(-w, w, ny);
    let mut counts = vec![0u64; nx * ny];
    let mut pcounts = vec![0u64; nx];
    for p in samples.points() {
        if let (Some(ix), Some(iy)) = (bin_of(&x_edges, p.re), bin_of(&y_edges, p.im)) {
            counts[iy * nx + ix] += 1;
        }
        if p.im.abs() <= cfg.im_band {
            if let Some(ix) = bin_of(&x_edges, p.re) {
                pcounts[ix] += 1;
            }
        }
    }
    let mut areas = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            areas.push(rect_disk_area(x_edges[ix], x_edges[ix + 1], y_edges[iy], y_edges[iy + 1], w));
        }
    }
    let band = cfg.im_band.min(w);
    let pareas = x_edges
        .windows(2)
        .map(|e| rect_disk_area(e[0], e[1], -band, band, w))
        .collect();
    let trials = samples.trials_completed;
    Ok(HistogramGrid {
        profile: Profile {
            edges: x_edges.clone(),
            counts: pcounts,
            areas: pareas,
            trials,
            band,
            window: w,
        },
        x_edges,
        y_edges,
        counts,
        areas,
        trials,
        window: w,
    })
}

/// `int_{|zhat| <= window} K(zhat, zhat) dA`, the expected number of kept
/// points per trial.
pub fn expected_kept(model: &KernelModel, window: f64) -> Result<f64> {
    let f = |x: f64| model.density(x);
    bin_integral(&f, -window, window, -window, window, window)
}

// ---------------------------------------------------------------------------
// pair statistics

/// Ordered pair counts by separation `|zhat - what|`.
///
/// `within` counts pairs from the same trial; `across` counts pairs from
/// different trials, which sample the product of the marginals. Their
/// per-trial normalisations are `within / T` and `across / (T (T - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub edges: Vec<f64>,
    pub within: Vec<u64>,
    pub across: Vec<u64>,
    pub trials: usize,
}

impl PairCorrelation {
    fn normalised(&self, w: u64, a: u64) -> f64 {
        let t = self.trials as f64;
        let a = a as f64 / (t * (t - 1.0));
        if a > 0.0 {
            (w as f64 / t) / a
        } else {
            f64::NAN
        }
    }

    /// `R2 / (rho x rho)` per separation bin.
    pub fn ratio(&self) -> Vec<f64> {
        self.within.iter().zip(&self.across).map(|(&w, &a)| self.normalised(w, a)).collect()
    }

    fn class(&self, keep: impl Fn(f64, f64) -> bool) -> f64 {
        let mut w = 0;
        let mut a = 0;
        for (i, e) in self.edges.windows(2).enumerate() {
            if keep(e[0], e[1]) {
                w += self.within[i];
                a += self.across[i];
            }
        }
        self.normalised(w, a)
    }

    /// Pooled ratio over separations below `r`; `r` must be a bin edge.
    pub fn coincidence_ratio(&self, r: f64) -> f64 {
        self.class(|_, hi| hi <= r + 1e-12)
    }

    /// Pooled ratio over separations above `r`; `r` must be a bin edge.
    pub fn distant_ratio(&self, r: f64) -> f64 {
        self.class(|lo, _| lo >= r - 1e-12)
    }
}

/// Separation histogram of within-trial and across-trial pairs.
///
/// The bin width is `bin`; the range is `[0, 2 window]`.
pub fn pair_correlation_estimate(samples: &EdgeSampleSet, spec: &EnsembleSpec, bin: f64) -> Result<PairCorrelation> {
    spec.require_r0(2)?;
    if samples.trials.len() < 2 {
        return Err(Error::Stats("pair statistics need at least two trials".into()));
    }
    if !(bin > 0.0) {
        return Err(Error::Config(format!("pair bin width {bin} must be positive")));
    }
    let nb = (2.0 * samples.window / bin).ceil() as usize;
    let edges: Vec<f64> = (0..=nb).map(|i| i as f64 * bin).collect();
    let mut within = vec![0u64; nb];
    let mut all = vec![0u64; nb];
    let pooled: Vec<ScaledPoint> = samples.points().copied().collect();
    let idx = |d: f64| ((d / bin) as usize).min(nb - 1);
    for t in &samples.trials {
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                within[idx((t[i] - t[j]).norm())] += 2;
            }
        }
    }
    let rows: Vec<Vec<u64>> = (0..pooled.len())
        .into_par_iter()
        .map(|i| {
            let mut h = vec![0u64; nb];
            for j in i + 1..pooled.len() {
                h[idx((pooled[i] - pooled[j]).norm())] += 2;
            }
            h
        })
        .collect();
    for h in rows {
        for (a, b) in all.iter_mut().zip(h) {
            *a += b;
        }
    }
    let across = all.iter().zip(&within).map(|(a, w)| a - w).collect();
    Ok(PairCorrelation {
        edges,
        within,
        across,
        trials: samples.trials.len(),
    })
}

/// Predicted `R2 / (rho x rho)` pooled over separations in `[lo, hi)`,
/// estimated by reweighting pairs drawn from neighbouring trials with
/// `det K / (K(z,z) K(w,w)) = 1 - |K(z,w)|^2 / (K(z,z) K(w,w))`.
pub fn predicted_pair_ratio(model: &KernelModel, samples: &EdgeSampleSet, lo: f64, hi: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for pair in samples.trials.windows(2) {
        for z in &pair[0] {
            for w in &pair[1] {
                let d = (z - w).norm();
                if d >= lo && d < hi {
                    let kzw = model.kernel(*z, *w)?.norm_sqr();
                    let kz = model.density(z.re)?;
                    let kw = model.density(w.re)?;
                    num += 1.0 - kzw / (kz * kw);
                    den += 1.0;
                }
            }
        }
    }
    if den == 0.0 {
        return Err(Error::Stats(format!("no neighbouring-trial pairs with separation in [{lo}, {hi})")));
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// convergence

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub trials: usize,
    pub kept_per_trial: f64,
    /// Sup relative profile error over the bins in the region whose
    /// predicted density is at least [`PREDICTION_FLOOR`].
    pub profile_error: f64,
    /// Relative one-sigma Poisson noise of the bin attaining the sup.
    pub noise: f64,
    /// Number of region bins dropped by the floor.
    pub dropped_bins: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergencePlan {
    pub template: EnsembleSpec,
    pub edge: EdgePoint,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub window: f64,
    pub bins: usize,
    pub im_band: f64,
    /// Range of `Re zhat` over which the sup is taken.
    pub region: (f64, f64),
}

impl ConvergencePlan {
    pub fn new(template: EnsembleSpec, edge: EdgePoint, n_list: Vec<usize>, trials: usize, seed: u64) -> Self {
        Self {
            template,
            edge,
            n_list,
            trials,
            seed,
            window: DEFAULT_EXPERIMENT_WINDOW,
            bins: 24,
            im_band: DEFAULT_IM_BAND,
            region: (-2.0, 2.0),
        }
    }
}

/// Profile error against the kernel, restricted to region bins above the
/// prediction floor. Returns `(sup error, relative noise at the sup bin,
/// dropped bins)`.
pub fn admissible_profile_error(profile: &Profile, model: &KernelModel, region: (f64, f64)) -> Result<(f64, f64, usize)> {
    let predicted = profile.predicted(model)?;
    let density = profile.density();
    let expected = profile.expected_per_trial(model)?;
    let bins = profile.bins_in(region.0, region.1);
    let keep: Vec<usize> = bins.iter().copied().filter(|&i| predicted[i] >= PREDICTION_FLOOR).collect();
    if keep.is_empty() {
        return Err(Error::Stats("no profile bin above the prediction floor".into()));
    }
    let emp: Vec<f64> = keep.iter().map(|&i| density[i]).collect();
    let pre: Vec<f64> = keep.iter().map(|&i| predicted[i]).collect();
    let sup = sup_relative_error(&emp, &pre)?;
    let arg = keep
        .iter()
        .copied()
        .max_by(|&a, &b| {
            let ra = (density[a] - predicted[a]).abs() / predicted[a];
            let rb = (density[b] - predicted[b]).abs() / predicted[b];
            ra.total_cmp(&rb)
        })
        .expect("nonempty");
    let noise = 1.0 / (expected[arg] * profile.trials as f64).sqrt();
    Ok((sup, noise, bins.len() - keep.len()))
}

pub fn convergence_study(plan: &ConvergencePlan) -> Result<Vec<ConvergenceRow>> {
    if plan.n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("N list must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(plan.n_list.len());
    for &n in &plan.n_list {
        let spec = plan.template.with_n(n)?;
        let mut cfg = ExperimentConfig::new(spec, plan.edge, plan.trials, plan.seed)?;
        cfg.window = plan.window;
        cfg.bins = (plan.bins, plan.bins);
        cfg.im_band = plan.im_band;
        cfg.validate()?;
        let samples = run_edge_experiment(&cfg)?;
        let hist = density_histogram(&samples, &cfg)?;
        let (err, noise, dropped) = admissible_profile_error(&hist.profile, &cfg.model(), plan.region)?;
        rows.push(ConvergenceRow {
            n,
            trials: plan.trials,
            kept_per_trial: samples.total_points() as f64 / samples.trials_completed as f64,
            profile_error: err,
            noise,
            dropped_bins: dropped,
        });
    }
    Ok(rows)
}

/// Soft non-increase of the profile error along the rows: at most one
/// step may go up, and only by `slack` times the larger of the two
/// relative noise levels.
pub fn soft_non_increasing(rows: &[ConvergenceRow], slack: f64) -> bool {
    let mut inversions = 0;
    for w in rows.windows(2) {
        let rise = w[1].profile_error - w[0].profile_error;
        if rise > 0.0 {
            inversions += 1;
            if inversions > 1 || rise > slack * w[0].noise.max(w[1].noise) {
                return false;
            }
        }
    }
    true
}

/// Bulk value of every kernel diagonal, `1/pi`.
pub const BULK_DENSITY: f64 = 1.0 / PI;

/// Predicted profile column, for reports: the kernel diagonal at the bin
/// centres.
pub fn profile_centers_prediction(model: &KernelModel, centers: &[f64]) -> Result<Vec<f64>> {
    centers.iter().map(|&x| kernel_diagonal(model.index as f64, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_spec, AtomMeasure};
    use crate::geometry::{classify_edge, DEFAULT_TOL_B, DEFAULT_TOL_Q};
    use crate::kernel::ginibre_edge_density;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ginibre_cfg(n: usize, trials: usize, seed: u64) -> ExperimentConfig {
        let nu = AtomMeasure::dirac(c(0.0, 0.0));
        let spec = make_spec(nu.clone(), 1.0, n, 0, vec![], 2, None).unwrap();
        let edge = classify_edge(&nu, 1.0, c(1.0, 0.0), DEFAULT_TOL_B, DEFAULT_TOL_Q).unwrap();
        ExperimentConfig::new(spec, edge, trials, seed).unwrap()
    }

    #[test]
    fn disk_areas() {
        let r = 3.0;
        assert!((rect_disk_area(-3.0, 3.0, -3.0, 3.0, r) - PI * 9.0).abs() < 1e-12);
        assert!((rect_disk_area(0.0, 3.0, 0.0, 3.0, r) - PI * 9.0 / 4.0).abs() < 1e-12);
        assert!((rect_disk_area(-1.0, 1.0, -1.0, 1.0, r) - 4.0).abs() < 1e-12);
        assert_eq!(rect_disk_area(2.5, 3.0, 2.5, 3.0, r), 0.0);
        // strip |y| <= 2 of the disk: 2 (2 sqrt5 + 9 asin(2/3))
        let strip = 2.0 * (2.0 * 5f64.sqrt() + 9.0 * (2.0f64 / 3.0).asin());
        assert!((rect_disk_area(-3.0, 3.0, -2.0, 2.0, r) - strip).abs() < 1e-12);
        // partition additivity
        let e = linspace(-3.0, 3.0, 7);
        let total: f64 = e
            .windows(2)
            .flat_map(|a| e.windows(2).map(move |b| rect_disk_area(a[0], a[1], b[0], b[1], r)))
            .sum();
        assert!((total - PI * 9.0).abs() < 1e-11);
    }

    #[test]
    fn bin_integral_of_one_is_area() {
        let one = |_: f64| Ok(1.0);
        for &(a, b, y0, y1) in &[(-3.0, 3.0, -3.0, 3.0), (2.5, 3.0, -2.0, 2.0), (0.3, 1.7, 1.1, 2.9), (-2.9, -2.2, -3.0, -1.0)] {
            let q = bin_integral(&one, a, b, y0, y1, 3.0).unwrap();
            let exact = rect_disk_area(a, b, y0, y1, 3.0);
            assert!((q - exact).abs() < 1e-12, "{a} {b} {y0} {y1}: {q} vs {exact}");
        }
        // x^2 over the disk: pi r^4 / 4
        let sq = |x: f64| Ok(x * x);
        let q = bin_integral(&sq, -3.0, 3.0, -3.0, 3.0, 3.0).unwrap();
        assert!((q - PI * 81.0 / 4.0).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        let cfg = ginibre_cfg(64, 1, 1);
        let mut bad = cfg.clone();
        bad.trials = 0;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut bad = cfg.clone();
        bad.window = 6.5;
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::new(cfg.spec.clone(), cfg.edge, 0, 1).is_err());
    }

    #[test]
    fn deterministic_and_windowed() {
        let cfg = ginibre_cfg(128, 12, 42);
        let a = run_edge_experiment(&cfg).unwrap();
        let b = run_edge_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trials_completed, 12);
        assert!(a.points().all(|p| p.norm() <= 3.0));
        assert!(a.total_points() > 0);
        let other = ExperimentConfig { seed: 43, ..cfg };
        assert_ne!(run_edge_experiment(&other).unwrap(), a);
    }

    #[test]
    fn windowed_solver_matches_dense_path() {
        // spiked spec goes through the dense sampler and Householder reduction
        let nu = AtomMeasure::dirac(c(0.0, 0.0));
        let spec = make_spec(nu.clone(), 1.0, 96, 1, vec![], 2, Some(c(1.0, 0.0))).unwrap();
        let edge = classify_edge(&nu, 1.0, c(1.0, 0.0), DEFAULT_TOL_B, DEFAULT_TOL_Q).unwrap();
        let cfg = ExperimentConfig::new(spec, edge, 4, 9).unwrap();
        let set = run_edge_experiment(&cfg).unwrap();
        for t in 0..4 {
            let mut dense = dense_trial(&cfg, t).unwrap();
            dense.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            assert_eq!(dense.len(), set.trials[t].len(), "trial {t}");
            for (x, y) in dense.iter().zip(&set.trials[t]) {
                assert!((x - y).norm() < 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn histogram_mass_and_order_independence() {
        let cfg = ginibre_cfg(128, 16, 5);
        let set = run_edge_experiment(&cfg).unwrap();
        let h = density_histogram(&set, &cfg).unwrap();
        let kept = set.total_points() as f64 / 16.0;
        assert!((h.total_mass() - kept).abs() < 1e-12 * kept.max(1.0));
        let mut shuffled = set.clone();
        shuffled.trials.reverse();
        shuffled.trials.swap(0, 5);
        assert_eq!(density_histogram(&shuffled, &cfg).unwrap(), h);
        let empty = EdgeSampleSet {
            trials: vec![],
            trials_completed: 0,
            ..set
        };
        assert!(density_histogram(&empty, &cfg).is_err());
    }

    #[test]
    fn predicted_profile_is_erfc_for_index_zero() {
        let cfg = ginibre_cfg(64, 1, 0);
        let set = EdgeSampleSet {
            trials: vec![vec![]],
            trials_completed: 1,
            spec_digest: String::new(),
            edge_digest: String::new(),
            window: 3.0,
        };
        let h = density_histogram(&set, &cfg).unwrap();
        let model = cfg.model();
        let pred = h.profile.predicted(&model).unwrap();
        // bin average of the erfc closed form over x alone, since the
        // profile band has full height away from the disk rim
        let rule = GaussLegendre::new(30);
        for (i, w) in h.profile.edges.windows(2).enumerate().skip(4).take(16) {
            let avg = rule.panel(&|x: f64| ginibre_edge_density(x), w[0], w[1]) / (w[1] - w[0]);
            assert!((pred[i] - avg).abs() < 1e-11, "bin {i}");
        }
        let centers = profile_centers_prediction(&model, &h.profile.centers()).unwrap();
        for (x, k) in h.profile.centers().iter().zip(centers) {
            assert!((k - ginibre_edge_density(*x)).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_counts_conserve_pairs() {
        let cfg = ginibre_cfg(128, 10, 3);
        let set = run_edge_experiment(&cfg).unwrap();
        let pc = pair_correlation_estimate(&set, &cfg.spec, 0.2).unwrap();
        let within: u64 = pc.within.iter().sum();
        let expect: u64 = set.trials.iter().map(|t| (t.len() * t.len().saturating_sub(1)) as u64).sum();
        assert_eq!(within, expect);
        let p = set.total_points() as u64;
        let across: u64 = pc.across.iter().sum();
        assert_eq!(within + across, p * (p - 1));
        let spec1 = make_spec(AtomMeasure::dirac(c(0.0, 0.0)), 1.0, 128, 0, vec![], 1, None).unwrap();
        assert!(matches!(pair_correlation_estimate(&set, &spec1, 0.2), Err(Error::InsufficientR0(2, 1))));
    }

    #[test]
    fn lonely_trials_give_no_pairs() {
        let set = EdgeSampleSet {
            trials: vec![vec![c(0.0, 0.0)], vec![c(0.1, 0.0)], vec![]],
            trials_completed: 3,
            spec_digest: String::new(),
            edge_digest: String::new(),
            window: 3.0,
        };
        let cfg = ginibre_cfg(64, 1, 0);
        let pc = pair_correlation_estimate(&set, &cfg.spec, 0.2).unwrap();
        assert_eq!(pc.within.iter().sum::<u64>(), 0);
        assert_eq!(pc.across.iter().sum::<u64>(), 2);
    }

    #[test]
    fn convergence_table_shape() {
        let cfg = ginibre_cfg(64, 1, 0);
        let plan = ConvergencePlan::new(cfg.spec.clone(), cfg.edge, vec![32, 64], 40, 11);
        let a = convergence_study(&plan).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|r| r.profile_error.is_finite() && r.profile_error > 0.0));
        assert_eq!(a, convergence_study(&plan).unwrap());
        let bad = ConvergencePlan::new(cfg.spec, cfg.edge, vec![64, 32], 4, 1);
        assert!(convergence_study(&bad).is_err());
    }

    #[test]
    fn soft_trend_allows_one_small_inversion() {
        let row = |e: f64, noise: f64| ConvergenceRow {
            n: 0,
            trials: 1,
            kept_per_trial: 0.0,
            profile_error: e,
            noise,
            dropped_bins: 0,
        };
        assert!(soft_non_increasing(&[row(0.3, 0.02), row(0.2, 0.02), row(0.1, 0.02)], 1.5));
        assert!(soft_non_increasing(&[row(0.3, 0.02), row(0.2, 0.02), row(0.22, 0.02)], 1.5));
        assert!(!soft_non_increasing(&[row(0.3, 0.02), row(0.2, 0.02), row(0.25, 0.02)], 1.5));
        assert!(!soft_non_increasing(&[row(0.2, 0.05), row(0.21, 0.05), row(0.22, 0.05)], 1.5));
    }
}
