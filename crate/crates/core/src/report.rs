//! Summary JSON, CSV tables and SVG figures.
//!
//! Everything written here is a pure function of the run inputs, so
//! emitting the same run twice gives identical bytes. Wall-clock timings
//! live in a separate `timings.json` for that reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Point};
use crate::geometry::{BoundaryCurve, EdgeClass, EdgePoint};
use crate::kernel::{kernel_diagonal, KernelModel};
use crate::montecarlo::{
    digest_hex, expected_kept, ConvergenceRow, EdgeSampleSet, ExperimentConfig, HistogramGrid, PairCorrelation,
    BULK_DENSITY,
};
use crate::stats::GofResult;
use crate::{Error, Result};

/// The experiment parameters as they appear in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEcho {
    pub spec: EnsembleSpec,
    pub z0: Point,
    pub trials: usize,
    pub window: f64,
    pub bins: [usize; 2],
    pub im_band: f64,
    pub seed: u64,
}

impl ExperimentEcho {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            spec: cfg.spec.clone(),
            z0: cfg.edge.z0.into(),
            trials: cfg.trials,
            window: cfg.window,
            bins: [cfg.bins.0, cfg.bins.1],
            im_band: cfg.im_band,
            seed: cfg.seed,
        }
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn digest(&self) -> String {
        digest_hex(serde_json::to_string(self).expect("echo serializes").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeEcho {
    pub z0: Point,
    pub p00: f64,
    pub p0: Point,
    pub p1: f64,
    pub class: EdgeClass,
}

impl From<&EdgePoint> for EdgeEcho {
    fn from(e: &EdgePoint) -> Self {
        Self {
            z0: e.z0.into(),
            p00: e.p00,
            p0: e.p0.into(),
            p1: e.p1,
            class: e.class,
        }
    }
}

/// Pooled density of the profile bins with centre at or below a cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeepInside {
    pub cut: f64,
    pub density: f64,
    pub sigma: f64,
    pub bulk: f64,
    pub rel_error: f64,
}

pub fn deep_inside(hist: &HistogramGrid, cut: f64) -> Option<DeepInside> {
    let p = &hist.profile;
    let bins = p.bins_in(f64::NEG_INFINITY, cut);
    let count: u64 = bins.iter().map(|&i| p.counts[i]).sum();
    let area: f64 = bins.iter().map(|&i| p.areas[i]).sum();
    if area <= 0.0 {
        return None;
    }
    let t = p.trials as f64;
    let density = count as f64 / (area * t);
    Some(DeepInside {
        cut,
        density,
        sigma: (count.max(1) as f64).sqrt() / (area * t),
        bulk: BULK_DENSITY,
        rel_error: (density - BULK_DENSITY).abs() / BULK_DENSITY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub coincidence_cut: f64,
    pub coincidence_ratio: f64,
    pub distant_cut: f64,
    pub distant_ratio: f64,
}

/// A named pass/fail check recorded in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when the quantity could not be evaluated.
    pub value: Option<f64>,
    pub bound: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentEcho,
    pub config_digest: String,
    pub spec_digest: String,
    pub edge_digest: String,
    pub seed: u64,
    pub edge: EdgeEcho,
    pub kernel_index: usize,
    pub trials_completed: usize,
    pub kept_points: usize,
    pub kept_per_trial: f64,
    pub expected_kept_per_trial: f64,
    pub gof: GofResult,
    pub deep_inside: Option<DeepInside>,
    pub pair: Option<PairSummary>,
    pub checks: Vec<Check>,
}

/// Everything a finished edge experiment hands to [`emit_report`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub samples: EdgeSampleSet,
    pub histogram: HistogramGrid,
    pub gof: GofResult,
    pub pair: Option<PairCorrelation>,
    pub checks: Vec<Check>,
}

impl RunArtifacts {
    pub fn model(&self) -> KernelModel {
        self.config.model()
    }

    pub fn summary(&self) -> Result<Summary> {
        let cfg = &self.config;
        let echo = ExperimentEcho::from_config(cfg);
        let model = cfg.model();
        let kept = self.samples.total_points();
        let trials = self.samples.trials_completed;
        Ok(Summary {
            config_digest: echo.digest(),
            config: echo,
            spec_digest: self.samples.spec_digest.clone(),
            edge_digest: self.samples.edge_digest.clone(),
            seed: cfg.seed,
            edge: (&cfg.edge).into(),
            kernel_index: model.index,
            trials_completed: trials,
            kept_points: kept,
            kept_per_trial: kept as f64 / trials as f64,
            expected_kept_per_trial: expected_kept(&model, cfg.window)?,
            gof: self.gof.clone(),
            deep_inside: deep_inside(&self.histogram, -2.5),
            pair: self.pair.as_ref().map(|p| PairSummary {
                coincidence_cut: 0.2,
                coincidence_ratio: p.coincidence_ratio(0.2),
                distant_cut: 4.0,
                distant_ratio: p.distant_ratio(4.0),
            }),
            checks: self.checks.clone(),
        })
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Wall-clock seconds per stage, kept out of the byte-stable files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub seconds: BTreeMap<String, f64>,
}

impl Timings {
    pub fn record(&mut self, stage: &str, seconds: f64) {
        self.seconds.insert(stage.to_string(), seconds);
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("timings.json");
        write_file(&path, &(serde_json::to_string_pretty(self)? + "\n"))?;
        Ok(path)
    }
}

pub fn profile_csv(hist: &HistogramGrid, model: &KernelModel) -> Result<String> {
    let p = &hist.profile;
    let density = p.density();
    let err = p.density_error();
    let predicted = p.predicted(model)?;
    let mut out = String::from("bin_lo,bin_hi,center,count,area,density,density_err,predicted,predicted_center\n");
    for (i, c) in p.centers().into_iter().enumerate() {
        let at_center = kernel_diagonal(model.index as f64, c)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.edges[i], p.edges[i + 1], c, p.counts[i], p.areas[i], density[i], err[i], predicted[i], at_center
        )
        .expect("write to string");
    }
    Ok(out)
}

pub fn histogram_csv(hist: &HistogramGrid, model: &KernelModel) -> Result<String> {
    let density = hist.density();
    let predicted = hist.predicted(model)?;
    let mut out = String::from("center_re,center_im,count,area,density,predicted\n");
    for iy in 0..hist.ny() {
        for ix in 0..hist.nx() {
            let k = iy * hist.nx() + ix;
            let cx = 0.5 * (hist.x_edges[ix] + hist.x_edges[ix + 1]);
            let cy = 0.5 * (hist.y_edges[iy] + hist.y_edges[iy + 1]);
            writeln!(out, "{cx},{cy},{},{},{},{}", hist.counts[k], hist.areas[k], density[k], predicted[k])
                .expect("write to string");
        }
    }
    Ok(out)
}

pub fn samples_csv(samples: &EdgeSampleSet) -> String {
    let mut out = String::from("trial,re,im\n");
    for (t, pts) in samples.trials.iter().enumerate() {
        for p in pts {
            writeln!(out, "{t},{},{}", p.re, p.im).expect("write to string");
        }
    }
    out
}

pub fn pairs_csv(pair: &PairCorrelation) -> String {
    let mut out = String::from("sep_lo,sep_hi,within,across,ratio\n");
    let ratio = pair.ratio();
    for (i, e) in pair.edges.windows(2).enumerate() {
        writeln!(out, "{},{},{},{},{}", e[0], e[1], pair.within[i], pair.across[i], ratio[i]).expect("write to string");
    }
    out
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("N,trials,kept_per_trial,profile_error,noise,dropped_bins\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n, r.trials, r.kept_per_trial, r.profile_error, r.noise, r.dropped_bins
        )
        .expect("write to string");
    }
    out
}

// ---------------------------------------------------------------------------
// SVG

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

/// One line series of an SVG plot.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub colour: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn svg_open(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" style="fill:#ffffff"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" style="font:14px sans-serif;text-anchor:middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let style = "stroke:#000000;stroke-width:1";
    let (x0, x1) = (f.px(f.x.0), f.px(f.x.1));
    let (y0, y1) = (f.py(f.y.0), f.py(f.y.1));
    writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" style="{style}"/>"#).unwrap();
    writeln!(out, r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" style="{style}"/>"#).unwrap();
    for i in 0..=4 {
        let xv = f.x.0 + (f.x.1 - f.x.0) * i as f64 / 4.0;
        let yv = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 4.0;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" style="font:11px sans-serif;text-anchor:middle">{}</text>"#,
            f.px(xv),
            y0 + 16.0,
            tick(xv)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" style="font:11px sans-serif;text-anchor:end">{}</text>"#,
            x0 - 6.0,
            f.py(yv) + 4.0,
            tick(yv)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" style="font:12px sans-serif;text-anchor:middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(xlabel)
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.2}" style="font:12px sans-serif;text-anchor:middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], colour: &str) {
    let coords: Vec<String> = pts
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    writeln!(
        out,
        r#"<polyline points="{}" style="fill:none;stroke:{colour};stroke-width:1.5"/>"#,
        coords.join(" ")
    )
    .unwrap();
}

/// Line plot with one `<polyline>` per series and a legend.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let all = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut xmin, mut xmax, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymax = ymax.max(y);
    }
    if !(xmax > xmin) {
        xmin = 0.0;
        xmax = 1.0;
    }
    let frame = Frame {
        x: (xmin, xmax),
        y: (0.0, if ymax > 0.0 { 1.1 * ymax } else { 1.0 }),
    };
    let mut out = String::new();
    svg_open(&mut out, title);
    axes(&mut out, &frame, xlabel, ylabel);
    for (i, s) in series.iter().enumerate() {
        polyline(&mut out, &frame, &s.points, &s.colour);
        let ly = MARGIN + 16.0 * i as f64;
        writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" style="stroke:{};stroke-width:2"/>"#,
            WIDTH - MARGIN - 150.0,
            WIDTH - MARGIN - 130.0,
            s.colour
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" style="font:11px sans-serif">{}</text>"#,
            WIDTH - MARGIN - 124.0,
            ly + 4.0,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Empirical band profile against the bin-averaged kernel diagonal.
pub fn profile_svg(hist: &HistogramGrid, model: &KernelModel) -> Result<String> {
    let p = &hist.profile;
    let c = p.centers();
    let emp: Vec<(f64, f64)> = c.iter().copied().zip(p.density()).collect();
    let pre: Vec<(f64, f64)> = c.iter().copied().zip(p.predicted(model)?).collect();
    Ok(line_plot(
        &format!("edge profile, kernel index {}", model.index),
        "Re zhat",
        "density per unit area per trial",
        &[
            Series {
                label: "empirical".into(),
                colour: "#1f77b4".into(),
                points: emp,
            },
            Series {
                label: format!("K_{} diagonal", model.index),
                colour: "#d62728".into(),
                points: pre,
            },
        ],
    ))
}

/// Boundary polylines, with optional marked points coloured by class.
pub fn boundary_svg(curve: &BoundaryCurve, marks: &[(Complex64, EdgeClass)]) -> String {
    let pts: Vec<Complex64> = curve.vertices().collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in pts.iter().chain(marks.iter().map(|(z, _)| z)) {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    if !(x1 > x0) || !(y1 > y0) {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    // equal aspect
    let half = 0.55 * (x1 - x0).max(y1 - y0);
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let frame = Frame {
        x: (cx - half, cx + half),
        y: (cy - half * (HEIGHT - 2.0 * MARGIN) / (WIDTH - 2.0 * MARGIN), cy + half * (HEIGHT - 2.0 * MARGIN) / (WIDTH - 2.0 * MARGIN)),
    };
    let mut out = String::new();
    svg_open(&mut out, &format!("support boundary, tau = {}", curve.tau));
    axes(&mut out, &frame, "Re z", "Im z");
    for line in &curve.polylines {
        let mut p: Vec<(f64, f64)> = line.points.iter().map(|z| (z.re, z.im)).collect();
        if line.closed {
            if let Some(&first) = p.first() {
                p.push(first);
            }
        }
        polyline(&mut out, &frame, &p, "#1f77b4");
    }
    for (z, class) in marks {
        let colour = match class {
            EdgeClass::Regular => "#2ca02c",
            EdgeClass::Quadratic => "#d62728",
            EdgeClass::NotOnBoundary => "#7f7f7f",
        };
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" style="fill:{colour}"><title>{class}</title></circle>"#,
            frame.px(z.re),
            frame.py(z.im)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `summary.json`, `profile.csv`, `histogram.csv`, `samples.csv`,
/// `profile.svg` and, with pair data, `pairs.csv`. Returns the paths in
/// that order.
pub fn emit_report(run: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let model = run.model();
    let summary = run.summary()?;
    let mut files: Vec<(&str, String)> = vec![
        ("summary.json", serde_json::to_string_pretty(&summary)? + "\n"),
        ("profile.csv", profile_csv(&run.histogram, &model)?),
        ("histogram.csv", histogram_csv(&run.histogram, &model)?),
        ("samples.csv", samples_csv(&run.samples)),
        ("profile.svg", profile_svg(&run.histogram, &model)?),
    ];
    if let Some(p) = &run.pair {
        files.push(("pairs.csv", pairs_csv(p)));
    }
    let mut out = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        write_file(&path, &text)?;
        out.push(path);
    }
    Ok(out)
}
