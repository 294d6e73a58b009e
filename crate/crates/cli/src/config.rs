//! The JSON run configuration.

use std::path::{Path, PathBuf};

use ginedge::ensemble::{EnsembleSpec, Point, SpecJson};
use ginedge::geometry::{classify_edge, refine_to_boundary, EdgePoint, SearchBox, DEFAULT_TOL_B, DEFAULT_TOL_Q};
use ginedge::montecarlo::{ExperimentConfig, DEFAULT_EXPERIMENT_WINDOW, DEFAULT_IM_BAND};
use ginedge::{Complex64, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSelect {
    /// Use this point as given.
    pub z0: Option<Point>,
    /// Refine this guess onto the boundary first.
    pub z_guess: Option<Point>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryOptions {
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(rename = "box")]
    pub search_box: Option<SearchBox>,
}

fn default_grid() -> usize {
    400
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            search_box: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairOptions {
    #[serde(default = "default_pair_bin")]
    pub bin: f64,
}

fn default_pair_bin() -> f64 {
    0.2
}

impl Default for PairOptions {
    fn default() -> Self {
        Self { bin: default_pair_bin() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceOptions {
    pub n_list: Vec<usize>,
    #[serde(default = "default_region")]
    pub region: [f64; 2],
}

fn default_region() -> [f64; 2] {
    [-2.0, 2.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelOptions {
    #[serde(default)]
    pub index: f64,
    #[serde(default = "default_from")]
    pub from: f64,
    #[serde(default = "default_to")]
    pub to: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_kernel_window")]
    pub window: f64,
}

fn default_from() -> f64 {
    -4.0
}
fn default_to() -> f64 {
    4.0
}
fn default_points() -> usize {
    161
}
fn default_kernel_window() -> f64 {
    ginedge::kernel::DEFAULT_WINDOW
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            index: 0.0,
            from: default_from(),
            to: default_to(),
            points: default_points(),
            window: default_kernel_window(),
        }
    }
}

/// Thresholds checked under `--assert`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertOptions {
    #[serde(default = "default_sup_max")]
    pub sup_rel_error_max: f64,
    #[serde(default = "default_sup_region")]
    pub sup_region: [f64; 2],
    #[serde(default = "default_pvalue_min")]
    pub pvalue_min: f64,
    /// Relative tolerance of the pooled density left of `deep_cut`
    /// against `1/pi`; `null` skips the check.
    #[serde(default = "default_deep_tol")]
    pub deep_inside_tol: Option<f64>,
    #[serde(default = "default_coincidence_max")]
    pub coincidence_max: f64,
    #[serde(default = "default_distant")]
    pub distant_range: [f64; 2],
}

fn default_sup_max() -> f64 {
    0.07
}
fn default_sup_region() -> [f64; 2] {
    [-2.5, 2.0]
}
fn default_pvalue_min() -> f64 {
    0.005
}
fn default_deep_tol() -> Option<f64> {
    Some(0.05)
}
fn default_coincidence_max() -> f64 {
    0.3
}
fn default_distant() -> [f64; 2] {
    [0.85, 1.15]
}

impl Default for AssertOptions {
    fn default() -> Self {
        Self {
            sup_rel_error_max: default_sup_max(),
            sup_region: default_sup_region(),
            pvalue_min: default_pvalue_min(),
            deep_inside_tol: default_deep_tol(),
            coincidence_max: default_coincidence_max(),
            distant_range: default_distant(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ensemble: Option<SpecJson>,
    #[serde(default)]
    pub edge: EdgeSelect,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_bins")]
    pub bins: [usize; 2],
    #[serde(default = "default_band")]
    pub im_band: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_tol_b")]
    pub tol_b: f64,
    #[serde(default = "default_tol_q")]
    pub tol_q: f64,
    #[serde(default)]
    pub boundary: BoundaryOptions,
    #[serde(default)]
    pub pairs: PairOptions,
    pub convergence: Option<ConvergenceOptions>,
    #[serde(default)]
    pub kernel: KernelOptions,
    #[serde(default, rename = "assert")]
    pub thresholds: AssertOptions,
}

fn default_trials() -> usize {
    3000
}
fn default_window() -> f64 {
    DEFAULT_EXPERIMENT_WINDOW
}
fn default_bins() -> [usize; 2] {
    [24, 24]
}
fn default_band() -> f64 {
    DEFAULT_IM_BAND
}
fn default_seed() -> u64 {
    1
}
fn default_tol_b() -> f64 {
    DEFAULT_TOL_B
}
fn default_tol_q() -> f64 {
    DEFAULT_TOL_Q
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("schema error: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Static checks that need no computation.
    pub fn check(&self) -> Result<()> {
        if self.edge.z0.is_some() && self.edge.z_guess.is_some() {
            return Err(Error::Config("edge: give either z0 or z_guess, not both".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.pairs.bin > 0.0) {
            return Err(Error::Config("pairs.bin must be positive".into()));
        }
        if self.kernel.points < 2 || !(self.kernel.to > self.kernel.from) {
            return Err(Error::Config("kernel grid needs from < to and at least 2 points".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<EnsembleSpec> {
        let j = self
            .ensemble
            .clone()
            .ok_or_else(|| Error::Config("this command needs an \"ensemble\" section".into()))?;
        EnsembleSpec::try_from(j)
    }

    /// The edge point: `edge.z0` as given, `edge.z_guess` refined, or the
    /// ensemble's `z0` hint.
    pub fn edge(&self, spec: &EnsembleSpec) -> Result<EdgePoint> {
        if let Some(g) = self.edge.z_guess {
            let refined = refine_to_boundary(&spec.nu, spec.tau, g.into())?;
            return classify_edge(&spec.nu, spec.tau, refined.z0, self.tol_b, self.tol_q);
        }
        let z0: Complex64 = match (self.edge.z0, spec.z0_hint) {
            (Some(p), _) => p.into(),
            (None, Some(h)) => h,
            (None, None) => return Err(Error::Config("no edge point: set edge.z0, edge.z_guess or ensemble.z0".into())),
        };
        classify_edge(&spec.nu, spec.tau, z0, self.tol_b, self.tol_q)
    }

    pub fn experiment(&self, spec: EnsembleSpec, edge: EdgePoint) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(spec, edge, self.trials, self.seed)?;
        cfg.window = self.window;
        cfg.bins = (self.bins[0], self.bins[1]);
        cfg.im_band = self.im_band;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse(r#"{"trials": 10, "trails": 3}"#).unwrap_err();
        assert!(err.to_string().contains("schema error"), "{err}");
        let err = RunConfig::parse(r#"{"edge": {"z0": {"re": 1, "im": 0}, "zz": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("zz"), "{err}");
    }

    #[test]
    fn defaults_and_edge_resolution() {
        let cfg = RunConfig::parse(
            r#"{"ensemble": {"tau": 1, "N": 64, "atoms": [{"re": 0, "im": 0, "c": 1}], "R0": 2},
                "edge": {"z_guess": {"re": 0.9, "im": 0.1}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 3000);
        assert_eq!(cfg.bins, [24, 24]);
        let spec = cfg.spec().unwrap();
        let e = cfg.edge(&spec).unwrap();
        assert!((e.z0.norm() - 1.0).abs() < 1e-10);
        assert!(e.is_regular());
        assert!(RunConfig::default().spec().is_err());
    }

    #[test]
    fn both_edge_forms_conflict() {
        let err = RunConfig::parse(r#"{"edge": {"z0": {"re": 1, "im": 0}, "z_guess": {"re": 1, "im": 0}}}"#).unwrap_err();
        assert!(err.to_string().contains("either"), "{err}");
    }
}
