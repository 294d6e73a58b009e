use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ginedge::geometry::{classify_edge, trace_boundary, EdgeClass, SearchBox};
use ginedge::kernel::{ginibre_edge_density, ie, kernel_value};
use ginedge::montecarlo::{
    convergence_study, density_histogram, pair_correlation_estimate, predicted_pair_ratio, run_edge_experiment,
    soft_non_increasing, ConvergencePlan, ConvergenceRow, ExperimentConfig,
};
use ginedge::oracles::run_suite;
use ginedge::report::{
    boundary_svg, convergence_csv, emit_report, ensure_dir, line_plot, write_file, Check, EdgeEcho, RunArtifacts,
    Series, Timings,
};
use ginedge::stats::{chi_square_gof, profile_sup_error, DEFAULT_MIN_EXPECTED};
use ginedge::{Complex64, Error, Result};
use serde::Serialize;

use crate::config::{AssertOptions, RunConfig};
use crate::{Common, EXIT_ASSERT, EXIT_NUMERIC};

const DEFAULT_OUT: &str = "ginedge-out";

fn setup(c: &Common) -> Result<RunConfig> {
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a second call fails harmlessly when the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn check(name: &str, value: Option<f64>, bound: String, pass: bool) -> Check {
    Check {
        name: name.into(),
        value,
        bound,
        pass,
    }
}

fn finish(assert: bool, checks: &[Check]) -> u8 {
    for ch in checks {
        let status = if ch.pass { "PASS" } else { "FAIL" };
        let value = ch.value.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        println!("{status} {}: {value} ({})", ch.name, ch.bound);
    }
    if assert && checks.iter().any(|c| !c.pass) {
        EXIT_ASSERT
    } else {
        0
    }
}

fn density_checks(run: &RunArtifacts, t: &AssertOptions) -> Result<Vec<Check>> {
    let model = run.model();
    let region = (t.sup_region[0], t.sup_region[1]);
    let mut out = Vec::new();
    match profile_sup_error(&run.histogram, &model, region) {
        Ok(v) => out.push(check(
            "sup_rel_error",
            Some(v),
            format!("<= {} on Re zhat in [{}, {}]", t.sup_rel_error_max, region.0, region.1),
            v <= t.sup_rel_error_max,
        )),
        Err(e) => out.push(check(
            "sup_rel_error",
            None,
            format!("<= {} on Re zhat in [{}, {}]: {e}", t.sup_rel_error_max, region.0, region.1),
            false,
        )),
    }
    out.push(check(
        "pvalue",
        Some(run.gof.pvalue),
        format!(">= {}", t.pvalue_min),
        run.gof.pvalue >= t.pvalue_min,
    ));
    if let Some(tol) = t.deep_inside_tol {
        if model.index == 0 {
            let s = run.summary()?;
            if let Some(d) = s.deep_inside {
                out.push(check(
                    "deep_inside_rel_error",
                    Some(d.rel_error),
                    format!("<= {tol} against 1/pi for Re zhat <= {}", d.cut),
                    d.rel_error <= tol,
                ));
            }
        }
    }
    Ok(out)
}

struct Experiment {
    cfg: RunConfig,
    exp: ExperimentConfig,
    dir: PathBuf,
    timings: Timings,
}

fn prepare(c: &Common, pair_points: usize) -> Result<Experiment> {
    let cfg = setup(c)?;
    let spec = cfg.spec()?;
    if pair_points > 1 {
        spec.require_r0(pair_points)?;
    }
    let edge = cfg.edge(&spec)?;
    edge.require_regular()?;
    let exp = cfg.experiment(spec, edge)?;
    let dir = out_dir(c, &cfg)?;
    Ok(Experiment {
        cfg,
        exp,
        dir,
        timings: Timings::default(),
    })
}

fn simulate(e: &mut Experiment) -> Result<RunArtifacts> {
    let t = Instant::now();
    let samples = run_edge_experiment(&e.exp)?;
    e.timings.record("monte_carlo", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let histogram = density_histogram(&samples, &e.exp)?;
    let gof = chi_square_gof(&histogram, &e.exp.model(), DEFAULT_MIN_EXPECTED)?;
    e.timings.record("statistics", t.elapsed().as_secs_f64());
    println!(
        "edge z0 = {} (kernel index {}), {} trials, {} kept points",
        e.exp.edge.z0,
        e.exp.model().index,
        samples.trials_completed,
        samples.total_points()
    );
    println!(
        "chi-square {:.3} on {} dof, p = {:.4}; sup relative error over floor-admissible bins {:.4}",
        gof.statistic, gof.dof, gof.pvalue, gof.sup_rel_error
    );
    Ok(RunArtifacts {
        config: e.exp.clone(),
        samples,
        histogram,
        gof,
        pair: None,
        checks: vec![],
    })
}

fn write_outputs(e: &Experiment, run: &RunArtifacts) -> Result<()> {
    let files = emit_report(run, &e.dir)?;
    e.timings.write(&e.dir)?;
    println!("wrote {} files to {}", files.len() + 1, e.dir.display());
    Ok(())
}

pub fn edge_density(c: &Common) -> Result<u8> {
    let mut e = prepare(c, 1)?;
    let mut run = simulate(&mut e)?;
    run.checks = density_checks(&run, &e.cfg.thresholds)?;
    write_outputs(&e, &run)?;
    Ok(finish(c.assert, &run.checks))
}

pub fn pair_correlation(c: &Common) -> Result<u8> {
    let mut e = prepare(c, 2)?;
    let mut run = simulate(&mut e)?;
    let pair = pair_correlation_estimate(&run.samples, &e.exp.spec, e.cfg.pairs.bin)?;
    let t = &e.cfg.thresholds;
    let co = pair.coincidence_ratio(0.2);
    let far = pair.distant_ratio(4.0);
    let predicted = predicted_pair_ratio(&e.exp.model(), &run.samples, 0.0, 0.2)?;
    println!("predicted coincidence ratio below 0.2: {predicted:.4}");
    run.checks = vec![
        check("coincidence_ratio", Some(co), format!("< {} for |z - w| < 0.2", t.coincidence_max), co < t.coincidence_max),
        check(
            "distant_ratio",
            Some(far),
            format!("in [{}, {}] for |z - w| > 4", t.distant_range[0], t.distant_range[1]),
            (t.distant_range[0]..=t.distant_range[1]).contains(&far),
        ),
    ];
    run.pair = Some(pair);
    write_outputs(&e, &run)?;
    Ok(finish(c.assert, &run.checks))
}

#[derive(Serialize)]
struct ConvergenceSummary<'a> {
    n_list: &'a [usize],
    trials: usize,
    seed: u64,
    region: [f64; 2],
    rows: &'a [ConvergenceRow],
    soft_non_increasing: bool,
}

pub fn convergence(c: &Common) -> Result<u8> {
    let cfg = setup(c)?;
    let opts = cfg
        .convergence
        .clone()
        .ok_or_else(|| Error::Config("convergence needs a \"convergence\" section with n_list".into()))?;
    let spec = cfg.spec()?;
    let edge = cfg.edge(&spec)?;
    edge.require_regular()?;
    let dir = out_dir(c, &cfg)?;
    let mut plan = ConvergencePlan::new(spec, edge, opts.n_list.clone(), cfg.trials, cfg.seed);
    plan.window = cfg.window;
    plan.bins = cfg.bins[0];
    plan.im_band = cfg.im_band;
    plan.region = (opts.region[0], opts.region[1]);
    let mut timings = Timings::default();
    let t = Instant::now();
    let rows = convergence_study(&plan)?;
    timings.record("convergence", t.elapsed().as_secs_f64());
    for r in &rows {
        println!(
            "N = {:5}: profile error {:.4} (noise {:.4}, {} bins below the floor), {:.3} points per trial",
            r.n, r.profile_error, r.noise, r.dropped_bins, r.kept_per_trial
        );
    }
    let soft = soft_non_increasing(&rows, 1.5);
    let summary = ConvergenceSummary {
        n_list: &opts.n_list,
        trials: cfg.trials,
        seed: cfg.seed,
        region: opts.region,
        rows: &rows,
        soft_non_increasing: soft,
    };
    write_file(&dir.join("convergence.csv"), &convergence_csv(&rows))?;
    write_file(&dir.join("convergence.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    let pts = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(|r| (r.n as f64, f(r))).collect::<Vec<_>>();
    let svg = line_plot(
        "profile error against N",
        "N",
        "sup relative error",
        &[
            Series {
                label: "profile error".into(),
                colour: "#1f77b4".into(),
                points: pts(|r| r.profile_error),
            },
            Series {
                label: "Poisson noise".into(),
                colour: "#7f7f7f".into(),
                points: pts(|r| r.noise),
            },
        ],
    );
    write_file(&dir.join("convergence.svg"), &svg)?;
    timings.write(&dir)?;
    let checks = vec![check(
        "soft_non_increasing",
        None,
        "at most one rise, within 1.5x noise".into(),
        soft,
    )];
    Ok(finish(c.assert, &checks))
}

pub fn boundary(c: &Common) -> Result<u8> {
    let cfg = setup(c)?;
    let spec = cfg.spec()?;
    let bx = cfg
        .boundary
        .search_box
        .unwrap_or_else(|| SearchBox::enclosing(&spec.nu, spec.tau));
    let dir = out_dir(c, &cfg)?;
    let curve = trace_boundary(&spec.nu, spec.tau, &bx, cfg.boundary.grid)?;
    let csv = curve.to_csv(&spec.nu, cfg.tol_b, cfg.tol_q)?;
    let mut marks = Vec::new();
    let mut worst: f64 = 0.0;
    for z in curve.vertices() {
        let e = classify_edge(&spec.nu, spec.tau, z, cfg.tol_b, cfg.tol_q)?;
        worst = worst.max((e.p00 - 1.0 / spec.tau).abs());
        if e.class != EdgeClass::Regular {
            marks.push((z, e.class));
        }
    }
    if let Ok(e) = cfg.edge(&spec) {
        marks.push((e.z0, e.class));
    }
    write_file(&dir.join("boundary.csv"), &csv)?;
    write_file(&dir.join("boundary.svg"), &boundary_svg(&curve, &marks))?;
    println!(
        "{} polylines, {} vertices, max |P00 - 1/tau| = {worst:.3e}, {} non-regular vertices",
        curve.polylines.len(),
        curve.vertices().count(),
        marks.iter().filter(|(_, k)| *k == EdgeClass::Quadratic).count()
    );
    println!("wrote boundary.csv and boundary.svg to {}", dir.display());
    Ok(0)
}

pub fn classify(c: &Common) -> Result<u8> {
    let cfg = setup(c)?;
    let spec = cfg.spec()?;
    let e = cfg.edge(&spec)?;
    let text = serde_json::to_string_pretty(&EdgeEcho::from(&e))? + "\n";
    print!("{text}");
    if c.out.is_some() || cfg.out.is_some() {
        let dir = out_dir(c, &cfg)?;
        write_file(&dir.join("classify.json"), &text)?;
    }
    Ok(0)
}

pub fn kernel(
    c: &Common,
    index: Option<f64>,
    from: Option<f64>,
    to: Option<f64>,
    points: Option<usize>,
    window: Option<f64>,
) -> Result<u8> {
    let cfg = setup(c)?;
    let mut k = cfg.kernel.clone();
    k.index = index.unwrap_or(k.index);
    k.from = from.unwrap_or(k.from);
    k.to = to.unwrap_or(k.to);
    k.points = points.unwrap_or(k.points);
    k.window = window.unwrap_or(k.window);
    if k.points < 2 || !(k.to > k.from) {
        return Err(Error::Config("kernel grid needs from < to and at least 2 points".into()));
    }
    if !(k.index >= -1.0) {
        return Err(Error::KernelDomain(format!("index {} must be at least -1", k.index)));
    }
    let reach = k.from.abs().max(k.to.abs());
    if !(reach <= k.window) {
        return Err(Error::KernelDomain(format!(
            "grid reaches |x| = {reach}, outside the window {}",
            k.window
        )));
    }
    let mut csv = String::from("x,ie,kernel_diagonal,ginibre_edge\n");
    for i in 0..k.points {
        let x = k.from + (k.to - k.from) * i as f64 / (k.points - 1) as f64;
        let z = Complex64::new(x, 0.0);
        let iev = ie(k.index, z)?.re;
        let kd = if k.index >= 0.0 {
            kernel_value(k.index, z, z, k.window)?.re.to_string()
        } else {
            String::new()
        };
        writeln!(csv, "{x},{iev},{kd},{}", ginibre_edge_density(x)).expect("write to string");
    }
    if c.out.is_some() || cfg.out.is_some() {
        let dir = out_dir(c, &cfg)?;
        write_file(&dir.join("kernel.csv"), &csv)?;
        println!("wrote kernel.csv to {}", dir.display());
    } else {
        print!("{csv}");
    }
    Ok(0)
}

pub fn verify(c: &Common, only: Option<&str>, samples: Option<usize>) -> Result<u8> {
    let cfg = setup(c)?;
    let t = Instant::now();
    let entries = run_suite(only, samples, cfg.seed)?;
    for e in &entries {
        println!("{}", e.line());
    }
    let failed = entries.iter().filter(|e| !e.passed()).count();
    let errored = entries.iter().filter(|e| e.error.is_some()).count();
    println!(
        "{} checks, {} failed, {:.1} s",
        entries.len(),
        failed,
        t.elapsed().as_secs_f64()
    );
    if c.out.is_some() || cfg.out.is_some() {
        let dir = out_dir(c, &cfg)?;
        write_file(&dir.join("verify.json"), &(serde_json::to_string_pretty(&entries)? + "\n"))?;
    }
    Ok(if errored > 0 {
        EXIT_NUMERIC
    } else if samples.is_some() {
        0
    } else if failed > 0 {
        EXIT_ASSERT
    } else {
        0
    })
}
