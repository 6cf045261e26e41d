//! Command-line front end. Exit codes: 0 on success (negative verdicts
//! included), 1 on usage or scene errors, 2 on numerical failures.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::contact::{contact_order_jet, contact_order_metric, geometric_grid};
use crate::corpus;
use crate::osculate::{ruledness_check, verify_theorem, working_samples, VerifyConfig};
use crate::scene::{load_scene, Scene, SceneError, ToleranceOverrides};
use crate::sweep::{growth_exponent, CoefficientTable, SweepFamily, VolumeSample};

pub const SEED_ENV: &str = "OSCLAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "osclab", version, about = "Contact order, swept volume and ruledness checks for sweep families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Jet and metric contact order of the family curve at one chart point.
    Contact(Opts),
    /// Swept volume over the t-grid as CSV (t,vol,err).
    Sweep(Opts),
    /// Growth exponent of the swept volume.
    Exponent(Opts),
    /// t-polynomial coefficients of the volume element as CSV.
    Coeffs(Opts),
    /// Containment of the family curves in the manifold over a finite span.
    Ruled(Opts),
    /// Full verdict pipeline.
    Verify(Opts),
    /// Runs the verdict pipeline on every built-in scene.
    Corpus(Opts),
}

#[derive(Debug, Clone, Args)]
struct Opts {
    /// Scene file, or `corpus:<name>` for a built-in scene.
    #[arg(long)]
    scene: Option<String>,
    /// Chart coordinates, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    #[arg(long)]
    max_order: Option<usize>,
    /// `geometric:<t0>,<n>`.
    #[arg(long)]
    t_grid: Option<String>,
    #[arg(long)]
    span: Option<f64>,
    /// Samples per chart axis.
    #[arg(long)]
    samples: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    tol_contact: Option<f64>,
    #[arg(long)]
    tol_vanishing: Option<f64>,
    #[arg(long)]
    tol_containment: Option<f64>,
    #[arg(long)]
    tol_flow_residual: Option<f64>,
    #[arg(long)]
    tol_drift: Option<f64>,
    #[arg(long)]
    tol_cubic: Option<f64>,
}

/// Bad flags or inputs; maps to exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<SceneError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Contact(o) => contact(&o),
        Command::Sweep(o) => sweep(&o),
        Command::Exponent(o) => exponent(&o),
        Command::Coeffs(o) => coeffs(&o),
        Command::Ruled(o) => ruled(&o),
        Command::Verify(o) => verify(&o),
        Command::Corpus(o) => run_corpus(&o),
    }
}

fn resolve_scene(spec: Option<&str>) -> Result<Scene> {
    let spec = spec.ok_or_else(|| usage("--scene is required"))?;
    if let Some(name) = spec.strip_prefix("corpus:") {
        let scene = corpus::scene(name).ok_or_else(|| {
            let known = corpus::NAMES.iter().chain(&corpus::EXTRAS).copied().collect::<Vec<_>>().join(", ");
            usage(format!("unknown corpus scene '{name}' (known: {known})"))
        })?;
        return Ok(scene?);
    }
    Ok(load_scene(Path::new(spec))?)
}

fn family(scene: &Scene) -> Result<&SweepFamily> {
    scene.family.as_ref().ok_or_else(|| usage(format!("scene '{}' has no family", scene.name)))
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("--t-grid expects geometric:<t0>,<n>, got '{text}'"));
    let rest = text.strip_prefix("geometric:").ok_or_else(bad)?;
    let (t0, n) = rest.split_once(',').ok_or_else(bad)?;
    let t0: f64 = t0.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(t0 > 0.0 && t0.is_finite()) || n == 0 {
        return Err(bad());
    }
    Ok(geometric_grid(t0, n))
}

fn parse_point(text: &str, m: usize) -> Result<Vec<f64>> {
    let point = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("--point: cannot parse '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    if point.len() != m {
        bail!(usage(format!("--point needs {m} coordinates, got {}", point.len())));
    }
    Ok(point)
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(None),
    }
}

/// Defaults, then scene parameters, then flags, then the seed variable.
fn effective_config(scene: Option<&Scene>, o: &Opts) -> Result<VerifyConfig> {
    let mut cfg = scene.map_or_else(VerifyConfig::default, Scene::config);
    if let Some(g) = &o.t_grid {
        cfg.t_grid = parse_grid(g)?;
    }
    if let Some(v) = o.quad_order {
        if v == 0 {
            bail!(usage("--quad-order must be positive"));
        }
        cfg.quad.order = v;
    }
    if let Some(v) = o.samples {
        if v == 0 {
            bail!(usage("--samples must be positive"));
        }
        cfg.samples_per_axis = v;
    }
    if let Some(v) = o.span {
        if !(v > 0.0 && v.is_finite()) {
            bail!(usage("--span must be positive"));
        }
        cfg.span = v;
    }
    if o.max_order.is_some() {
        cfg.max_order = o.max_order;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = seed_override()? {
        cfg.seed = v;
    }
    let tols = ToleranceOverrides {
        contact: o.tol_contact,
        vanishing: o.tol_vanishing,
        containment: o.tol_containment,
        flow_residual: o.tol_flow_residual,
        drift: o.tol_drift,
        cubic: o.tol_cubic,
    };
    for v in [tols.contact, tols.vanishing, tols.containment, tols.flow_residual, tols.drift, tols.cubic].into_iter().flatten() {
        if !(v > 0.0 && v.is_finite()) {
            bail!(usage("tolerances must be positive"));
        }
    }
    tols.apply(&mut cfg);
    Ok(cfg)
}

/// Writes via a sibling temporary file and a rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().ok_or_else(|| usage(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        anyhow!("renaming onto {}: {e}", path.display())
    })
}

fn json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// To `path` when given, standard output otherwise.
fn emit(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn volume_csv(samples: &[VolumeSample]) -> String {
    let mut s = String::from("t,vol,err\n");
    for v in samples {
        let _ = writeln!(s, "{},{},{}", float(v.t), float(v.vol), float(v.err));
    }
    s
}

pub fn coefficient_csv(table: &CoefficientTable, m: usize) -> String {
    let mut s: String = (1..=m).map(|i| format!("x{i},")).collect();
    s.push_str("component,i,a_i\n");
    for row in &table.rows {
        for (i, a) in row.coeffs.iter().enumerate() {
            let xs: String = row.x.iter().map(|x| float(*x) + ",").collect();
            let _ = writeln!(s, "{xs}{},{i},{}", row.component, float(*a));
        }
    }
    s
}

fn contact(o: &Opts) -> Result<()> {
    let scene = resolve_scene(o.scene.as_deref())?;
    let cfg = effective_config(Some(&scene), o)?;
    let fam = family(&scene)?;
    let m_fold = &scene.manifold;
    let point = match (&o.point, &scene.params.point) {
        (Some(text), _) => parse_point(text, m_fold.dim())?,
        (None, Some(p)) => p.clone(),
        (None, None) => bail!(usage("--point is required")),
    };
    if !m_fold.contains(&point) {
        bail!(usage(format!("--point {point:?} lies outside the chart domain")));
    }
    let max_order = cfg.max_order.unwrap_or(fam.default_max_order());
    let curve = fam.curve_at(&point)?;
    let jet = contact_order_jet(&curve, m_fold, max_order, cfg.tolerances.contact)?;
    let metric = contact_order_metric(&curve, m_fold, &cfg.t_grid)?;
    let record = json!({
        "command": "contact",
        "scene": scene.name,
        "point": point,
        "max_order": max_order,
        "jet_order": jet,
        "metric_slope": metric.slope,
        "metric_order": metric.order,
        "metric_contained": metric.contained,
        "metric_samples": metric.samples,
        "config": cfg,
    });
    emit(o.report.as_ref(), &json_text(&record)?)
}

fn sweep(o: &Opts) -> Result<()> {
    let scene = resolve_scene(o.scene.as_deref())?;
    let cfg = effective_config(Some(&scene), o)?;
    let samples = family(&scene)?.volume_series(&cfg.t_grid, &cfg.quad)?;
    emit(o.out.as_ref(), &volume_csv(&samples))?;
    if let Some(r) = &o.report {
        let record = json!({ "command": "sweep", "scene": scene.name, "samples": samples, "config": cfg });
        write_atomic(r, &json_text(&record)?)?;
    }
    Ok(())
}

fn exponent(o: &Opts) -> Result<()> {
    let scene = resolve_scene(o.scene.as_deref())?;
    let cfg = effective_config(Some(&scene), o)?;
    let fam = family(&scene)?;
    let samples = fam.volume_series(&cfg.t_grid, &cfg.quad)?;
    let fit = growth_exponent(&samples)?;
    if let Some(out) = &o.out {
        write_atomic(out, &volume_csv(&samples))?;
    }
    let record = json!({
        "command": "exponent",
        "scene": scene.name,
        "k": fam.k(),
        "m": scene.manifold.dim(),
        "critical_degree": fam.critical_degree(),
        "fit": fit,
        "samples": samples,
        "config": cfg,
    });
    emit(o.report.as_ref(), &json_text(&record)?)
}

fn coeffs(o: &Opts) -> Result<()> {
    let scene = resolve_scene(o.scene.as_deref())?;
    let cfg = effective_config(Some(&scene), o)?;
    let fam = family(&scene)?;
    let samples = working_samples(&scene.manifold, cfg.samples_per_axis);
    let table = fam.coefficient_table(&samples)?;
    emit(o.out.as_ref(), &coefficient_csv(&table, scene.manifold.dim()))?;
    if let Some(r) = &o.report {
        let verdict = fam.vanishing_verdict(&samples, cfg.tolerances.vanishing)?;
        let record = json!({ "command": "coeffs", "scene": scene.name, "vanishing": verdict, "config": cfg });
        write_atomic(r, &json_text(&record)?)?;
    }
    Ok(())
}

fn ruled(o: &Opts) -> Result<()> {
    let scene = resolve_scene(o.scene.as_deref())?;
    let cfg = effective_config(Some(&scene), o)?;
    let samples = working_samples(&scene.manifold, cfg.samples_per_axis);
    let verdict = ruledness_check(family(&scene)?, cfg.span, &samples, cfg.curve_params, cfg.tolerances.containment)?;
    let record = json!({ "command": "ruled", "scene": scene.name, "result": verdict, "config": cfg });
    emit(o.report.as_ref(), &json_text(&record)?)
}

fn verify(o: &Opts) -> Result<()> {
    let scene = resolve_scene(o.scene.as_deref())?;
    let cfg = effective_config(Some(&scene), o)?;
    let report = verify_theorem(&scene.name, family(&scene)?, &cfg);
    eprintln!("{}: {}", scene.name, serde_json::to_value(report.verdict)?.as_str().unwrap_or_default());
    emit(o.report.as_ref(), &json_text(&report)?)
}

fn run_corpus(o: &Opts) -> Result<()> {
    if o.scene.is_some() {
        bail!(usage("corpus runs the built-in scenes; --scene is not accepted"));
    }
    let mut reports = Vec::new();
    let mut summary = String::new();
    for scene in corpus::suite()? {
        let cfg = effective_config(Some(&scene), o)?;
        let report = verify_theorem(&scene.name, family(&scene)?, &cfg);
        let verdict = serde_json::to_value(report.verdict)?;
        let _ = writeln!(summary, "{}\t{}", scene.name, verdict.as_str().unwrap_or_default());
        reports.push(report);
    }
    if let Some(r) = &o.report {
        write_atomic(r, &json_text(&reports)?)?;
    }
    emit(None, &summary)
}
