//! Osculating curve families and the end-to-end ruledness verdict.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::contact::{self, contact_order_jet, normal_residual, ContactError, ContactOrder, Curve, PolyCurve};
use crate::expr::ExprError;
use crate::linalg;
use crate::manifold::{ManifoldError, ManifoldKind, Submanifold};
use crate::sweep::{
    growth_exponent, FlowConfig, FlowReport, GrowthFit, QuadConfig, SweepError, SweepFamily, Vanishing,
    VanishingReport, VolumeSample,
};

pub const FIT_STARTS: usize = 32;
const FIT_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OsculateError {
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Direction {
    /// Unit direction in the chart plane.
    pub chart: Vec<f64>,
    /// Unit tangent vector in ℝ³, first nonzero coordinate positive.
    pub ambient: Vec<f64>,
    pub cubic_residual: f64,
    pub jet_order: ContactOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsculatingDirections {
    pub point: Vec<f64>,
    /// The second fundamental form is definite: no asymptotic direction.
    pub definite: bool,
    /// The quadratic form vanishes identically.
    pub degenerate_quadratic: bool,
    /// Quadratic and cubic forms both vanish: every direction qualifies.
    pub all_directions: bool,
    pub directions: Vec<Direction>,
}

/// Flips `v` so its first nonzero coordinate is positive and scales to unit
/// length.
pub fn normalize_direction(v: &[f64]) -> Vec<f64> {
    let n = linalg::norm(v);
    let sign = v.iter().find(|c| c.abs() > 1e-14 * n).map_or(1.0, |c| c.signum());
    v.iter().map(|c| sign * c / n).collect()
}

/// Directions at the chart point `p` of a graph surface `z = h(x, y)` along
/// which the tangent line has contact of order ≥ 3: roots of the quadratic
/// form `h⁽²⁾(v, v)` at which the cubic form `h⁽³⁾(v, v, v)` also vanishes.
pub fn osculating_directions(m_fold: &Submanifold, p: &[f64], tol: f64) -> Result<OsculatingDirections, OsculateError> {
    if m_fold.kind() != ManifoldKind::Graph || m_fold.dim() != 2 || m_fold.ambient_dim() != 3 {
        return Err(OsculateError::Unsupported("flecnodal directions need a graph surface in ℝ³".into()));
    }
    let base = m_fold.chart_eval(p)?;
    let vars = m_fold.var_names();
    let env: Vec<(&str, f64)> = vars.iter().copied().zip(p.iter().copied()).collect();
    let env = env.as_slice();
    let h = &m_fold.source_exprs()[0];
    let (hx, hy) = (h.diff(vars[0]), h.diff(vars[1]));
    let grad = [hx.eval(env)?, hy.eval(env)?];
    let (hxx, hxy, hyy) = (hx.diff(vars[0]), hx.diff(vars[1]), hy.diff(vars[1]));
    let q = [hxx.eval(env)?, hxy.eval(env)?, hyy.eval(env)?];
    let c = [
        hxx.diff(vars[0]).eval(env)?,
        hxx.diff(vars[1]).eval(env)?,
        hxy.diff(vars[1]).eval(env)?,
        hyy.diff(vars[1]).eval(env)?,
    ];
    let cubic = |a: f64, b: f64| c[0] * a * a * a + 3.0 * c[1] * a * a * b + 3.0 * c[2] * a * b * b + c[3] * b * b * b;
    let q_scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let c_scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cubic_tol = tol * c_scale.max(1.0);

    // Q(cos θ, sin θ) = M + R cos(2θ − φ).
    let mean = 0.5 * (q[0] + q[2]);
    let (half, b) = (0.5 * (q[0] - q[2]), q[1]);
    let radius = half.hypot(b);
    let degenerate_quadratic = q_scale <= tol;
    let mut definite = false;
    let angles: Vec<f64> = if degenerate_quadratic {
        cubic_roots(&|th: f64| cubic(th.cos(), th.sin()), cubic_tol)
    } else if mean.abs() > radius * (1.0 + 1e-12) + tol {
        definite = true;
        Vec::new()
    } else {
        let phase = b.atan2(half);
        let spread = (-mean / radius).clamp(-1.0, 1.0).acos();
        let mut roots = vec![0.5 * (phase + spread), 0.5 * (phase - spread)];
        roots.iter_mut().for_each(|r| *r = r.rem_euclid(PI));
        if (roots[0] - roots[1]).abs() < 1e-12 || (PI - (roots[0] - roots[1]).abs()) < 1e-12 {
            roots.pop();
        }
        roots
    };
    let all_directions = degenerate_quadratic && c_scale <= tol;
    let mut directions = Vec::new();
    if !all_directions {
        for th in angles {
            let (a, b) = (th.cos(), th.sin());
            let residual = cubic(a, b);
            if residual.abs() > cubic_tol {
                continue;
            }
            let v = [a, b, grad[0] * a + grad[1] * b];
            let line = PolyCurve::line(&base, &v)?;
            let jet_order = contact_order_jet(&line, m_fold, 5, contact::DEFAULT_VANISH_TOL)?;
            let ambient = normalize_direction(&v);
            let chart = normalize_direction(&[ambient[0], ambient[1]]);
            directions.push(Direction { chart, ambient, cubic_residual: residual, jet_order });
        }
        directions.sort_by(|x, y| x.chart[0].total_cmp(&y.chart[0]).reverse());
    }
    Ok(OsculatingDirections { point: p.to_vec(), definite, degenerate_quadratic, all_directions, directions })
}

/// Real projective roots of a binary cubic sampled on `θ ∈ [0, π)`: sign
/// changes refined by bisection, plus touching zeros within `tol`.
fn cubic_roots(f: &dyn Fn(f64) -> f64, tol: f64) -> Vec<f64> {
    let n = 720;
    let grid: Vec<(f64, f64)> = (0..=n).map(|i| PI * i as f64 / n as f64).map(|t| (t, f(t))).collect();
    let mut roots: Vec<f64> = Vec::new();
    for w in grid.windows(2) {
        let ((a, fa), (b, fb)) = (w[0], w[1]);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        } else if fa.abs() <= tol && fa.abs() <= f(a - 1e-3).abs() && fa.abs() <= fb.abs() {
            roots.push(a);
        }
    }
    let mut out: Vec<f64> = Vec::new();
    for r in roots {
        let r = r.rem_euclid(PI);
        if !out.iter().any(|o| (o - r).abs() < 1e-6 || (PI - (o - r).abs()) < 1e-6) {
            out.push(r);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub curve: Option<PolyCurve>,
    pub residual: f64,
    pub start: Option<usize>,
    pub seed: u64,
}

/// Fits a class-k curve `p + Σ tʲ cⱼ` whose normal residual vanishes to order
/// `r`, by Levenberg–Marquardt with a finite-difference Jacobian from
/// `FIT_STARTS` seeded random starts, with `‖c₁‖ = 1` imposed.
pub fn fit_class_k_curve(m_fold: &Submanifold, p: &[f64], k: usize, r: usize, seed: u64) -> Result<FitResult, OsculateError> {
    if m_fold.kind() != ManifoldKind::Graph {
        return Err(OsculateError::Unsupported("curve fitting needs a graph manifold".into()));
    }
    if k == 0 || r == 0 {
        return Err(OsculateError::Unsupported("k and the target order must be positive".into()));
    }
    let base = m_fold.chart_eval(p)?;
    let n = base.len();
    let unknowns = n * k;
    let residuals = |u: &[f64]| -> Option<Vec<f64>> {
        let mut coeffs = vec![base.clone()];
        coeffs.extend(u.chunks(n).map(<[f64]>::to_vec));
        let curve = PolyCurve::new(coeffs).ok()?;
        let res = normal_residual(&curve, m_fold, r).ok()?;
        let mut out: Vec<f64> = res.iter().flat_map(|j| j.coeffs()[1..=r].to_vec()).collect();
        out.push(linalg::dot(&u[..n], &u[..n]) - 1.0);
        out.iter().all(|v| v.is_finite()).then_some(out)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_residual = f64::INFINITY;
    for start in 0..FIT_STARTS {
        let mut u: Vec<f64> = (0..unknowns).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = linalg::norm(&u[..n]).max(1e-3);
        u[..n].iter_mut().for_each(|v| *v /= s);
        let Some(sol) = levenberg_marquardt(&residuals, u) else { continue };
        let res = residuals(&sol).map_or(f64::INFINITY, |f| f.iter().fold(0.0, |m, v| m.max(v.abs())));
        best_residual = best_residual.min(res);
        if res <= 1e-9 && linalg::norm(&sol[..n]) >= 1e-6 {
            let mut coeffs = vec![base.clone()];
            coeffs.extend(sol.chunks(n).map(<[f64]>::to_vec));
            return Ok(FitResult { curve: Some(PolyCurve::new(coeffs)?), residual: res, start: Some(start), seed });
        }
    }
    Ok(FitResult { curve: None, residual: best_residual, start: None, seed })
}

fn levenberg_marquardt(f: &dyn Fn(&[f64]) -> Option<Vec<f64>>, mut u: Vec<f64>) -> Option<Vec<f64>> {
    let mut fu = f(&u)?;
    let mut cost = linalg::dot(&fu, &fu);
    let mut mu = 1e-3;
    let nu = u.len();
    for _ in 0..FIT_ITERS {
        if fu.iter().all(|v| v.abs() <= 1e-13) {
            break;
        }
        // Central-difference Jacobian, column by column.
        let mut jac = vec![vec![0.0; fu.len()]; nu];
        for (i, col) in jac.iter_mut().enumerate() {
            let h = 1e-6 * (1.0 + u[i].abs());
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let (fp, fm) = (f(&up)?, f(&dn)?);
            for (c, (a, b)) in col.iter_mut().zip(fp.iter().zip(&fm)) {
                *c = (a - b) / (2.0 * h);
            }
        }
        let mut jtj = vec![0.0; nu * nu];
        let mut jtf = vec![0.0; nu];
        for i in 0..nu {
            jtf[i] = linalg::dot(&jac[i], &fu);
            for j in 0..nu {
                jtj[i * nu + j] = linalg::dot(&jac[i], &jac[j]);
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..nu {
                a[i * nu + i] += mu * (1.0 + jtj[i * nu + i]);
            }
            let Some(step) = linalg::solve(&a, &jtf) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| x - s).collect();
            if let Some(ft) = f(&trial) {
                let c = linalg::dot(&ft, &ft);
                if c < cost {
                    u = trial;
                    fu = ft;
                    cost = c;
                    mu = (mu / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Some(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Containment {
    Contained,
    NotContained,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuledSample {
    pub x: Vec<f64>,
    pub max_distance: f64,
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuledWitness {
    pub x: Vec<f64>,
    pub s: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuledVerdict {
    pub verdict: Containment,
    pub span: f64,
    pub tolerance: f64,
    pub tube_radius: f64,
    pub samples: Vec<RuledSample>,
    pub witness: Option<RuledWitness>,
}

/// Distances from `Γ_x(s)` to `M` for `params` values of `s ∈ [−S, S]` per
/// sample, skipping points outside the tube or projecting onto the box edge.
pub fn ruledness_check(
    family: &SweepFamily,
    span: f64,
    samples: &[Vec<f64>],
    params: usize,
    tol: f64,
) -> Result<RuledVerdict, OsculateError> {
    let m_fold = family.manifold();
    let tube = m_fold.tube_radius();
    let tolerance = tol * (1.0 + m_fold.scale());
    let mut rows = Vec::with_capacity(samples.len());
    let mut witness: Option<RuledWitness> = None;
    for x in samples {
        let curve = family.curve_at(x)?;
        let mut row = RuledSample { x: x.clone(), max_distance: 0.0, checked: 0, skipped: 0 };
        for i in 0..params {
            let s = if params == 1 { 0.0 } else { -span + 2.0 * span * i as f64 / (params - 1) as f64 };
            let q = curve.point(s)?;
            match m_fold.nearest_point(&q) {
                Ok(proj) if !proj.on_boundary && proj.distance <= tube => {
                    row.checked += 1;
                    if proj.distance > row.max_distance {
                        row.max_distance = proj.distance;
                    }
                    if witness.as_ref().map_or(true, |w| proj.distance > w.distance) {
                        witness = Some(RuledWitness { x: x.clone(), s, distance: proj.distance });
                    }
                }
                _ => row.skipped += 1,
            }
        }
        rows.push(row);
    }
    let checked: usize = rows.iter().map(|r| r.checked).sum();
    let worst = rows.iter().map(|r| r.max_distance).fold(0.0, f64::max);
    let verdict = if checked == 0 {
        Containment::Undecided
    } else if worst <= tolerance {
        Containment::Contained
    } else {
        Containment::NotContained
    };
    Ok(RuledVerdict {
        verdict,
        span,
        tolerance,
        tube_radius: tube,
        samples: rows,
        witness: if verdict == Containment::NotContained { witness } else { None },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative vanishing threshold for residual jet coefficients.
    pub contact: f64,
    /// Relative threshold for volume-element coefficients.
    pub vanishing: f64,
    /// Containment threshold, scaled by `1 + scene scale`.
    pub containment: f64,
    pub flow_residual: f64,
    pub drift: f64,
    /// Cubic-form residual for flecnodal directions.
    pub cubic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { contact: 1e-11, vanishing: 1e-9, containment: 1e-8, flow_residual: 1e-8, drift: 1e-6, cubic: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub samples_per_axis: usize,
    pub max_order: Option<usize>,
    pub t_grid: Vec<f64>,
    pub quad: QuadConfig,
    pub flow_span: f64,
    pub flow_steps: usize,
    pub span: f64,
    pub curve_params: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            samples_per_axis: 3,
            max_order: None,
            t_grid: contact::geometric_grid(0.2, 8),
            quad: QuadConfig::default(),
            flow_span: 0.2,
            flow_steps: 256,
            span: 1.0,
            curve_params: 64,
            seed: 0,
            tolerances: Tolerances::default(),
        }
    }
}

/// Working sub-box: the domain shrunk by half about its center.
pub fn working_samples(m_fold: &Submanifold, per_axis: usize) -> Vec<Vec<f64>> {
    m_fold.sample_grid(per_axis, 0.5)
}

/// Three points on the diagonal of the working sub-box.
pub fn diagonal_samples(m_fold: &Submanifold) -> Vec<Vec<f64>> {
    let c = m_fold.center();
    [-1.0, 0.0, 1.0]
        .iter()
        .map(|s| c.iter().zip(m_fold.domain()).map(|(c, (a, b))| c + s * 0.25 * (b - a)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub source: String,
    pub coeffs: Vec<Vec<f64>>,
    pub jet_order: ContactOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsculationReport {
    pub point: Vec<f64>,
    pub base: Vec<f64>,
    pub required_order: usize,
    /// Curves of the swept family; the hypothesis is judged on these.
    pub candidates: Vec<Candidate>,
    /// Flecnodal lines and fitted curves through the same point.
    pub alternatives: Vec<Candidate>,
    pub hypothesis_met: bool,
}

pub fn osculation_report(
    family: &SweepFamily,
    x: &[f64],
    max_order: usize,
    tol: &Tolerances,
    seed: u64,
) -> Result<OsculationReport, OsculateError> {
    let m_fold = family.manifold();
    let required = family.required_order();
    let base = m_fold.chart_eval(x)?;
    let curve = family.curve_at(x)?;
    let coeffs = match &curve {
        contact::AnyCurve::Poly(p) => p.coeffs().to_vec(),
        contact::AnyCurve::Expr(_) => Vec::new(),
    };
    let order = contact_order_jet(&curve, m_fold, max_order, tol.contact)?;
    let candidates = vec![Candidate { source: "family".into(), coeffs, jet_order: order }];
    let hypothesis_met = candidates.iter().any(|c| c.jet_order.reaches(required));
    // Other curves with high contact are reported but do not count: the later
    // steps test the swept family itself.
    let mut alternatives = Vec::new();
    let flecnodal_applies =
        family.k() == Some(1) && m_fold.kind() == ManifoldKind::Graph && m_fold.dim() == 2 && m_fold.ambient_dim() == 3;
    if flecnodal_applies {
        let dirs = osculating_directions(m_fold, x, tol.cubic)?;
        for d in dirs.directions {
            let line = PolyCurve::line(&base, &d.ambient)?;
            let jet_order = contact_order_jet(&line, m_fold, max_order, tol.contact)?;
            alternatives.push(Candidate { source: "flecnodal".into(), coeffs: line.coeffs().to_vec(), jet_order });
        }
    }
    if let (false, Some(k), ManifoldKind::Graph) = (hypothesis_met, family.k(), m_fold.kind()) {
        if let Some(curve) = fit_class_k_curve(m_fold, x, k, required, seed)?.curve {
            let jet_order = contact_order_jet(&curve, m_fold, max_order, tol.contact)?;
            alternatives.push(Candidate { source: "fit".into(), coeffs: curve.coeffs().to_vec(), jet_order });
        }
    }
    Ok(OsculationReport { point: x.to_vec(), base, required_order: required, candidates, alternatives, hypothesis_met })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step<T> {
    pub passed: bool,
    pub error: Option<String>,
    pub data: Option<T>,
}

impl<T> Step<T> {
    fn from_result<E: std::fmt::Display>(r: Result<T, E>, pass: impl Fn(&T) -> bool) -> Self {
        match r {
            Ok(d) => Step { passed: pass(&d), error: None, data: Some(d) },
            Err(e) => Step { passed: false, error: Some(e.to_string()), data: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthStep {
    pub samples: Vec<VolumeSample>,
    pub fit: GrowthFit,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Steps {
    pub osculation: Step<Vec<OsculationReport>>,
    pub growth: Step<GrowthStep>,
    pub vanishing: Step<VanishingReport>,
    pub flow: Step<Vec<FlowReport>>,
    pub ruledness: Step<RuledVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TheoremVerdict {
    TheoremConfirmed,
    HypothesisFails,
    /// The hypothesis holds but a later step did not pass.
    StepFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scene: String,
    pub k: Option<usize>,
    pub m: usize,
    pub n: usize,
    pub required_order: usize,
    pub config: VerifyConfig,
    pub samples: Vec<Vec<f64>>,
    pub steps: Steps,
    pub verdict: TheoremVerdict,
    /// First sample without an osculating candidate, or first failing step.
    pub first_failure: Option<String>,
    pub note: String,
}

pub const TRUNCATION_NOTE: &str = "containment is checked on a finite span of each curve inside the estimated tube; \
     global containment along the whole curve is not verified numerically";

/// Runs the five-step pipeline: osculation hypothesis at the samples, growth
/// exponent, coefficient vanishing, tangency flow, and ruledness.
pub fn verify_theorem(name: &str, family: &SweepFamily, cfg: &VerifyConfig) -> VerifyReport {
    let m_fold = family.manifold();
    let (m, n) = (m_fold.dim(), m_fold.ambient_dim());
    let required = family.required_order();
    let max_order = cfg.max_order.unwrap_or(family.default_max_order());
    let samples = working_samples(m_fold, cfg.samples_per_axis);
    let tol = &cfg.tolerances;

    let osc: Result<Vec<OsculationReport>, OsculateError> =
        samples
        .iter()
        .enumerate()
        .map(|(i, x)| osculation_report(family, x, max_order, tol, cfg.seed.wrapping_add(i as u64)))
        .collect();
    let osculation = Step::from_result(osc, |reports| reports.iter().all(|r| r.hypothesis_met));
    let first_failing_sample = osculation
        .data
        .as_ref()
        .and_then(|reports| reports.iter().find(|r| !r.hypothesis_met))
        .map(|r| format!("osculation at {:?}", r.point));

    let threshold = required as f64 + 0.5;
    let growth = Step::from_result(
        family.volume_series(&cfg.t_grid, &cfg.quad).and_then(|s| {
            let fit = growth_exponent(&s)?;
            Ok(GrowthStep { samples: s, fit, threshold })
        }),
        |g| match g.fit {
            GrowthFit::IdenticallyZero { .. } => true,
            GrowthFit::Fit { slope, .. } => slope > threshold,
        },
    );

    let vanishing_report = family.vanishing_verdict(&samples, tol.vanishing);
    let flow_cfg = FlowConfig { t_span: cfg.flow_span, steps: cfg.flow_steps, residual_tol: tol.flow_residual };
    let flow = Step::from_result(
        vanishing_report.clone().map_err(OsculateError::from).and_then(|v| {
            diagonal_samples(m_fold)
                .iter()
                .map(|y| family.tangency_flow_check(&v, y, &flow_cfg).map_err(OsculateError::from))
                .collect::<Result<Vec<_>, _>>()
        }),
        |reports| reports.iter().all(|r| r.max_drift <= tol.drift),
    );
    let vanishing = Step::from_result(vanishing_report, |v| v.verdict == Vanishing::Vanishes);
    let ruledness = Step::from_result(
        ruledness_check(family, cfg.span, &samples, cfg.curve_params, tol.containment),
        |r| r.verdict == Containment::Contained,
    );

    let steps = Steps { osculation, growth, vanishing, flow, ruledness };
    let later = [
        ("growth", steps.growth.passed),
        ("vanishing", steps.vanishing.passed),
        ("flow", steps.flow.passed),
        ("ruledness", steps.ruledness.passed),
    ];
    let (verdict, first_failure) = if !steps.osculation.passed {
        let why = first_failing_sample.or_else(|| steps.osculation.error.clone().map(|e| format!("osculation: {e}")));
        (TheoremVerdict::HypothesisFails, why)
    } else if let Some((name, _)) = later.iter().find(|(_, ok)| !ok) {
        (TheoremVerdict::StepFailed, Some(name.to_string()))
    } else {
        (TheoremVerdict::TheoremConfirmed, None)
    };
    VerifyReport {
        scene: name.to_string(),
        k: family.k(),
        m,
        n,
        required_order: required,
        config: cfg.clone(),
        samples,
        steps,
        verdict,
        first_failure,
        note: TRUNCATION_NOTE.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Expr};

    fn graph(vars: &[&str], domain: &[(f64, f64)], heights: &[&str]) -> Submanifold {
        Submanifold::graph(
            vars.iter().map(|s| s.to_string()).collect(),
            domain.to_vec(),
            heights.iter().map(|h| parse(h).unwrap()).collect(),
        )
        .unwrap()
    }

    fn exprs(src: &[&str]) -> Vec<Expr> {
        src.iter().map(|s| parse(s).unwrap()).collect()
    }

    fn hp() -> Submanifold {
        graph(&["x", "y"], &[(-3.0, 3.0), (-3.0, 3.0)], &["x*y"])
    }

    fn sphere_cap() -> Submanifold {
        graph(&["x", "y"], &[(-0.6, 0.6), (-0.6, 0.6)], &["sqrt(1 - x^2 - y^2)"])
    }

    #[test]
    fn flecnodal_examples() {
        let d = osculating_directions(&hp(), &[0.7, -0.4], 1e-9).unwrap();
        let charts: Vec<Vec<f64>> = d.directions.iter().map(|d| d.chart.clone()).collect();
        assert_eq!(charts.len(), 2);
        assert!(charts.iter().any(|c| (c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12));
        assert!(charts.iter().any(|c| c[0].abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12));
        assert!(d.directions.iter().all(|d| d.jet_order == ContactOrder::AtLeast(5) && d.cubic_residual.abs() < 1e-15));

        let s = osculating_directions(&sphere_cap(), &[0.05, -0.02], 1e-9).unwrap();
        assert!(s.definite && s.directions.is_empty());

        // 2a² − 2b² = 0 at the origin of the saddle: b = ±a.
        let saddle = graph(&["x", "y"], &[(-2.0, 2.0), (-2.0, 2.0)], &["x^2 - y^2"]);
        let d = osculating_directions(&saddle, &[0.0, 0.0], 1e-9).unwrap();
        let r = 0.5f64.sqrt();
        assert_eq!(d.directions.len(), 2);
        for dir in &d.directions {
            assert!((dir.chart[0] - r).abs() < 1e-12 && (dir.chart[1].abs() - r).abs() < 1e-12);
        }

        let plane = graph(&["x", "y"], &[(-1.0, 1.0), (-1.0, 1.0)], &["0"]);
        let d = osculating_directions(&plane, &[0.1, 0.2], 1e-9).unwrap();
        assert!(d.all_directions && d.degenerate_quadratic);
    }

    #[test]
    fn cubic_has_no_flecnodal_direction() {
        let cubic = graph(&["x", "y"], &[(-1.0, 1.0), (-1.0, 1.0)], &["x^2 - y^3"]);
        for p in [[0.0, 0.0], [0.3, 0.4], [-0.2, -0.5]] {
            assert!(osculating_directions(&cubic, &p, 1e-9).unwrap().directions.is_empty());
        }
        // Degenerate quadratic, cubic form a³ − b³ vanishing along a = b only.
        let m = graph(&["x", "y"], &[(-1.0, 1.0), (-1.0, 1.0)], &["x^3 - y^3"]);
        let d = osculating_directions(&m, &[0.0, 0.0], 1e-9).unwrap();
        assert!(d.degenerate_quadratic && !d.all_directions);
        assert_eq!(d.directions.len(), 1);
        let r = 0.5f64.sqrt();
        assert!((d.directions[0].chart[0] - r).abs() < 1e-9 && (d.directions[0].chart[1] - r).abs() < 1e-9);
    }

    #[test]
    fn directions_rotate_with_the_ambient_frame() {
        let h = "x*y + 0.3*x^3";
        let p = [0.4, 0.2];
        let base = osculating_directions(&graph(&["x", "y"], &[(-2.0, 2.0), (-2.0, 2.0)], &[h]), &p, 1e-9).unwrap();
        assert!(!base.directions.is_empty());
        for beta in [0.3f64, 1.1, 2.5] {
            let (c, s) = (beta.cos(), beta.sin());
            // Rotated scene: h(Rᵀ(x, y)).
            let rx = format!("({c}*x + {s}*y)");
            let ry = format!("({c}*y - {s}*x)");
            let rotated = h.replace('x', "X").replace('y', "Y").replace('X', &rx).replace('Y', &ry);
            let m = graph(&["x", "y"], &[(-2.0, 2.0), (-2.0, 2.0)], &[&rotated]);
            let q = [c * p[0] - s * p[1], s * p[0] + c * p[1]];
            let dirs = osculating_directions(&m, &q, 1e-9).unwrap();
            assert_eq!(dirs.directions.len(), base.directions.len());
            for d in &base.directions {
                let v = &d.ambient;
                let rv = [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
                let best = dirs.directions.iter().map(|e| linalg::dot(&e.ambient, &rv).abs()).fold(0.0, f64::max);
                assert!(best >= 1.0 - 1e-8);
            }
        }
    }

    #[test]
    fn fitted_curves() {
        let (x0, y0) = (0.6, -0.9);
        let fit = fit_class_k_curve(&hp(), &[x0, y0], 1, 3, 7).unwrap();
        let curve = fit.curve.expect("ruling expected");
        let v = normalize_direction(&curve.coeffs()[1]);
        let rulings = [normalize_direction(&[1.0, 0.0, y0]), normalize_direction(&[0.0, 1.0, x0])];
        assert!(rulings.iter().any(|r| linalg::dot(r, &v) > 1.0 - 1e-8));
        // Unit-speed fitted lines reproduce the flecnodal directions.
        let dirs = osculating_directions(&hp(), &[x0, y0], 1e-9).unwrap();
        assert!(dirs.directions.iter().any(|d| linalg::dot(&d.ambient, &v) > 1.0 - 1e-8));

        assert!(fit_class_k_curve(&sphere_cap(), &[0.1, 0.2], 1, 2, 7).unwrap().curve.is_none());

        let bowl = graph(&["x", "y"], &[(-2.0, 2.0), (-2.0, 2.0)], &["x^2 + y^2"]);
        let fit = fit_class_k_curve(&bowl, &[0.0, 0.0], 2, 6, 11).unwrap();
        let curve = fit.curve.expect("parabola expected");
        for s in [-0.7, 0.3, 1.2] {
            let q = curve.point(s).unwrap();
            assert!((q[2] - q[0] * q[0] - q[1] * q[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn ruledness_examples() {
        let hp_family = SweepFamily::polynomial(hp(), vec![exprs(&["1", "0", "y"])]).unwrap();
        let samples = working_samples(hp_family.manifold(), 3);
        let r = ruledness_check(&hp_family, 1.0, &samples, 64, 1e-8).unwrap();
        assert_eq!(r.verdict, Containment::Contained);
        assert!(r.samples.iter().all(|s| s.max_distance <= 1e-10 && s.checked > 0));

        let sphere_family = SweepFamily::polynomial(sphere_cap(), vec![exprs(&["1", "0", "-x/sqrt(1 - x^2 - y^2)"])]).unwrap();
        let r = ruledness_check(&sphere_family, 0.5, &[vec![0.0, 0.0]], 64, 1e-8).unwrap();
        assert_eq!(r.verdict, Containment::NotContained);
        let w = r.witness.unwrap();
        assert!((w.distance - (1.25f64.sqrt() - 1.0)).abs() < 1e-10 && (w.s.abs() - 0.5).abs() < 1e-15);

        let still = SweepFamily::polynomial(sphere_cap(), vec![exprs(&["0", "0", "0"])]).unwrap();
        let r = ruledness_check(&still, 0.5, &samples_of(&still), 64, 1e-8).unwrap();
        assert_eq!(r.verdict, Containment::Contained);
    }

    fn samples_of(f: &SweepFamily) -> Vec<Vec<f64>> {
        working_samples(f.manifold(), 3)
    }
}
