//! Contact order between curves and submanifolds, uniform decay of the
//! distance along a sweep, and the monotonicity and length checks behind the
//! containment argument.

use std::collections::HashMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::expr::{Expr, ExprError, Program, TIME_VAR};
use crate::jets::{eval_with, Jet, JetError};
use crate::linalg;
use crate::manifold::{ManifoldError, Submanifold};
use crate::quadrature::integrate_adaptive;
use crate::sweep::SweepFamily;

/// Distances below this are indistinguishable from zero.
pub const DISTANCE_FLOOR: f64 = 1e-13;
pub const DEFAULT_VANISH_TOL: f64 = 1e-11;
const ON_MANIFOLD_TOL: f64 = 1e-10;
const MONOTONE_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContactError {
    #[error("curve base point is at distance {distance:e} from the manifold")]
    NotOnManifold { distance: f64 },
    #[error("curve lives in dimension {got}, manifold in {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("cannot re-chart: tangent minor vanishes at the base point")]
    Degenerate,
    #[error("curve leaves the tubular neighbourhood before any admissible window")]
    TubeExit,
    #[error("coordinate {coordinate} is not monotone on the interval")]
    NotMonotone { coordinate: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Curves `t ↦ γ(t) ∈ ℝⁿ` that can be evaluated and jet-expanded at `t = 0`.
pub trait Curve {
    fn dim(&self) -> usize;
    fn point(&self, t: f64) -> Result<Vec<f64>, ContactError>;
    fn velocity(&self, t: f64) -> Result<Vec<f64>, ContactError>;
    /// Componentwise Taylor jets at `t = 0`.
    fn jets(&self, degree: usize) -> Result<Vec<Jet>, ContactError>;
}

/// `γ(t) = Σ tʲ cⱼ`, `j = 0..=k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyCurve {
    coeffs: Vec<Vec<f64>>,
}

impl PolyCurve {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Result<Self, ContactError> {
        let n = coeffs.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(ContactError::Invalid("curve needs at least c₀ with one coordinate".into()));
        }
        if let Some(c) = coeffs.iter().find(|c| c.len() != n) {
            return Err(ContactError::Dimension { expected: n, got: c.len() });
        }
        Ok(PolyCurve { coeffs })
    }

    /// The line `p + t v`.
    pub fn line(p: &[f64], v: &[f64]) -> Result<Self, ContactError> {
        Self::new(vec![p.to_vec(), v.to_vec()])
    }

    /// Class k: polynomial degree bound.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// Same curve traversed as `t ↦ γ(λt)`.
    pub fn rescaled(&self, lambda: f64) -> PolyCurve {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c.iter().map(|v| v * lambda.powi(j as i32)).collect())
            .collect();
        PolyCurve { coeffs }
    }
}

impl Curve for PolyCurve {
    fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    fn point(&self, t: f64) -> Result<Vec<f64>, ContactError> {
        let mut out = vec![0.0; self.dim()];
        for c in self.coeffs.iter().rev() {
            out.iter_mut().zip(c).for_each(|(o, v)| *o = *o * t + v);
        }
        Ok(out)
    }

    fn velocity(&self, t: f64) -> Result<Vec<f64>, ContactError> {
        let mut out = vec![0.0; self.dim()];
        for (j, c) in self.coeffs.iter().enumerate().skip(1).rev() {
            out.iter_mut().zip(c).for_each(|(o, v)| *o = *o * t + j as f64 * v);
        }
        Ok(out)
    }

    fn jets(&self, degree: usize) -> Result<Vec<Jet>, ContactError> {
        Ok((0..self.dim())
            .map(|i| {
                let cs: Vec<f64> = self.coeffs.iter().map(|c| c[i]).collect();
                Jet::from_coeffs(&cs, degree)
            })
            .collect())
    }
}

/// A curve given by expressions in the time variable `t`.
#[derive(Debug, Clone)]
pub struct ExprCurve {
    components: Vec<Expr>,
    program: Program,
}

impl ExprCurve {
    pub fn new(components: Vec<Expr>) -> Result<Self, ContactError> {
        if components.is_empty() {
            return Err(ContactError::Invalid("curve has no components".into()));
        }
        let mut outputs = components.clone();
        outputs.extend(components.iter().map(|c| c.diff(TIME_VAR)));
        let program = Program::compile(&outputs, &[TIME_VAR])?;
        Ok(ExprCurve { components, program })
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }
}

impl Curve for ExprCurve {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn point(&self, t: f64) -> Result<Vec<f64>, ContactError> {
        let mut out = self.program.eval_vec(&[t])?;
        out.truncate(self.dim());
        Ok(out)
    }

    fn velocity(&self, t: f64) -> Result<Vec<f64>, ContactError> {
        Ok(self.program.eval_vec(&[t])?.split_off(self.dim()))
    }

    fn jets(&self, degree: usize) -> Result<Vec<Jet>, ContactError> {
        let t = Jet::variable(0.0, degree);
        self.components
            .iter()
            .map(|c| eval_with(c, &|name| (name == TIME_VAR).then_some(&t), degree).map_err(Into::into))
            .collect()
    }
}

/// Either kind of curve; what sweep families hand out per chart point.
#[derive(Debug, Clone)]
pub enum AnyCurve {
    Poly(PolyCurve),
    Expr(ExprCurve),
}

impl Curve for AnyCurve {
    fn dim(&self) -> usize {
        match self {
            AnyCurve::Poly(c) => c.dim(),
            AnyCurve::Expr(c) => c.dim(),
        }
    }

    fn point(&self, t: f64) -> Result<Vec<f64>, ContactError> {
        match self {
            AnyCurve::Poly(c) => c.point(t),
            AnyCurve::Expr(c) => c.point(t),
        }
    }

    fn velocity(&self, t: f64) -> Result<Vec<f64>, ContactError> {
        match self {
            AnyCurve::Poly(c) => c.velocity(t),
            AnyCurve::Expr(c) => c.velocity(t),
        }
    }

    fn jets(&self, degree: usize) -> Result<Vec<Jet>, ContactError> {
        match self {
            AnyCurve::Poly(c) => c.jets(degree),
            AnyCurve::Expr(c) => c.jets(degree),
        }
    }
}

/// Integer contact order, or a lower bound when every checked derivative
/// vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactOrder {
    Exact(usize),
    AtLeast(usize),
}

impl ContactOrder {
    pub fn value(self) -> usize {
        match self {
            ContactOrder::Exact(k) | ContactOrder::AtLeast(k) => k,
        }
    }

    /// Whether the order is known to be at least `k`.
    pub fn reaches(self, k: usize) -> bool {
        self.value() >= k
    }
}

impl fmt::Display for ContactOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContactOrder::Exact(k) => write!(f, "{k}"),
            ContactOrder::AtLeast(k) => write!(f, ">={k}"),
        }
    }
}

impl Serialize for ContactOrder {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ContactOrder::Exact(k) => s.serialize_u64(*k as u64),
            ContactOrder::AtLeast(_) => s.serialize_str(&self.to_string()),
        }
    }
}

/// Normal residual of the curve against `M` as jets in `t`: the components of
/// `γ` outside the chosen coordinate set `S` minus those of `α(x(t))`, where
/// `x(t)` solves `α_S(x(t)) = γ_S(t)`. For graphs `S` is the chart
/// coordinates and `x(t) = γ_S(t)`; for parametric charts `S` is the set of
/// m coordinates with the largest tangent minor at the base point.
pub fn normal_residual(curve: &dyn Curve, m_fold: &Submanifold, degree: usize) -> Result<Vec<Jet>, ContactError> {
    let (m, n) = (m_fold.dim(), m_fold.ambient_dim());
    if curve.dim() != n {
        return Err(ContactError::Dimension { expected: n, got: curve.dim() });
    }
    let gamma = curve.jets(degree)?;
    let base: Vec<f64> = gamma.iter().map(Jet::value).collect();
    let (x0, rows) = base_chart(m_fold, &base)?;
    let frame = m_fold.tangent_frame(&x0)?;
    // a[r][i] = ∂ᵢα_{S_r}
    let mut a = vec![0.0; m * m];
    for (r, &row) in rows.iter().enumerate() {
        for i in 0..m {
            a[r * m + i] = frame[i][row];
        }
    }
    let inv_cols: Vec<Vec<f64>> = (0..m)
        .map(|r| {
            let mut e = vec![0.0; m];
            e[r] = 1.0;
            linalg::solve(&a, &e).ok_or(ContactError::Degenerate)
        })
        .collect::<Result<_, _>>()?;
    let names = m_fold.var_names();
    let emb = m_fold.embedding();
    let mut x: Vec<Jet> = x0.iter().map(|&v| Jet::constant(v, degree)).collect();
    // Quasi-Newton with the frozen Jacobian gains one order per sweep.
    for _ in 0..=degree {
        let env: HashMap<&str, &Jet> = names.iter().copied().zip(x.iter()).collect();
        let lookup = |name: &str| env.get(name).copied();
        let mut delta = vec![Jet::zero(degree); m];
        let mut moved = false;
        for (r, &row) in rows.iter().enumerate() {
            let ar = eval_with(&emb[row], &lookup, degree)?;
            let rr = &gamma[row] - &ar;
            if rr.max_abs() == 0.0 {
                continue;
            }
            moved = true;
            for (i, d) in delta.iter_mut().enumerate() {
                *d = &*d + &rr.scale(inv_cols[r][i]);
            }
        }
        if !moved {
            break;
        }
        for (xi, d) in x.iter_mut().zip(&delta) {
            *xi = &*xi + d;
        }
    }
    let env: HashMap<&str, &Jet> = names.iter().copied().zip(x.iter()).collect();
    let lookup = |name: &str| env.get(name).copied();
    (0..n)
        .filter(|c| !rows.contains(c))
        .map(|c| Ok(&gamma[c] - &eval_with(&emb[c], &lookup, degree)?))
        .collect()
}

/// Chart point of the curve's base and the re-charting coordinate set.
fn base_chart(m_fold: &Submanifold, base: &[f64]) -> Result<(Vec<f64>, Vec<usize>), ContactError> {
    let m = m_fold.dim();
    match m_fold.kind() {
        crate::manifold::ManifoldKind::Graph => {
            let x0 = base[..m].to_vec();
            let on = m_fold.chart_eval(&x0)?;
            let gap = linalg::dist(&on, base);
            if gap > ON_MANIFOLD_TOL * (1.0 + linalg::norm(base)) {
                return Err(ContactError::NotOnManifold { distance: gap });
            }
            Ok((x0, (0..m).collect()))
        }
        crate::manifold::ManifoldKind::Parametric => {
            let proj = m_fold.project_best(base).ok_or(ContactError::NotOnManifold { distance: f64::INFINITY })?;
            if proj.distance > ON_MANIFOLD_TOL * (1.0 + linalg::norm(base)) {
                return Err(ContactError::NotOnManifold { distance: proj.distance });
            }
            let frame = m_fold.tangent_frame(&proj.chart)?;
            let blade = crate::exterior::wedge(&frame).map_err(|e| ContactError::Invalid(e.to_string()))?;
            let combos = crate::exterior::combinations(m_fold.ambient_dim(), m);
            let best = blade
                .coords()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok((proj.chart, combos[best].clone()))
        }
    }
}

/// Contact order from jets of the normal residual: the largest `j ≤
/// max_order` with residual coefficients of orders `0..=j` all negligible.
pub fn contact_order_jet(
    curve: &dyn Curve,
    m_fold: &Submanifold,
    max_order: usize,
    tol: f64,
) -> Result<ContactOrder, ContactError> {
    let degree = max_order + 1;
    let residual = normal_residual(curve, m_fold, degree)?;
    let curve_scale = curve.jets(degree)?.iter().map(Jet::max_abs).fold(0.0, f64::max);
    let res_scale = residual.iter().map(Jet::max_abs).fold(0.0, f64::max);
    let scale = 1f64.max(curve_scale).max(res_scale);
    let vanishes = |j: usize| residual.iter().all(|r| r.coeff(j).abs() <= tol * scale);
    if !vanishes(0) {
        let distance = residual.iter().map(|r| r.value() * r.value()).sum::<f64>().sqrt();
        return Err(ContactError::NotOnManifold { distance });
    }
    match (1..=max_order).find(|&j| !vanishes(j)) {
        Some(j) => Ok(ContactOrder::Exact(j - 1)),
        None => Ok(ContactOrder::AtLeast(max_order)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricContact {
    /// Fitted slope of log d against log t; `None` when numerically contained.
    pub slope: Option<f64>,
    pub order: Option<usize>,
    pub contained: bool,
    /// `(t, d(γ(t), M))` pairs.
    pub samples: Vec<(f64, f64)>,
}

/// `tᵢ = t0·2^(−i)`, `i = 0..n`.
pub fn geometric_grid(t0: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t0 * 0.5f64.powi(i as i32)).collect()
}

/// Contact order estimated from the decay rate of `d(γ(t), M)`.
pub fn contact_order_metric(curve: &dyn Curve, m_fold: &Submanifold, t_grid: &[f64]) -> Result<MetricContact, ContactError> {
    if curve.dim() != m_fold.ambient_dim() {
        return Err(ContactError::Dimension { expected: m_fold.ambient_dim(), got: curve.dim() });
    }
    let d0 = m_fold.distance(&curve.point(0.0)?);
    if d0 > ON_MANIFOLD_TOL {
        return Err(ContactError::NotOnManifold { distance: d0 });
    }
    let samples: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| Ok((t, m_fold.distance(&curve.point(t)?))))
        .collect::<Result<_, ContactError>>()?;
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, d)| *t > 0.0 && *d >= DISTANCE_FLOOR)
        .map(|(t, d)| (t.ln(), d.ln()))
        .collect();
    if usable.len() < 2 {
        return Ok(MetricContact { slope: None, order: None, contained: true, samples });
    }
    let (slope, _) = fit_line(&usable);
    let order = (slope - 0.5).floor().max(0.0) as usize;
    Ok(MetricContact { slope: Some(slope), order: Some(order), contained: false, samples })
}

/// Least-squares line through `(x, y)` points: `(slope, intercept)`.
pub fn fit_line(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub k: usize,
    /// Every sampled curve had jet contact order ≥ k.
    pub precondition_met: bool,
    pub rows: Vec<DecayRow>,
    pub decays: bool,
}

/// Tabulates `max_x d(φ(x,t), M)/tᵏ` over the samples. Decay means the last
/// grid value is below a tenth of the first, or every ratio is below 1e-12.
pub fn uniform_decay_check(
    family: &SweepFamily,
    k: usize,
    samples: &[Vec<f64>],
    t_grid: &[f64],
) -> Result<DecayReport, ContactError> {
    let m_fold = family.manifold();
    let max_order = family.default_max_order().max(k);
    let mut precondition_met = true;
    let mut curves = Vec::with_capacity(samples.len());
    for x in samples {
        let curve = family.curve_at(x)?;
        let order = contact_order_jet(&curve, m_fold, max_order, DEFAULT_VANISH_TOL)?;
        precondition_met &= order.reaches(k);
        curves.push(curve);
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut worst = 0.0f64;
        for curve in &curves {
            let d = m_fold.distance(&curve.point(t)?);
            let d = if d < DISTANCE_FLOOR { 0.0 } else { d };
            worst = worst.max(d / t.abs().powi(k as i32));
        }
        rows.push(DecayRow { t, max_ratio: worst });
    }
    let decays = match (rows.first(), rows.last()) {
        _ if rows.iter().all(|r| r.max_ratio < 1e-12) => true,
        (Some(first), Some(last)) => last.max_ratio < 0.1 * first.max_ratio,
        _ => false,
    };
    Ok(DecayReport { k, precondition_met, rows, decays })
}

/// Largest dyadic `ε ≤ eps_max` on which every coordinate of
/// `f(t) = r(γ(t)) − γ(t)` is monotone on `(−ε, 0)` and on `(0, ε)`.
pub fn monotone_window(curve: &dyn Curve, m_fold: &Submanifold, eps_max: f64) -> Result<f64, ContactError> {
    let d0 = m_fold.distance(&curve.point(0.0)?);
    if d0 > ON_MANIFOLD_TOL {
        return Err(ContactError::NotOnManifold { distance: d0 });
    }
    let mut eps = eps_max;
    for _ in 0..40 {
        if window_is_monotone(curve, m_fold, eps)? {
            return Ok(eps);
        }
        eps *= 0.5;
    }
    Err(ContactError::TubeExit)
}

fn window_is_monotone(curve: &dyn Curve, m_fold: &Submanifold, eps: f64) -> Result<bool, ContactError> {
    for side in [1.0, -1.0] {
        let mut offsets: Vec<Vec<f64>> = Vec::with_capacity(MONOTONE_SAMPLES + 1);
        for i in 0..=MONOTONE_SAMPLES {
            let t = side * eps * i as f64 / MONOTONE_SAMPLES as f64;
            let p = curve.point(t)?;
            let proj = match m_fold.nearest_point(&p) {
                Ok(proj) if !proj.on_boundary => proj,
                _ => return Ok(false),
            };
            offsets.push(proj.foot.iter().zip(&p).map(|(a, b)| a - b).collect());
        }
        for c in 0..curve.dim() {
            let series: Vec<f64> = offsets.iter().map(|o| o[c]).collect();
            if !is_monotone(&series, 1e-12) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// No sign change among successive differences larger than `tol`; series
/// that stay within `tol` of zero count as monotone.
fn is_monotone(series: &[f64], tol: f64) -> bool {
    if series.iter().all(|v| v.abs() < tol) {
        return true;
    }
    let (mut up, mut down) = (false, false);
    for w in series.windows(2) {
        let d = w[1] - w[0];
        up |= d > tol;
        down |= d < -tol;
    }
    !(up && down)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthBound {
    pub length: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares the arc length of a coordinate-monotone curve with
/// `n·‖γ(a) − γ(b)‖`.
pub fn length_bound_check(curve: &dyn Curve, a: f64, b: f64) -> Result<LengthBound, ContactError> {
    if !(a < b) {
        return Err(ContactError::Invalid(format!("empty interval [{a}, {b}]")));
    }
    let steps = 256;
    let pts: Vec<Vec<f64>> = (0..=steps)
        .map(|i| curve.point(a + (b - a) * i as f64 / steps as f64))
        .collect::<Result<_, _>>()?;
    let scale = pts.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for c in 0..curve.dim() {
        let series: Vec<f64> = pts.iter().map(|p| p[c]).collect();
        if !is_monotone(&series, 1e-14 * (1.0 + scale)) {
            return Err(ContactError::NotMonotone { coordinate: c });
        }
    }
    let mut failure = None;
    let (length, _) = integrate_adaptive(a, b, 1e-12 * (1.0 + scale), |t| match curve.velocity(t) {
        Ok(v) => linalg::norm(&v),
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let bound = curve.dim() as f64 * linalg::dist(&curve.point(a)?, &curve.point(b)?);
    Ok(LengthBound { length, bound, holds: length <= bound * (1.0 + 1e-12) + 1e-14 })
}
