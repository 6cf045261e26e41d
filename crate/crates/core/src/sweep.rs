//! Sweep maps `φ(x,t) = α(x) + Σ tʲ χ(x) vⱼ(x)`: swept volume, the
//! t-polynomial coefficients of the volume element, growth exponents, and the
//! tangency flow.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::contact::{fit_line, AnyCurve, ContactError, ExprCurve, PolyCurve};
use crate::exterior::{self, WedgeNorm};
use crate::expr::{Expr, ExprError, Program, TIME_VAR};
use crate::jets::{eval_with, Jet, JetError};
use crate::linalg;
use crate::manifold::{ManifoldError, Submanifold};
use crate::quadrature::TensorRule;

/// Volumes at or below this are treated as exactly zero.
pub const ZERO_VOLUME: f64 = 1e-13;
pub const DEGREE_BOUND_TOL: f64 = 1e-9;
pub const DEFAULT_VANISHING_TOL: f64 = 1e-9;

// Placeholders for the cutoff and its gradient inside φ. They cannot be
// produced by the parser, so they never clash with scene variables.
const CHI: &str = "#chi";

fn dchi(i: usize) -> String {
    format!("#dchi{i}")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid sweep family: {0}")]
    Invalid(String),
    #[error("chart coordinates {coords:?} outside the domain box")]
    OutOfBox { coords: Vec<f64> },
    #[error("coefficient {index} of component {component} is {value:e}, above the degree bound")]
    DegreeBound { component: usize, index: usize, value: f64 },
    #[error("growth fit needs at least 5 samples, got {0}")]
    TooFewSamples(usize),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("tangency least-squares residual {residual:e} exceeds tolerance at t = {t}")]
    LeastSquares { residual: f64, t: f64 },
    #[error("flow left the chart box at t = {t}")]
    FlowExit { t: f64 },
    #[error("φ_t is not an immersion at t = {t} (frame volume {volume:e})")]
    NotEmbedded { t: f64, volume: f64 },
    #[error("degenerate reparametrization: {0}")]
    DegenerateReparam(String),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Contact(#[from] ContactError),
}

/// `ψ(s)/(ψ(s) + ψ(1 − s))` reflected, with `ψ(u) = e^(−1/u)`: equal to 1 for
/// `s ≤ 0`, 0 for `s ≥ 1`, smooth everywhere. Returns value and derivative.
pub fn smooth_step(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let a = (-1.0 / (1.0 - s)).exp();
    let b = (-1.0 / s).exp();
    let sum = a + b;
    let value = a / sum;
    let deriv = -a * b * (1.0 / ((1.0 - s) * (1.0 - s)) + 1.0 / (s * s)) / (sum * sum);
    (value, deriv)
}

/// Radial cutoff in chart coordinates about `center`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
    pub center: Vec<f64>,
}

impl Cutoff {
    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let diff: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let r = linalg::norm(&diff);
        let width = self.outer - self.inner;
        let (v, dv) = smooth_step((r - self.inner) / width);
        let grad = if dv == 0.0 || r == 0.0 {
            vec![0.0; x.len()]
        } else {
            diff.iter().map(|d| dv * d / (r * width)).collect()
        };
        (v, grad)
    }
}

#[derive(Debug, Clone)]
pub enum FamilyKind {
    /// `k` fields, each with n components in the chart variables.
    Polynomial { fields: Vec<Vec<Expr>> },
    /// A general map in the chart variables and `t` with `φ(x, 0) = α(x)`.
    Map { map: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadConfig {
    pub order: usize,
    pub chart_cells: usize,
    pub t_cells: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { order: 8, chart_cells: 16, t_cells: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeSample {
    pub t: f64,
    pub vol: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthFit {
    IdenticallyZero { max_vol: f64 },
    Fit { slope: f64, intercept: f64, residual: f64, used: usize },
}

impl GrowthFit {
    pub fn slope(&self) -> Option<f64> {
        match self {
            GrowthFit::Fit { slope, .. } => Some(*slope),
            GrowthFit::IdenticallyZero { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub x: Vec<f64>,
    pub component: usize,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub degree: usize,
    pub rows: Vec<CoefficientRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Vanishing {
    Vanishes,
    Nonzero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub component: usize,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingReport {
    pub verdict: Vanishing,
    pub max_abs: f64,
    pub scale: f64,
    pub tol: f64,
    /// Largest coefficient over the samples, when nonzero.
    pub witness: Option<Witness>,
    /// Smallest coefficient index that is nonzero at some sample.
    pub min_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConfig {
    pub t_span: f64,
    pub steps: usize,
    pub residual_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { t_span: 0.2, steps: 256, residual_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub y: Vec<f64>,
    pub t_span: f64,
    pub steps: usize,
    pub max_drift: f64,
    pub max_residual: f64,
    pub min_frame_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReparamReport {
    pub vol: f64,
    pub vol_reparam: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SweepFamily {
    manifold: Submanifold,
    kind: FamilyKind,
    cutoff: Option<Cutoff>,
    phi: Vec<Expr>,
    /// `(m+1)·n` expressions, column-major: `∂₀φ, …, ∂_{m−1}φ, ∂_tφ`.
    frame_exprs: Vec<Expr>,
    inputs: Vec<String>,
    phi_prog: Program,
    frame_prog: Program,
}

impl SweepFamily {
    pub fn polynomial(manifold: Submanifold, fields: Vec<Vec<Expr>>) -> Result<Self, SweepError> {
        if fields.is_empty() {
            return Err(SweepError::Invalid("a polynomial family needs k ≥ 1 fields".into()));
        }
        let n = manifold.ambient_dim();
        let names = manifold.var_names();
        for (j, f) in fields.iter().enumerate() {
            if f.len() != n {
                return Err(SweepError::Invalid(format!("field {j} has {} components, expected {n}", f.len())));
            }
            for e in f {
                e.check_vars(&names)?;
            }
        }
        Self::build(manifold, FamilyKind::Polynomial { fields })
    }

    pub fn map(manifold: Submanifold, map: Vec<Expr>) -> Result<Self, SweepError> {
        let n = manifold.ambient_dim();
        if map.len() != n {
            return Err(SweepError::Invalid(format!("map has {} components, expected {n}", map.len())));
        }
        let mut names = manifold.var_names();
        names.push(TIME_VAR);
        for e in &map {
            e.check_vars(&names)?;
        }
        let family = Self::build(manifold, FamilyKind::Map { map })?;
        for x in family.manifold.sample_grid(5, 1.0) {
            let at0 = family.sweep_eval(&x, 0.0)?;
            let base = family.manifold.chart_eval(&x)?;
            if linalg::dist(&at0, &base) > 1e-10 * (1.0 + linalg::norm(&base)) {
                return Err(SweepError::Invalid(format!("map at t = 0 differs from the chart at {x:?}")));
            }
        }
        Ok(family)
    }

    fn build(manifold: Submanifold, kind: FamilyKind) -> Result<Self, SweepError> {
        let (m, n) = (manifold.dim(), manifold.ambient_dim());
        let t = Expr::var(TIME_VAR);
        let chi = Expr::var(CHI);
        let phi: Vec<Expr> = (0..n)
            .map(|c| match &kind {
                FamilyKind::Polynomial { fields } => {
                    let motion = fields.iter().enumerate().fold(Expr::num(0.0), |acc, (j, f)| {
                        Expr::add(acc, Expr::mul(Expr::powi(t.clone(), j as u32 + 1), f[c].clone()))
                    });
                    Expr::add(manifold.embedding()[c].clone(), Expr::mul(chi.clone(), motion))
                }
                FamilyKind::Map { map } => map[c].clone(),
            })
            .collect();
        let mut frame_exprs = Vec::with_capacity((m + 1) * n);
        for (i, v) in manifold.vars().iter().enumerate() {
            for p in &phi {
                frame_exprs.push(Expr::add(p.diff(v), Expr::mul(p.diff(CHI), Expr::var(dchi(i)))));
            }
        }
        frame_exprs.extend(phi.iter().map(|p| p.diff(TIME_VAR)));
        let mut inputs: Vec<String> = manifold.vars().to_vec();
        inputs.push(TIME_VAR.into());
        inputs.push(CHI.into());
        inputs.extend((0..m).map(dchi));
        let names: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let phi_prog = Program::compile(&phi, &names)?;
        let frame_prog = Program::compile(&frame_exprs, &names)?;
        Ok(SweepFamily { manifold, kind, cutoff: None, phi, frame_exprs, inputs, phi_prog, frame_prog })
    }

    /// Multiplies the fields by a radial cutoff about the box center.
    pub fn with_cutoff(mut self, inner: f64, outer: f64) -> Result<Self, SweepError> {
        if !matches!(self.kind, FamilyKind::Polynomial { .. }) {
            return Err(SweepError::Invalid("cutoffs apply to polynomial families only".into()));
        }
        let max_radius = self.manifold.domain().iter().map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
        if !(0.0 < inner && inner < outer && outer <= max_radius) {
            return Err(SweepError::Invalid(format!(
                "cutoff radii must satisfy 0 < inner < outer ≤ {max_radius}, got {inner}, {outer}"
            )));
        }
        self.cutoff = Some(Cutoff { inner, outer, center: self.manifold.center() });
        Ok(self)
    }

    pub fn manifold(&self) -> &Submanifold {
        &self.manifold
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn cutoff(&self) -> Option<&Cutoff> {
        self.cutoff.as_ref()
    }

    /// Degree k of a polynomial family.
    pub fn k(&self) -> Option<usize> {
        match &self.kind {
            FamilyKind::Polynomial { fields } => Some(fields.len()),
            FamilyKind::Map { .. } => None,
        }
    }

    fn k_or_one(&self) -> usize {
        self.k().unwrap_or(1)
    }

    /// `k(m+1)`.
    pub fn required_order(&self) -> usize {
        self.k_or_one() * (self.manifold.dim() + 1)
    }

    /// Degree bound `d = k(m+1) − 1` of the volume-element coefficients.
    pub fn critical_degree(&self) -> Option<usize> {
        self.k().map(|k| k * (self.manifold.dim() + 1) - 1)
    }

    /// `k(m+1) + 2`: jet degree and default maximal contact order.
    pub fn default_max_order(&self) -> usize {
        self.required_order() + 2
    }

    pub fn phi_exprs(&self) -> &[Expr] {
        &self.phi
    }

    fn fill_inputs(&self, x: &[f64], t: f64, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(x);
        buf.push(t);
        match &self.cutoff {
            Some(c) => {
                let (v, g) = c.value_and_gradient(x);
                buf.push(v);
                buf.extend(g);
            }
            None => {
                buf.push(1.0);
                buf.extend(std::iter::repeat(0.0).take(x.len()));
            }
        }
    }

    fn check_box(&self, x: &[f64]) -> Result<(), SweepError> {
        if x.len() != self.manifold.dim() {
            return Err(ManifoldError::Dimension { expected: self.manifold.dim(), got: x.len() }.into());
        }
        if !self.manifold.contains(x) {
            return Err(SweepError::OutOfBox { coords: x.to_vec() });
        }
        Ok(())
    }

    pub fn sweep_eval(&self, x: &[f64], t: f64) -> Result<Vec<f64>, SweepError> {
        self.check_box(x)?;
        let mut inputs = Vec::new();
        self.fill_inputs(x, t, &mut inputs);
        Ok(self.phi_prog.eval_vec(&inputs)?)
    }

    /// Flat column-major frame `∂₀φ, …, ∂_{m−1}φ, ∂_tφ` at `(x, t)`.
    pub fn frame(&self, x: &[f64], t: f64) -> Result<Vec<f64>, SweepError> {
        self.check_box(x)?;
        let mut inputs = Vec::new();
        self.fill_inputs(x, t, &mut inputs);
        Ok(self.frame_prog.eval_vec(&inputs)?)
    }

    /// `Γ_x: t ↦ φ(x, t)`.
    pub fn curve_at(&self, x: &[f64]) -> Result<AnyCurve, ContactError> {
        if !self.manifold.contains(x) {
            return Err(ManifoldError::OutOfBox { coords: x.to_vec() }.into());
        }
        let base = self.manifold.chart_eval(x)?;
        let env: HashMap<String, f64> = self.manifold.vars().iter().cloned().zip(x.iter().copied()).collect();
        match &self.kind {
            FamilyKind::Polynomial { fields } => {
                let chi = self.cutoff.as_ref().map_or(1.0, |c| c.value_and_gradient(x).0);
                let mut coeffs = vec![base];
                for f in fields {
                    coeffs.push(f.iter().map(|e| Ok(chi * e.eval(&env)?)).collect::<Result<_, ExprError>>()?);
                }
                Ok(AnyCurve::Poly(PolyCurve::new(coeffs)?))
            }
            FamilyKind::Map { map } => {
                let subs: HashMap<String, Expr> = env.iter().map(|(k, v)| (k.clone(), Expr::num(*v))).collect();
                Ok(AnyCurve::Expr(ExprCurve::new(map.iter().map(|e| e.substitute(&subs)).collect())?))
            }
        }
    }

    /// `Vol(φ|_{box × (−t, t)})` by tensor Gauss–Legendre quadrature; the
    /// error estimate compares against the rule of half the order.
    pub fn swept_volume(&self, t: f64, quad: &QuadConfig) -> Result<VolumeSample, SweepError> {
        if !(t > 0.0) {
            return Err(SweepError::Invalid(format!("volume horizon must be positive, got {t}")));
        }
        let vol = self.volume_with(t, quad.order, quad)?;
        let coarse = self.volume_with(t, (quad.order / 2).max(1), quad)?;
        Ok(VolumeSample { t, vol, err: (vol - coarse).abs() })
    }

    pub fn volume_series(&self, grid: &[f64], quad: &QuadConfig) -> Result<Vec<VolumeSample>, SweepError> {
        grid.iter().map(|&t| self.swept_volume(t, quad)).collect()
    }

    fn volume_with(&self, t: f64, order: usize, quad: &QuadConfig) -> Result<f64, SweepError> {
        let (m, n) = (self.manifold.dim(), self.manifold.ambient_dim());
        let mut bounds = self.manifold.domain().to_vec();
        bounds.push((-t, t));
        let mut cells = vec![quad.chart_cells; m];
        cells.push(quad.t_cells);
        let rule = TensorRule::new(&bounds, &cells, order);
        let mut ws = WedgeNorm::new(n, m + 1).map_err(|e| SweepError::Invalid(e.to_string()))?;
        let mut inputs = Vec::with_capacity(self.inputs.len());
        let mut regs = Vec::new();
        let mut out = vec![0.0; (m + 1) * n];
        rule.integrate(|p| {
            self.fill_inputs(&p[..m], p[m], &mut inputs);
            self.frame_prog.eval(&inputs, &mut regs, &mut out)?;
            Ok::<f64, SweepError>(ws.norm(&out))
        })
    }

    fn frame_jets(&self, x: &[f64], degree: usize) -> Result<Vec<Vec<Jet>>, SweepError> {
        self.check_box(x)?;
        let (m, n) = (self.manifold.dim(), self.manifold.ambient_dim());
        let mut values = Vec::new();
        self.fill_inputs(x, 0.0, &mut values);
        let env: HashMap<&str, Jet> = self
            .inputs
            .iter()
            .zip(&values)
            .map(|(name, &v)| {
                let j = if name == TIME_VAR { Jet::variable(0.0, degree) } else { Jet::constant(v, degree) };
                (name.as_str(), j)
            })
            .collect();
        let lookup = |name: &str| env.get(name);
        let entries: Vec<Jet> =
            self.frame_exprs.iter().map(|e| eval_with(e, &lookup, degree)).collect::<Result<_, _>>()?;
        Ok(entries.chunks(n).map(<[Jet]>::to_vec).take(m + 1).collect())
    }

    /// Components of `∂₀φ ∧ ⋯ ∧ ∂_{m−1}φ ∧ ∂_tφ` at `x` as jets in `t`.
    pub fn t_polynomial_jets(&self, x: &[f64], degree: usize) -> Result<Vec<Jet>, SweepError> {
        let cols = self.frame_jets(x, degree)?;
        exterior::wedge_jets(&cols).map_err(|e| SweepError::Invalid(e.to_string()))
    }

    /// Exact t-coefficients `a₀(x) … a_d(x)` of each lexicographic component.
    /// For polynomial families the jets are taken to degree `k(m+1) + 2` and
    /// everything above `d` must vanish.
    pub fn extract_t_polynomials(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, SweepError> {
        let big = self.default_max_order();
        let jets = self.t_polynomial_jets(x, big)?;
        let keep = self.critical_degree().unwrap_or(big);
        let mut out = Vec::with_capacity(jets.len());
        for (component, j) in jets.iter().enumerate() {
            if let Some((index, &value)) =
                j.coeffs().iter().enumerate().skip(keep + 1).find(|(_, v)| v.abs() > DEGREE_BOUND_TOL)
            {
                return Err(SweepError::DegreeBound { component, index, value });
            }
            out.push(j.coeffs()[..=keep].to_vec());
        }
        Ok(out)
    }

    /// Independent path: sample the wedge at Chebyshev nodes in `t ∈ [−1, 1]`
    /// and solve the Vandermonde system for coefficients `0..=degree`.
    pub fn sample_t_polynomials(&self, x: &[f64], degree: usize) -> Result<Vec<Vec<f64>>, SweepError> {
        let (m, n) = (self.manifold.dim(), self.manifold.ambient_dim());
        let npts = degree + 1;
        let nodes: Vec<f64> = (0..npts)
            .map(|i| (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * npts) as f64).cos())
            .collect();
        let mut vander = vec![0.0; npts * npts];
        for (r, &t) in nodes.iter().enumerate() {
            for c in 0..npts {
                vander[r * npts + c] = t.powi(c as i32);
            }
        }
        let combos = exterior::combinations(n, m + 1);
        let mut values = vec![vec![0.0; npts]; combos.len()];
        for (r, &t) in nodes.iter().enumerate() {
            let f = self.frame(x, t)?;
            let cols: Vec<Vec<f64>> = f.chunks(n).map(<[f64]>::to_vec).collect();
            let blade = exterior::wedge(&cols).map_err(|e| SweepError::Invalid(e.to_string()))?;
            for (comp, v) in blade.coords().iter().enumerate() {
                values[comp][r] = *v;
            }
        }
        values
            .iter()
            .map(|rhs| linalg::solve(&vander, rhs).ok_or_else(|| SweepError::Invalid("singular Vandermonde system".into())))
            .collect()
    }

    pub fn coefficient_table(&self, samples: &[Vec<f64>]) -> Result<CoefficientTable, SweepError> {
        let mut rows = Vec::new();
        for x in samples {
            for (component, coeffs) in self.extract_t_polynomials(x)?.into_iter().enumerate() {
                rows.push(CoefficientRow { x: x.clone(), component, coeffs });
            }
        }
        let degree = self.critical_degree().unwrap_or(self.default_max_order());
        Ok(CoefficientTable { degree, rows })
    }

    /// Whether every coefficient of the volume element vanishes on the
    /// samples, relative to a Hadamard-type bound on their size: the product
    /// over frame columns of `‖Σⱼ |cⱼ|‖`, the column coefficient sums.
    pub fn vanishing_verdict(&self, samples: &[Vec<f64>], tol: f64) -> Result<VanishingReport, SweepError> {
        let degree = self.default_max_order();
        let mut scale = 0.0f64;
        let mut best: Option<Witness> = None;
        let mut tables = Vec::with_capacity(samples.len());
        for x in samples {
            let cols = self.frame_jets(x, degree)?;
            let bound: f64 = cols
                .iter()
                .map(|col| col.iter().map(|e| e.coeffs().iter().map(|c| c.abs()).sum::<f64>().powi(2)).sum::<f64>().sqrt())
                .product();
            scale = scale.max(bound);
            tables.push(self.extract_t_polynomials(x)?);
        }
        let threshold = tol * scale;
        let mut min_index: Option<usize> = None;
        for (x, table) in samples.iter().zip(&tables) {
            for (component, coeffs) in table.iter().enumerate() {
                for (index, &value) in coeffs.iter().enumerate() {
                    if value.abs() > threshold {
                        min_index = Some(min_index.map_or(index, |b| b.min(index)));
                    }
                    if best.as_ref().map_or(true, |w| value.abs() > w.value.abs()) {
                        best = Some(Witness { x: x.clone(), component, index, value });
                    }
                }
            }
        }
        let max_abs = best.as_ref().map_or(0.0, |w| w.value.abs());
        let vanishes = max_abs <= threshold;
        Ok(VanishingReport {
            verdict: if vanishes { Vanishing::Vanishes } else { Vanishing::Nonzero },
            max_abs,
            scale,
            tol,
            witness: if vanishes { None } else { best },
            min_index,
        })
    }

    /// Solves `Dφ_t Y = ∂_tφ_t` at `(x, t)` by least squares; returns `Y`, the
    /// residual and the m-volume of `Dφ_t`.
    fn tangency_field(&self, x: &[f64], t: f64) -> Result<(Vec<f64>, f64, f64), SweepError> {
        let (m, n) = (self.manifold.dim(), self.manifold.ambient_dim());
        if !self.manifold.contains(x) {
            return Err(SweepError::FlowExit { t });
        }
        let f = self.frame(x, t)?;
        let cols: Vec<Vec<f64>> = f.chunks(n).map(<[f64]>::to_vec).collect();
        let volume = exterior::wedge(&cols[..m]).map_err(|e| SweepError::Invalid(e.to_string()))?.norm();
        if volume < 1e-8 {
            return Err(SweepError::NotEmbedded { t, volume });
        }
        let (y, residual) = linalg::least_squares(&cols[..m], &cols[m]).ok_or(SweepError::NotEmbedded { t, volume })?;
        Ok((y, residual / linalg::norm(&cols[m]).max(1.0), volume))
    }

    /// Integrates the flow of `−Y_t` from `y` with RK4 over `[−T, T]` and
    /// reports `max ‖φ_t(ψ_t(y)) − φ₀(y)‖`. Requires a vanishing verdict.
    pub fn tangency_flow_check(
        &self,
        verdict: &VanishingReport,
        y: &[f64],
        cfg: &FlowConfig,
    ) -> Result<FlowReport, SweepError> {
        if verdict.verdict != Vanishing::Vanishes {
            return Err(SweepError::Precondition("vanishing verdict is NONZERO".into()));
        }
        if !(cfg.t_span > 0.0) || cfg.steps == 0 {
            return Err(SweepError::Invalid("flow needs a positive span and step count".into()));
        }
        let target = self.sweep_eval(y, 0.0)?;
        let mut max_drift = 0.0f64;
        let mut max_residual = 0.0f64;
        let mut min_frame_volume = f64::INFINITY;
        let mut field = |x: &[f64], t: f64| -> Result<Vec<f64>, SweepError> {
            let (v, res, vol) = self.tangency_field(x, t)?;
            if res > cfg.residual_tol {
                return Err(SweepError::LeastSquares { residual: res, t });
            }
            max_residual = max_residual.max(res);
            min_frame_volume = min_frame_volume.min(vol);
            Ok(v.into_iter().map(|c| -c).collect())
        };
        for dir in [1.0, -1.0] {
            let h = dir * cfg.t_span / cfg.steps as f64;
            let mut x = y.to_vec();
            for step in 0..cfg.steps {
                let t = step as f64 * h;
                let k1 = field(&x, t)?;
                let k2 = field(&axpy(&x, 0.5 * h, &k1), t + 0.5 * h)?;
                let k3 = field(&axpy(&x, 0.5 * h, &k2), t + 0.5 * h)?;
                let k4 = field(&axpy(&x, h, &k3), t + h)?;
                for i in 0..x.len() {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                let t1 = t + h;
                if !self.manifold.contains(&x) {
                    return Err(SweepError::FlowExit { t: t1 });
                }
                max_drift = max_drift.max(linalg::dist(&self.sweep_eval(&x, t1)?, &target));
            }
        }
        Ok(FlowReport {
            y: y.to_vec(),
            t_span: cfg.t_span,
            steps: cfg.steps,
            max_drift,
            max_residual,
            min_frame_volume,
        })
    }

    /// Compares `Vol(φ)` with `Vol(φ∘ψ)` over `box × (−t, t)`. `psi` gives the
    /// m+1 coordinates of the diffeomorphism in the chart variables and `t`;
    /// it must map the domain onto itself with a Jacobian of constant sign.
    pub fn reparam_invariance(&self, psi: &[Expr], t: f64, quad: &QuadConfig) -> Result<ReparamReport, SweepError> {
        let (m, n) = (self.manifold.dim(), self.manifold.ambient_dim());
        let d = m + 1;
        if psi.len() != d {
            return Err(SweepError::DegenerateReparam(format!("ψ needs {d} components, got {}", psi.len())));
        }
        let mut names = self.manifold.var_names();
        names.push(TIME_VAR);
        let mut outputs = psi.to_vec();
        for v in &names {
            outputs.extend(psi.iter().map(|e| e.diff(v)));
        }
        let prog = Program::compile(&outputs, &names)?;
        let mut bounds = self.manifold.domain().to_vec();
        bounds.push((-t, t));

        // Sampled checks: image stays in the domain, Jacobian keeps its sign.
        let axes: Vec<Vec<f64>> =
            bounds.iter().map(|(a, b)| (0..9).map(|i| a + (b - a) * i as f64 / 8.0).collect()).collect();
        let mut sign = 0.0;
        for y in crate::manifold::cartesian(&axes) {
            let out = prog.eval_vec(&y)?;
            for (i, (a, b)) in bounds.iter().enumerate() {
                let slack = 1e-9 * (b - a);
                if out[i] < a - slack || out[i] > b + slack {
                    return Err(SweepError::DegenerateReparam(format!("ψ({y:?}) leaves the domain")));
                }
            }
            let det = linalg::det(&transpose(&out[d..], d), d);
            if det.abs() < 1e-10 || (sign != 0.0 && det.signum() != sign) {
                return Err(SweepError::DegenerateReparam(format!("Jacobian determinant {det:e} at {y:?}")));
            }
            sign = det.signum();
        }

        let mut cells = vec![quad.chart_cells; m];
        cells.push(quad.t_cells);
        let rule = TensorRule::new(&bounds, &cells, quad.order);
        let mut ws = WedgeNorm::new(n, d).map_err(|e| SweepError::Invalid(e.to_string()))?;
        let mut inputs = Vec::new();
        let mut regs = Vec::new();
        let mut frame = vec![0.0; d * n];
        let mut psi_out = vec![0.0; outputs.len()];
        let mut psi_regs = Vec::new();
        let mut pulled = vec![0.0; d * n];
        let vol_reparam = rule.integrate(|y| {
            prog.eval(y, &mut psi_regs, &mut psi_out)?;
            let z: Vec<f64> = bounds.iter().enumerate().map(|(i, (a, b))| psi_out[i].clamp(*a, *b)).collect();
            self.fill_inputs(&z[..m], z[m], &mut inputs);
            self.frame_prog.eval(&inputs, &mut regs, &mut frame)?;
            // Column j of D(φ∘ψ) is Σᵢ ∂ᵢφ · ∂ⱼψᵢ.
            for j in 0..d {
                for r in 0..n {
                    pulled[j * n + r] = (0..d).map(|i| frame[i * n + r] * psi_out[d + j * d + i]).sum();
                }
            }
            Ok::<f64, SweepError>(ws.norm(&pulled))
        })?;
        let vol = self.volume_with(t, quad.order, quad)?;
        let gap = (vol - vol_reparam).abs() / vol.abs().max(f64::MIN_POSITIVE);
        Ok(ReparamReport { vol, vol_reparam, gap: if vol == vol_reparam { 0.0 } else { gap } })
    }
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(x, v)| x + a * v).collect()
}

/// Column-major `d × d` (column j = ∂ⱼψ) to row-major.
fn transpose(cols: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for j in 0..d {
        for i in 0..d {
            out[i * d + j] = cols[j * d + i];
        }
    }
    out
}

/// Least-squares slope of `log Vol` against `log t`.
pub fn growth_exponent(samples: &[VolumeSample]) -> Result<GrowthFit, SweepError> {
    if samples.len() < 5 {
        return Err(SweepError::TooFewSamples(samples.len()));
    }
    let max_vol = samples.iter().map(|s| s.vol).fold(0.0, f64::max);
    if max_vol <= ZERO_VOLUME {
        return Ok(GrowthFit::IdenticallyZero { max_vol });
    }
    let pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.vol > ZERO_VOLUME && s.t > 0.0).map(|s| (s.t.ln(), s.vol.ln())).collect();
    if pts.len() < 2 {
        return Err(SweepError::TooFewSamples(pts.len()));
    }
    let (slope, intercept) = fit_line(&pts);
    let residual =
        (pts.iter().map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    Ok(GrowthFit::Fit { slope, intercept, residual, used: pts.len() })
}

/// Triangular diffeomorphism of `bounds` (the chart box followed by the time
/// interval). In normalized coordinates `u ∈ [−1, 1]`, chart axis i (except
/// the last) becomes `u + cᵢ(1 − u²)·sin(π u_{i+1})`, the last chart axis and
/// the time axis get the odd warp `(1 − c)u + c u³`; `flips` reverses axes.
/// Strengths must lie in `[0, 0.5)`.
pub fn box_diffeo(bounds: &[(f64, f64)], strengths: &[f64], flips: &[bool], vars: &[&str]) -> Vec<Expr> {
    let d = bounds.len();
    let norm = |i: usize| {
        let (a, b) = bounds[i];
        Expr::div(Expr::sub(Expr::var(vars[i]), Expr::num(0.5 * (a + b))), Expr::num(0.5 * (b - a)))
    };
    (0..d)
        .map(|i| {
            let u = norm(i);
            let c = strengths[i];
            let warped = if i + 2 < d {
                let bump = Expr::sub(Expr::num(1.0), Expr::powi(u.clone(), 2));
                let wave = Expr::call(crate::expr::Func::Sin, Expr::mul(Expr::num(std::f64::consts::PI), norm(i + 1)));
                Expr::add(u, Expr::mul(Expr::num(c), Expr::mul(bump, wave)))
            } else {
                Expr::add(Expr::mul(Expr::num(1.0 - c), u.clone()), Expr::mul(Expr::num(c), Expr::powi(u, 3)))
            };
            let signed = if flips[i] { Expr::neg(warped) } else { warped };
            let (a, b) = bounds[i];
            Expr::add(Expr::num(0.5 * (a + b)), Expr::mul(Expr::num(0.5 * (b - a)), signed))
        })
        .collect()
}
