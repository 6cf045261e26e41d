//! Embedded submanifolds given by a single chart over a box, and the nearest
//! point map onto them.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exterior;
use crate::expr::{Expr, ExprError, Program, TIME_VAR};
use crate::linalg;

/// Seeds per chart axis for the multistart projection.
const SEEDS_PER_AXIS: usize = 9;
const MAX_NEWTON_ITERS: usize = 50;
const IMMERSION_MIN: f64 = 1e-8;
const TUBE_PROBES: usize = 200;
const TUBE_SEED: u64 = 0x7475_6265;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ManifoldError {
    #[error("invalid manifold: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("chart coordinates {coords:?} outside the domain box")]
    OutOfBox { coords: Vec<f64> },
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("parametrization is not an immersion: min frame volume {min_volume:e} at {at:?}")]
    NotImmersed { min_volume: f64, at: Vec<f64> },
    #[error("ambiguous projection: feet {first:?} and {second:?} are both at distance {distance}")]
    AmbiguousProjection { first: Vec<f64>, second: Vec<f64>, distance: f64 },
    #[error("nearest point search did not converge from any start")]
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Graph,
    Parametric,
}

/// Result of projecting an ambient point onto the chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub chart: Vec<f64>,
    pub foot: Vec<f64>,
    pub distance: f64,
    /// The minimizer sits on the edge of the domain box.
    pub on_boundary: bool,
}

#[derive(Debug)]
pub struct Submanifold {
    kind: ManifoldKind,
    vars: Vec<String>,
    domain: Vec<(f64, f64)>,
    n: usize,
    /// Height functions (graph) or map components (parametric), as given.
    source: Vec<Expr>,
    /// The n embedding components in chart variables.
    embedding: Vec<Expr>,
    /// Outputs: embedding (n), first partials (m·n, axis-major), second
    /// partials for i ≤ j (n each).
    geometry: Program,
    tube: OnceLock<f64>,
}

impl Clone for Submanifold {
    fn clone(&self) -> Self {
        Submanifold {
            kind: self.kind,
            vars: self.vars.clone(),
            domain: self.domain.clone(),
            n: self.n,
            source: self.source.clone(),
            embedding: self.embedding.clone(),
            geometry: self.geometry.clone(),
            tube: self.tube.clone(),
        }
    }
}

/// First and second order data of the chart at one point.
struct LocalGeometry {
    point: Vec<f64>,
    /// `partials[i]` is ∂ᵢα.
    partials: Vec<Vec<f64>>,
    /// `second[idx(i,j)]` is ∂ᵢ∂ⱼα for i ≤ j.
    second: Vec<Vec<f64>>,
}

fn pair_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // Row-major packing of the upper triangle.
    i * m - i * (i + 1) / 2 + j
}

impl Submanifold {
    /// `x ↦ (x, h(x))` over the box.
    pub fn graph(vars: Vec<String>, domain: Vec<(f64, f64)>, heights: Vec<Expr>) -> Result<Self, ManifoldError> {
        if heights.is_empty() {
            return Err(ManifoldError::Invalid("graph needs at least one height function".into()));
        }
        let mut embedding: Vec<Expr> = vars.iter().map(|v| Expr::var(v.clone())).collect();
        embedding.extend(heights.iter().cloned());
        Self::build(ManifoldKind::Graph, vars, domain, heights, embedding)
    }

    /// `x ↦ α(x)` over the box; must be an immersion on a sample grid.
    pub fn parametric(vars: Vec<String>, domain: Vec<(f64, f64)>, map: Vec<Expr>) -> Result<Self, ManifoldError> {
        let m = Self::build(ManifoldKind::Parametric, vars, domain, map.clone(), map)?;
        m.check_immersion()?;
        Ok(m)
    }

    fn build(
        kind: ManifoldKind,
        vars: Vec<String>,
        domain: Vec<(f64, f64)>,
        source: Vec<Expr>,
        embedding: Vec<Expr>,
    ) -> Result<Self, ManifoldError> {
        let m = vars.len();
        let n = embedding.len();
        if m == 0 {
            return Err(ManifoldError::Invalid("no chart variables".into()));
        }
        if n <= m {
            return Err(ManifoldError::Invalid(format!(
                "ambient dimension {n} must exceed chart dimension {m}"
            )));
        }
        if domain.len() != m {
            return Err(ManifoldError::Invalid(format!("domain has {} intervals for {m} variables", domain.len())));
        }
        for (i, v) in vars.iter().enumerate() {
            if v == TIME_VAR {
                return Err(ManifoldError::Invalid(format!("'{TIME_VAR}' is reserved for the sweep time")));
            }
            if vars[..i].contains(v) {
                return Err(ManifoldError::Invalid(format!("duplicate chart variable '{v}'")));
            }
        }
        if let Some((a, b)) = domain.iter().find(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(ManifoldError::Invalid(format!("empty or invalid domain interval [{a}, {b}]")));
        }
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        for e in &embedding {
            e.check_vars(&names)?;
        }
        let mut outputs = embedding.clone();
        let firsts: Vec<Vec<Expr>> = vars.iter().map(|v| embedding.iter().map(|e| e.diff(v)).collect()).collect();
        for f in &firsts {
            outputs.extend(f.iter().cloned());
        }
        for i in 0..m {
            for j in i..m {
                outputs.extend(firsts[i].iter().map(|e| e.diff(&vars[j])));
            }
        }
        let geometry = Program::compile(&outputs, &names)?;
        Ok(Submanifold { kind, vars, domain, n, source, embedding, geometry, tube: OnceLock::new() })
    }

    fn check_immersion(&self) -> Result<(), ManifoldError> {
        let mut worst = (f64::INFINITY, Vec::new());
        for x in self.sample_grid(SEEDS_PER_AXIS, 1.0) {
            let vol = exterior::wedge(&self.tangent_frame_unchecked(&x)?).map(|b| b.norm()).unwrap_or(0.0);
            if vol < worst.0 {
                worst = (vol, x);
            }
        }
        if worst.0 <= IMMERSION_MIN {
            return Err(ManifoldError::NotImmersed { min_volume: worst.0, at: worst.1 });
        }
        Ok(())
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    /// Chart dimension m.
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    /// Ambient dimension n.
    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn var_names(&self) -> Vec<&str> {
        self.vars.iter().map(String::as_str).collect()
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn source_exprs(&self) -> &[Expr] {
        &self.source
    }

    pub fn embedding(&self) -> &[Expr] {
        &self.embedding
    }

    pub fn center(&self) -> Vec<f64> {
        self.domain.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.domain).all(|(v, (a, b))| {
                let slack = 1e-12 * (b - a);
                *v >= a - slack && *v <= b + slack
            })
    }

    /// Grid with `per_axis` points per axis over the box scaled by `shrink`
    /// about its center (`shrink = 1` spans the whole box, endpoints included).
    pub fn sample_grid(&self, per_axis: usize, shrink: f64) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .domain
            .iter()
            .map(|(a, b)| {
                let c = 0.5 * (a + b);
                let h = 0.5 * (b - a) * shrink;
                if per_axis == 1 {
                    vec![c]
                } else {
                    (0..per_axis).map(|i| c - h + 2.0 * h * i as f64 / (per_axis - 1) as f64).collect()
                }
            })
            .collect();
        cartesian(&axes)
    }

    /// Largest absolute coordinate of the chart image over a coarse grid.
    pub fn scale(&self) -> f64 {
        self.sample_grid(5, 1.0)
            .iter()
            .filter_map(|x| self.chart_eval(x).ok())
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ManifoldError> {
        if x.len() != self.dim() {
            return Err(ManifoldError::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn chart_eval(&self, x: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        self.check_dim(x)?;
        if !self.contains(x) {
            return Err(ManifoldError::OutOfBox { coords: x.to_vec() });
        }
        self.chart_eval_unchecked(x)
    }

    /// Chart evaluation without the box check (for formal expansions that
    /// leave the box).
    pub fn chart_eval_unchecked(&self, x: &[f64]) -> Result<Vec<f64>, ManifoldError> {
        Ok(self.local(x)?.point)
    }

    pub fn tangent_frame(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ManifoldError> {
        self.check_dim(x)?;
        if !self.contains(x) {
            return Err(ManifoldError::OutOfBox { coords: x.to_vec() });
        }
        self.tangent_frame_unchecked(x)
    }

    fn tangent_frame_unchecked(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ManifoldError> {
        Ok(self.local(x)?.partials)
    }

    fn local(&self, x: &[f64]) -> Result<LocalGeometry, ManifoldError> {
        let (m, n) = (self.dim(), self.n);
        let out = self.geometry.eval_vec(x)?;
        let point = out[..n].to_vec();
        let partials = (0..m).map(|i| out[n + i * n..n + (i + 1) * n].to_vec()).collect();
        let base = n + m * n;
        let second = (0..m * (m + 1) / 2).map(|p| out[base + p * n..base + (p + 1) * n].to_vec()).collect();
        Ok(LocalGeometry { point, partials, second })
    }

    /// Unique nearest point of the chart image to `p`.
    pub fn nearest_point(&self, p: &[f64]) -> Result<Projection, ManifoldError> {
        let candidates = self.project_candidates(p)?;
        let best = candidates.first().ok_or(ManifoldError::NoConvergence)?;
        let tol = 1e-9 * (1.0 + best.distance);
        if let Some(other) = candidates[1..]
            .iter()
            .find(|c| (c.distance - best.distance).abs() <= tol && linalg::dist(&c.foot, &best.foot) > 1e-6)
        {
            return Err(ManifoldError::AmbiguousProjection {
                first: best.foot.clone(),
                second: other.foot.clone(),
                distance: best.distance,
            });
        }
        Ok(best.clone())
    }

    /// `d(p, M)`; ambiguity of the foot does not matter here.
    pub fn distance(&self, p: &[f64]) -> f64 {
        self.project_best(p).map_or(f64::INFINITY, |c| c.distance)
    }

    /// Best projection found, ambiguous or not.
    pub fn project_best(&self, p: &[f64]) -> Option<Projection> {
        match self.project_candidates(p) {
            Ok(c) if !c.is_empty() => c.into_iter().next(),
            _ => self.best_seed(p),
        }
    }

    fn objective(&self, x: &[f64], p: &[f64]) -> Option<f64> {
        let a = self.chart_eval_unchecked(x).ok()?;
        Some(0.5 * a.iter().zip(p).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
    }

    fn best_seed(&self, p: &[f64]) -> Option<Projection> {
        self.sample_grid(SEEDS_PER_AXIS, 1.0)
            .into_iter()
            .filter_map(|x| self.objective(&x, p).map(|f| (f, x)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(f, x)| Projection {
                foot: self.chart_eval_unchecked(&x).unwrap_or_default(),
                on_boundary: self.on_boundary(&x),
                chart: x,
                distance: (2.0 * f).sqrt(),
            })
    }

    fn on_boundary(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.domain).any(|(v, (a, b))| {
            let slack = 1e-10 * (b - a);
            *v <= a + slack || *v >= b - slack
        })
    }

    /// Converged local minima from the seed grid, sorted by distance, with
    /// duplicates (same foot) removed.
    fn project_candidates(&self, p: &[f64]) -> Result<Vec<Projection>, ManifoldError> {
        if p.len() != self.n {
            return Err(ManifoldError::Dimension { expected: self.n, got: p.len() });
        }
        let m = self.dim();
        let seeds = self.seed_cells();
        let values: Vec<f64> = seeds.iter().map(|x| self.objective(x, p).unwrap_or(f64::INFINITY)).collect();
        // Refine from the discrete local minima of the objective on the seed grid.
        let mut found: Vec<Projection> = Vec::new();
        for (idx, x0) in seeds.iter().enumerate() {
            if !values[idx].is_finite() || !is_grid_local_min(&values, idx, m, SEEDS_PER_AXIS) {
                continue;
            }
            if let Some(c) = self.newton(p, x0) {
                if !found.iter().any(|f| linalg::dist(&f.foot, &c.foot) <= 1e-9 * (1.0 + c.distance)) {
                    found.push(c);
                }
            }
        }
        found.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        Ok(found)
    }

    fn seed_cells(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .domain
            .iter()
            .map(|(a, b)| {
                let h = (b - a) / SEEDS_PER_AXIS as f64;
                (0..SEEDS_PER_AXIS).map(|i| a + h * (i as f64 + 0.5)).collect()
            })
            .collect();
        cartesian(&axes)
    }

    /// Projected Newton on ½‖α(x) − p‖² inside the box. Falls back to
    /// Gauss–Newton steps where the Hessian is indefinite; steps are damped by
    /// halving.
    fn newton(&self, p: &[f64], x0: &[f64]) -> Option<Projection> {
        let m = self.dim();
        let gtol = 1e-12 * (1.0 + linalg::norm(p));
        let mut x = x0.to_vec();
        let mut geo = self.local(&x).ok()?;
        let mut polish = 0usize;
        for _ in 0..MAX_NEWTON_ITERS {
            let r: Vec<f64> = geo.point.iter().zip(p).map(|(a, b)| a - b).collect();
            let f = 0.5 * linalg::dot(&r, &r);
            let grad: Vec<f64> = geo.partials.iter().map(|d| linalg::dot(&r, d)).collect();
            let free: Vec<usize> = (0..m)
                .filter(|&i| {
                    let (a, b) = self.domain[i];
                    let slack = 1e-12 * (b - a);
                    !((x[i] <= a + slack && grad[i] > 0.0) || (x[i] >= b - slack && grad[i] < 0.0))
                })
                .collect();
            let pg = free.iter().map(|&i| grad[i] * grad[i]).sum::<f64>().sqrt();
            // Once stationary, a few full steps polish the residual itself;
            // they are kept only while they strictly decrease it.
            let converged = pg <= gtol;
            if converged && (pg == 0.0 || polish >= 3) {
                return Some(self.finish(x, geo.point, f));
            }
            polish += usize::from(converged);
            let k = free.len();
            let mut hess = vec![0.0; k * k];
            let mut gn = vec![0.0; k * k];
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    let jj = linalg::dot(&geo.partials[i], &geo.partials[j]);
                    gn[a * k + b] = jj;
                    hess[a * k + b] = jj + linalg::dot(&r, &geo.second[pair_index(m, i, j)]);
                }
            }
            let g_free: Vec<f64> = free.iter().map(|&i| grad[i]).collect();
            let step = linalg::cholesky_solve(&hess, &g_free)
                .or_else(|| linalg::cholesky_solve(&gn, &g_free))
                .unwrap_or_else(|| g_free.clone());
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let mut trial = x.clone();
                for (a, &i) in free.iter().enumerate() {
                    let (lo, hi) = self.domain[i];
                    trial[i] = (x[i] - lambda * step[a]).clamp(lo, hi);
                }
                if let Ok(g) = self.local(&trial) {
                    let ft = 0.5 * g.point.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    if (converged && ft < f) || (!converged && ft <= f + 4.0 * f64::EPSILON * f) {
                        accepted = Some((trial, g));
                        break;
                    }
                }
                if converged {
                    break;
                }
                lambda *= 0.5;
            }
            if converged && accepted.is_none() {
                return Some(self.finish(x, geo.point, f));
            }
            match accepted {
                Some((xn, g)) => {
                    let moved = linalg::dist(&xn, &x);
                    x = xn;
                    geo = g;
                    if moved == 0.0 {
                        // No representable progress: accept if nearly stationary.
                        return (pg <= 1e-8 * (1.0 + linalg::norm(p))).then(|| {
                            let r2: f64 = geo.point.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                            self.finish(x, geo.point, 0.5 * r2)
                        });
                    }
                }
                None => {
                    return (pg <= 1e-8 * (1.0 + linalg::norm(p))).then(|| self.finish(x, geo.point, f));
                }
            }
        }
        // Final check after the iteration budget.
        let r: Vec<f64> = geo.point.iter().zip(p).map(|(a, b)| a - b).collect();
        let grad: Vec<f64> = geo.partials.iter().map(|d| linalg::dot(&r, d)).collect();
        let pg = linalg::norm(&grad);
        (pg <= 1e-10 * (1.0 + linalg::norm(p))).then(|| self.finish(x, geo.point, 0.5 * linalg::dot(&r, &r)))
    }

    fn finish(&self, x: Vec<f64>, foot: Vec<f64>, f: f64) -> Projection {
        Projection { on_boundary: self.on_boundary(&x), chart: x, foot, distance: (2.0 * f).sqrt() }
    }

    /// Largest radius `ρ` (from a dyadic search) such that every probe at
    /// distance `ρ` along a random normal from a random interior chart point
    /// projects back, unambiguously, to its base point.
    pub fn tube_radius(&self) -> f64 {
        *self.tube.get_or_init(|| self.estimate_tube_radius())
    }

    fn estimate_tube_radius(&self) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(TUBE_SEED);
        let probes: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..TUBE_PROBES)
            .filter_map(|_| {
                let x: Vec<f64> = self
                    .domain
                    .iter()
                    .map(|(a, b)| {
                        let c = 0.5 * (a + b);
                        let h = 0.4 * (b - a);
                        c + h * (2.0 * rng.gen::<f64>() - 1.0)
                    })
                    .collect();
                let geo = self.local(&x).ok()?;
                let nu = random_normal(&mut rng, &geo.partials, self.n)?;
                Some((x, geo.point, nu))
            })
            .collect();
        let diameter = self
            .sample_grid(5, 1.0)
            .iter()
            .filter_map(|x| self.chart_eval(x).ok())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), pt| {
                let s = linalg::norm(&pt);
                (lo.min(s), hi.max(s))
            });
        let mut rho = (2.0 * diameter.1).max(1.0);
        for _ in 0..40 {
            let ok = probes.iter().all(|(_, base, nu)| {
                let q: Vec<f64> = base.iter().zip(nu).map(|(b, v)| b + rho * v).collect();
                match self.nearest_point(&q) {
                    Ok(proj) => !proj.on_boundary && linalg::dist(&proj.foot, base) <= 1e-6 * (1.0 + rho),
                    Err(_) => false,
                }
            });
            if ok {
                return rho;
            }
            rho *= 0.5;
        }
        0.0
    }
}

fn random_normal(rng: &mut ChaCha8Rng, frame: &[Vec<f64>], n: usize) -> Option<Vec<f64>> {
    // Orthonormalize the tangent frame, then remove its span from a random vector.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in frame {
        let mut u = v.clone();
        for b in &basis {
            let d = linalg::dot(&u, b);
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let nu = linalg::norm(&u);
        if nu > 0.0 {
            basis.push(u.into_iter().map(|x| x / nu).collect());
        }
    }
    for _ in 0..16 {
        let mut w: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        for b in &basis {
            let d = linalg::dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let nw = linalg::norm(&w);
        if nw > 1e-6 {
            return Some(w.into_iter().map(|x| x / nw).collect());
        }
    }
    None
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Lexicographic product of per-axis coordinate lists (last axis fastest).
pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn is_grid_local_min(values: &[f64], idx: usize, m: usize, per_axis: usize) -> bool {
    let mut coords = vec![0usize; m];
    let mut rem = idx;
    for a in (0..m).rev() {
        coords[a] = rem % per_axis;
        rem /= per_axis;
    }
    let v = values[idx];
    // All 3^m − 1 neighbours.
    let mut offset = vec![-1i64; m];
    loop {
        if offset.iter().any(|&o| o != 0) {
            let mut flat = 0usize;
            let mut inside = true;
            for a in 0..m {
                let c = coords[a] as i64 + offset[a];
                if c < 0 || c >= per_axis as i64 {
                    inside = false;
                    break;
                }
                flat = flat * per_axis + c as usize;
            }
            if inside && values[flat] < v {
                return false;
            }
        }
        let mut a = m;
        loop {
            if a == 0 {
                return true;
            }
            a -= 1;
            offset[a] += 1;
            if offset[a] <= 1 {
                break;
            }
            offset[a] = -1;
        }
    }
}
