//! Gauss–Legendre quadrature: fixed rules, tensor products over a box split
//! into cells, and an adaptive 1D integrator.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// The `order`-point rule on `[-1, 1]`; nodes by Newton iteration on `P_n`.
    pub fn new(order: usize) -> GaussLegendre {
        assert!(order >= 1, "quadrature order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
    }

    /// Nodes and weights of the composite rule on `[a, b]` split into `cells`
    /// equal cells, cell by cell in increasing order.
    pub fn composite(&self, a: f64, b: f64, cells: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / cells as f64;
        let mut out = Vec::with_capacity(cells * self.order());
        for c in 0..cells {
            let lo = a + h * c as f64;
            let mid = lo + 0.5 * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product composite Gauss–Legendre rule on a box.
#[derive(Debug, Clone)]
pub struct TensorRule {
    axes: Vec<Vec<(f64, f64)>>,
}

impl TensorRule {
    pub fn new(bounds: &[(f64, f64)], cells: &[usize], order: usize) -> TensorRule {
        assert_eq!(bounds.len(), cells.len());
        let rule = GaussLegendre::new(order);
        TensorRule {
            axes: bounds.iter().zip(cells).map(|(&(a, b), &c)| rule.composite(a, b, c)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_points(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    /// Points of one axis.
    pub fn axis(&self, i: usize) -> &[(f64, f64)] {
        &self.axes[i]
    }

    /// Integrates `f` over the box, visiting points in lexicographic order
    /// (last axis fastest) so the floating-point sum is reproducible.
    pub fn integrate<E, F>(&self, mut f: F) -> Result<f64, E>
    where
        F: FnMut(&[f64]) -> Result<f64, E>,
    {
        let d = self.axes.len();
        if d == 0 || self.axes.iter().any(Vec::is_empty) {
            return Ok(0.0);
        }
        let mut idx = vec![0usize; d];
        let mut point: Vec<f64> = self.axes.iter().map(|a| a[0].0).collect();
        let mut total = 0.0;
        loop {
            let w: f64 = idx.iter().enumerate().map(|(a, &i)| self.axes[a][i].1).product();
            total += w * f(&point)?;
            let mut a = d;
            loop {
                if a == 0 {
                    return Ok(total);
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < self.axes[a].len() {
                    point[a] = self.axes[a][idx[a]].0;
                    break;
                }
                idx[a] = 0;
                point[a] = self.axes[a][0].0;
            }
        }
    }
}

/// Adaptive bisection with an 8-point rule; returns `(value, error estimate)`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> (f64, f64) {
    let rule = GaussLegendre::new(8);
    let whole = rule.integrate(a, b, &mut f);
    adaptive_step(&rule, a, b, whole, tol, 0, &mut f)
}

fn adaptive_step<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    f: &mut F,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let left = rule.integrate(a, m, &mut *f);
    let right = rule.integrate(m, b, &mut *f);
    let err = (left + right - whole).abs();
    if err <= tol || depth >= 40 {
        return (left + right, err);
    }
    let (l, el) = adaptive_step(rule, a, m, left, 0.5 * tol, depth + 1, f);
    let (r, er) = adaptive_step(rule, m, b, right, 0.5 * tol, depth + 1, f);
    (l + r, el + er)
}
