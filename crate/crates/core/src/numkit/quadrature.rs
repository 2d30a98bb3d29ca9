use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Placement of composite panel edges on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelSpacing {
    /// Equal-width panels.
    Uniform,
    /// Edges at `(s/P)^2`: panels crowd towards the lower end.
    CrowdLow,
    /// Edges at `(1 - cos(pi s/P))/2`: panels crowd towards both ends.
    CrowdBoth,
}

impl PanelSpacing {
    fn edge(self, s: usize, panels: usize) -> f64 {
        let t = s as f64 / panels as f64;
        match self {
            PanelSpacing::Uniform => t,
            PanelSpacing::CrowdLow => t * t,
            PanelSpacing::CrowdBoth => 0.5 * (1.0 - (PI * t).cos()),
        }
    }
}

/// Composite Gauss-Legendre rule on the unit interval.
///
/// Nodes are strictly interior (open rule) and the weights sum to one, so the
/// rule maps onto any `[lo, hi]` by an affine change of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    edges: Vec<f64>,
    order: usize,
}

impl Default for QuadratureRule {
    /// 64 uniform panels with 8 nodes each.
    fn default() -> Self {
        Self::composite(64, 8, PanelSpacing::Uniform).expect("default rule is valid")
    }
}

impl QuadratureRule {
    pub fn composite(panels: usize, order: usize, spacing: PanelSpacing) -> Result<Self> {
        if panels == 0 || order == 0 {
            return Err(Error::domain("quadrature rule needs at least one panel and one node"));
        }
        let (gl_nodes, gl_weights) = gauss_legendre(order);
        let edges: Vec<f64> = (0..=panels).map(|s| spacing.edge(s, panels)).collect();
        let mut nodes = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in gl_nodes.iter().zip(&gl_weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Ok(Self { nodes, weights, edges, order })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Panel edges on the unit interval, from 0 to 1.
    pub fn panel_edges(&self) -> &[f64] {
        &self.edges
    }

    /// Same rule with twice as many panels.
    pub fn refined(&self, spacing: PanelSpacing) -> Self {
        Self::composite(2 * self.panels(), self.order, spacing).expect("refinement of a valid rule")
    }

    /// Boundaries of the cell attributed to each node: midpoints between
    /// neighbouring nodes inside a panel, panel edges between panels.
    fn cell_edges(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.nodes.len() + 1);
        out.push(0.0);
        for (p, pair) in self.edges.windows(2).enumerate() {
            let base = p * self.order;
            for j in 1..self.order {
                out.push(0.5 * (self.nodes[base + j - 1] + self.nodes[base + j]));
            }
            out.push(pair[1]);
        }
        out
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Numerically stable `ln Σ exp(v_i)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// A log-density evaluated on the nodes of a rule mapped onto `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct NodeValues {
    pub lo: f64,
    pub hi: f64,
    /// Abscissae on `[lo, hi]`.
    pub x: Vec<f64>,
    /// Weights including the `(hi - lo)` Jacobian.
    pub weights: Vec<f64>,
    /// Unnormalized log density at each abscissa.
    pub log_f: Vec<f64>,
    /// Cell boundaries on `[lo, hi]`, one more than the number of nodes.
    pub cell_edges: Vec<f64>,
}

impl NodeValues {
    pub fn evaluate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rule: &QuadratureRule) -> Result<Self> {
        let x = Self::abscissae(lo, hi, rule)?;
        let log_f = x.iter().map(|&xi| f(xi)).collect();
        Self::from_log_values(lo, hi, rule, x, log_f)
    }

    /// Parallel variant for expensive, fallible log densities.
    pub fn evaluate_par(
        f: impl Fn(f64) -> Result<f64> + Sync,
        lo: f64,
        hi: f64,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let x = Self::abscissae(lo, hi, rule)?;
        let log_f = x.par_iter().map(|&xi| f(xi)).collect::<Result<Vec<f64>>>()?;
        Self::from_log_values(lo, hi, rule, x, log_f)
    }

    fn abscissae(lo: f64, hi: f64, rule: &QuadratureRule) -> Result<Vec<f64>> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!("integration bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Ok(rule.nodes().iter().map(|u| lo + (hi - lo) * u).collect())
    }

    fn from_log_values(lo: f64, hi: f64, rule: &QuadratureRule, x: Vec<f64>, log_f: Vec<f64>) -> Result<Self> {
        if let Some(i) = log_f.iter().position(|v| v.is_nan()) {
            return Err(Error::Evaluation { node: x[i], reason: "log density returned NaN".into() });
        }
        let width = hi - lo;
        let weights = rule.weights().iter().map(|w| w * width).collect();
        let cell_edges = rule.cell_edges().into_iter().map(|u| lo + width * u).collect();
        Ok(Self { lo, hi, x, weights, log_f, cell_edges })
    }

    /// `ln ∫ exp(f)` over `[lo, hi]`.
    pub fn log_normalizer(&self) -> f64 {
        log_sum_exp(self.weights.iter().zip(&self.log_f).map(|(w, l)| w.ln() + l))
    }

    /// Normalized probability mass attached to each node.
    pub fn masses(&self) -> Result<Vec<f64>> {
        let log_z = self.log_normalizer();
        if !log_z.is_finite() {
            return Err(Error::Evaluation {
                node: self.lo,
                reason: format!("normalizing constant is not finite (log = {log_z})"),
            });
        }
        Ok(self.weights.iter().zip(&self.log_f).map(|(w, l)| w * (l - log_z).exp()).collect())
    }
}

/// Result of [`integrate_unit`].
#[derive(Debug, Clone)]
pub struct UnitIntegral {
    pub log_normalizer: f64,
    pub mean: f64,
    /// `(x, F(x))` pairs, nondecreasing, starting at `(lo, 0)` and ending at `(hi, 1)`.
    pub cdf_grid: Vec<(f64, f64)>,
}

/// Normalize a log-density on `[lo, hi] ⊂ [0, 1]` with a composite rule.
pub fn integrate_unit(f: impl Fn(f64) -> f64, lo: f64, hi: f64, rule: &QuadratureRule) -> Result<UnitIntegral> {
    let values = NodeValues::evaluate(f, lo, hi, rule)?;
    let log_normalizer = values.log_normalizer();
    let masses = values.masses()?;
    let mean = masses.iter().zip(&values.x).map(|(m, x)| m * x).sum();
    let mut cdf_grid = Vec::with_capacity(masses.len() + 1);
    let mut acc = 0.0;
    cdf_grid.push((values.cell_edges[0], 0.0));
    for (m, edge) in masses.iter().zip(&values.cell_edges[1..]) {
        acc += m;
        cdf_grid.push((*edge, acc.min(1.0)));
    }
    if let Some(last) = cdf_grid.last_mut() {
        last.1 = 1.0;
    }
    Ok(UnitIntegral { log_normalizer, mean, cdf_grid })
}
