use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{BetaPrior, BinomialData};
use crate::numkit::{ln_beta, PanelSpacing, QuadratureRule};

/// Square grid of Beta(a, b) candidates, `a, b ∈ {lo, lo + step, …} ∩ [lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for KlGrid {
    fn default() -> Self {
        Self { lo: 0.5, hi: 10.0, step: 0.05 }
    }
}

impl KlGrid {
    fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Outcome of [`verify_kl_optimality`].
#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    pub delta: f64,
    pub grid: KlGrid,
    /// Grid candidate with the smallest weighted divergence.
    pub minimizer: (f64, f64),
    pub minimum: f64,
    /// Parameters of the power prior, `(δy₀ + α, δ(n₀−y₀) + β)`.
    pub power_prior: (f64, f64),
    /// The minimizer lies within one grid step of the power prior in both coordinates.
    pub coincides: bool,
}

/// Weighted divergence `(1−δ) K(g, π₀) + δ K(g, π₁)` of a Beta(a, b) density `g`,
/// where `π₁` is the posterior of the full historical data.
///
/// Expectations under `g` are computed by quadrature on `(0, 1)`.
pub fn weighted_divergence(
    a: f64,
    b: f64,
    hist: &BinomialData,
    prior: &BetaPrior,
    delta: f64,
    rule: &QuadratureRule,
) -> f64 {
    let (a0, b0) = (prior.alpha, prior.beta);
    let (a1, b1) = (hist.y as f64 + a0, hist.failures() as f64 + b0);
    let ln_norm_g = ln_beta(a, b);
    let (ln_norm0, ln_norm1) = (ln_beta(a0, b0), ln_beta(a1, b1));
    let mut total = 0.0;
    for (&p, &w) in rule.nodes().iter().zip(rule.weights()) {
        let (lp, lq) = (p.ln(), (1.0 - p).ln());
        let ln_g = (a - 1.0) * lp + (b - 1.0) * lq - ln_norm_g;
        let ln_pi0 = (a0 - 1.0) * lp + (b0 - 1.0) * lq - ln_norm0;
        let ln_pi1 = (a1 - 1.0) * lp + (b1 - 1.0) * lq - ln_norm1;
        total += w * ln_g.exp() * (ln_g - (1.0 - delta) * ln_pi0 - delta * ln_pi1);
    }
    total
}

/// Search a grid of Beta candidates for the minimizer of the weighted
/// divergence between `π₀` and the full-data posterior, and compare it with the
/// power prior at the same `δ`.
pub fn verify_kl_optimality(hist: &BinomialData, prior: &BetaPrior, delta: f64, grid: KlGrid) -> Result<KlReport> {
    prior.validate()?;
    super::check_unit(delta)?;
    if !(grid.lo > 0.0 && grid.lo < grid.hi && grid.step > 0.0) {
        return Err(Error::domain(format!("invalid candidate grid {grid:?}")));
    }
    let rule = QuadratureRule::composite(256, 8, PanelSpacing::CrowdBoth)?;
    let pts = grid.points();
    let (minimum, minimizer) = pts
        .par_iter()
        .flat_map_iter(|&a| pts.iter().map(move |&b| (a, b)))
        .map(|(a, b)| (weighted_divergence(a, b, hist, prior, delta, &rule), (a, b)))
        .reduce(|| (f64::INFINITY, (f64::NAN, f64::NAN)), |x, y| if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x });
    let power_prior = (delta * hist.y as f64 + prior.alpha, delta * hist.failures() as f64 + prior.beta);
    let tol = grid.step * (1.0 + 1e-9);
    let coincides = (minimizer.0 - power_prior.0).abs() <= tol && (minimizer.1 - power_prior.1).abs() <= tol;
    Ok(KlReport { delta, grid, minimizer, minimum, power_prior, coincides })
}
