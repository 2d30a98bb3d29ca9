//! Path-sampling estimate of `log C(δ) = log ∫ L(θ|D₀)^δ π₀(θ) dθ`.
//!
//! `d/dδ log C(δ)` is the mean of `log L(θ|D₀)` under the powered posterior
//! `π(θ|D₀, δ) ∝ L(θ|D₀)^δ π₀(θ)`, so `log C` is recovered by integrating
//! Monte Carlo means of the historical log-likelihood over a grid of knots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npp::PowerPriorFamily;
use crate::numkit::{mean_and_sd, RngStream, Samples};

pub const DEFAULT_KNOT_COUNT: usize = 64;
pub const DEFAULT_KNOT_EXPONENT: f64 = 2.0;
pub const DEFAULT_DRAWS_PER_KNOT: usize = 5000;

/// Ascending knots in `(0, 1]` ending at exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    pub knots: Vec<f64>,
    pub c_exponent: f64,
    pub count: usize,
}

impl KnotGrid {
    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.knots.is_empty()
            && self.knots[0] > 0.0
            && *self.knots.last().unwrap() == 1.0
            && self.knots.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::domain("knots must be strictly ascending in (0, 1] and end at 1"))
        }
    }

    /// Widths `Δₖ = δₖ − δₖ₋₁` with `δ₀ = 0`; they sum to 1.
    pub fn widths(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.knots
            .iter()
            .map(|&k| {
                let w = k - prev;
                prev = k;
                w
            })
            .collect()
    }
}

impl Default for KnotGrid {
    fn default() -> Self {
        design_knots(DEFAULT_KNOT_COUNT, DEFAULT_KNOT_EXPONENT, &[]).expect("default knots are valid")
    }
}

/// Knots `(s/S)^c` for `s = 1..S`, which crowd towards 0 for `c > 1`, merged with `extra`.
pub fn design_knots(count: usize, c: f64, extra: &[f64]) -> Result<KnotGrid> {
    if count < 8 {
        return Err(Error::domain(format!("at least 8 knots are needed, got {count}")));
    }
    if !(c > 1.0) || !c.is_finite() {
        return Err(Error::domain(format!("the knot exponent must exceed 1, got {c}")));
    }
    if let Some(bad) = extra.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::domain(format!("extra knot {bad} is outside (0, 1]")));
    }
    let mut knots: Vec<f64> = (1..=count).map(|s| (s as f64 / count as f64).powf(c)).collect();
    knots.extend_from_slice(extra);
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    *knots.last_mut().unwrap() = 1.0;
    let grid = KnotGrid { knots, c_exponent: c, count };
    grid.validate()?;
    Ok(grid)
}

/// How the knot means of the log-likelihood are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum IntegrationRule {
    /// `Σₖ Δₖ h(δₖ)`: each interval takes the mean at its upper knot.
    #[serde(rename = "riemann_left")]
    UpperKnotSum,
    /// `Σₖ Δₖ (h(δₖ₋₁) + h(δₖ))/2`, with `h(0)` from draws of the initial prior.
    #[default]
    #[serde(rename = "trapezoid")]
    Trapezoid,
}

/// Draws from the powered posterior at fixed `δ`, plus the historical log-likelihood.
pub trait PoweredPosteriorSampler: Sync {
    /// `count` draws from `π(θ|D₀, δ)`, reproducible for a given stream.
    fn draw(&self, delta: f64, stream: &RngStream, count: usize) -> Result<Samples>;

    fn log_likelihood(&self, theta: &[f64]) -> f64;

    /// Whether `π₀(θ)` is proper, i.e. `C(0) = 1` and `δ = 0` can be sampled.
    fn initial_prior_is_proper(&self) -> bool;
}

/// Exact powered-posterior draws for a conjugate family.
pub struct ConjugatePoweredSampler<'a, F: ?Sized>(pub &'a F);

impl<F: PowerPriorFamily + ?Sized> PoweredPosteriorSampler for ConjugatePoweredSampler<'_, F> {
    fn draw(&self, delta: f64, stream: &RngStream, count: usize) -> Result<Samples> {
        let law = self.0.powered_prior(delta)?;
        let sampler = law.sampler()?;
        let mut rng = stream.rng();
        let mut out = Samples::with_capacity(law.dim(), count);
        let mut row = vec![0.0; law.dim()];
        for _ in 0..count {
            sampler.draw(&mut rng, &mut row);
            out.push(&row);
        }
        Ok(out)
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.0.historical_log_likelihood(theta)
    }

    fn initial_prior_is_proper(&self) -> bool {
        self.0.propriety_bound().is_none()
    }
}

/// Piecewise-linear `log C(δ)` through estimated knot values.
///
/// With a proper initial prior the curve is pinned at `log C(0) = 0`. Otherwise
/// `C(0)` is infinite and the stored values are `log C(δ) − log C(1)`, pinned at
/// `anchor = 1`; interpolation is then only available from the first knot up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogCInterpolant {
    pub knots: Vec<f64>,
    pub log_c: Vec<f64>,
    /// Standard error of each `log_c` value, treating knots as independent.
    pub se: Vec<f64>,
    pub rule: IntegrationRule,
    #[serde(default)]
    pub anchor: f64,
    /// Knot means of the historical log-likelihood, with `h(0)` first when available.
    #[serde(default)]
    pub h: Vec<f64>,
    #[serde(default)]
    pub h_se: Vec<f64>,
}

impl LogCInterpolant {
    pub fn from_json(text: &str) -> Result<Self> {
        let interp: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("log C table: {e}")))?;
        interp.validate()?;
        Ok(interp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite values serialize")
    }

    pub fn validate(&self) -> Result<()> {
        KnotGrid { knots: self.knots.clone(), c_exponent: f64::NAN, count: self.knots.len() }.validate()?;
        if self.log_c.len() != self.knots.len() || self.se.len() != self.knots.len() {
            return Err(Error::Config("log C table columns have different lengths".into()));
        }
        if self.log_c.iter().chain(&self.se).any(|v| !v.is_finite()) {
            return Err(Error::Config("log C table holds non-finite values".into()));
        }
        if self.anchor != 0.0 && self.anchor != 1.0 {
            return Err(Error::Config(format!("log C anchor must be 0 or 1, got {}", self.anchor)));
        }
        Ok(())
    }

    /// Piecewise-linear value at `delta`; exact at knots.
    pub fn interpolate(&self, delta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::domain(format!("delta = {delta} is outside [0, 1]")));
        }
        let first = self.knots[0];
        if delta < first {
            if self.anchor != 0.0 {
                return Err(Error::domain(format!(
                    "log C is only known relative to delta = 1 from the first knot {first} up; got {delta}"
                )));
            }
            return Ok(self.log_c[0] * delta / first);
        }
        let i = self.knots.partition_point(|&k| k < delta);
        if self.knots[i] == delta {
            return Ok(self.log_c[i]);
        }
        let (x0, x1) = (self.knots[i - 1], self.knots[i]);
        let t = (delta - x0) / (x1 - x0);
        Ok(self.log_c[i - 1] + t * (self.log_c[i] - self.log_c[i - 1]))
    }

    /// Number of sign changes in the slope between consecutive knots (0 at the origin included when pinned).
    pub fn slope_sign_changes(&self) -> usize {
        let mut xs = Vec::with_capacity(self.knots.len() + 1);
        let mut ys = Vec::with_capacity(self.knots.len() + 1);
        if self.anchor == 0.0 {
            xs.push(0.0);
            ys.push(0.0);
        }
        xs.extend_from_slice(&self.knots);
        ys.extend_from_slice(&self.log_c);
        let slopes: Vec<f64> = (1..xs.len()).map(|i| (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1])).collect();
        slopes.windows(2).filter(|w| w[0].signum() != w[1].signum() && w[0] != 0.0 && w[1] != 0.0).count()
    }

    /// Knots where the log-likelihood mean drops by more than `z` standard errors.
    ///
    /// `log C` is convex, so `h` is nondecreasing; a significant drop means the
    /// knot means are unreliable there.
    pub fn convexity_violations(&self, z: f64) -> Vec<usize> {
        (1..self.h.len())
            .filter(|&i| {
                let tol = z * (self.h_se[i].powi(2) + self.h_se[i - 1].powi(2)).sqrt();
                self.h[i] < self.h[i - 1] - tol
            })
            .collect()
    }
}

/// Estimate `log C` at every knot from `draws_per_knot` powered-posterior draws.
///
/// Knot `l` uses `stream.substream(l + 1)` and `δ = 0` uses `stream.substream(0)`,
/// so results do not depend on the number of worker threads.
pub fn estimate_log_c<S: PoweredPosteriorSampler + ?Sized>(
    sampler: &S,
    grid: &KnotGrid,
    draws_per_knot: usize,
    rule: IntegrationRule,
    stream: &RngStream,
) -> Result<LogCInterpolant> {
    grid.validate()?;
    if draws_per_knot < 100 {
        return Err(Error::domain(format!("at least 100 draws per knot are needed, got {draws_per_knot}")));
    }
    let proper = sampler.initial_prior_is_proper();
    let with_origin = proper && rule == IntegrationRule::Trapezoid;
    let mut deltas = Vec::with_capacity(grid.len() + 1);
    if with_origin {
        deltas.push((0.0, stream.substream(0)));
    }
    deltas.extend(grid.knots.iter().enumerate().map(|(l, &d)| (d, stream.substream(l as u64 + 1))));

    let means: Vec<(f64, f64)> = deltas
        .par_iter()
        .map(|(delta, s)| knot_mean(sampler, *delta, s, draws_per_knot))
        .collect::<Result<_>>()?;
    let (h, h_se): (Vec<f64>, Vec<f64>) = means.into_iter().unzip();

    // Per-interval increments and the weights with which knot means enter them.
    let widths = grid.widths();
    let offset = usize::from(with_origin);
    let increments: Vec<Vec<(usize, f64)>> = widths
        .iter()
        .enumerate()
        .map(|(k, &w)| match rule {
            IntegrationRule::UpperKnotSum => vec![(k + offset, w)],
            IntegrationRule::Trapezoid if k == 0 && !with_origin => {
                // No h(0) available: extend the first knot's value down to 0.
                vec![(0, w)]
            }
            IntegrationRule::Trapezoid => vec![(k + offset - 1, w / 2.0), (k + offset, w / 2.0)],
        })
        .collect();

    let n = grid.len();
    let mut log_c = vec![0.0; n];
    let mut se = vec![0.0; n];
    let mut weights = vec![0.0; h.len()];
    if proper {
        for l in 0..n {
            for &(j, w) in &increments[l] {
                weights[j] += w;
            }
            log_c[l] = dot(&weights, &h);
            se[l] = weighted_se(&weights, &h_se);
        }
    } else {
        // Integrate downwards from δ = 1: log C(δₗ) − log C(1) = −Σ_{k>l} increments.
        for l in (0..n).rev() {
            if l + 1 < n {
                for &(j, w) in &increments[l + 1] {
                    weights[j] -= w;
                }
            }
            log_c[l] = dot(&weights, &h);
            se[l] = weighted_se(&weights, &h_se);
        }
    }

    let interp = LogCInterpolant {
        knots: grid.knots.clone(),
        log_c,
        se,
        rule,
        anchor: if proper { 0.0 } else { 1.0 },
        h,
        h_se,
    };
    let changes = interp.slope_sign_changes();
    if changes > 1 {
        log::warn!("estimated log C changes slope sign {changes} times; knot means may be too noisy");
    }
    let violations = interp.convexity_violations(3.0);
    if !violations.is_empty() {
        log::warn!("log-likelihood means decrease significantly at knot indices {violations:?}");
    }
    Ok(interp)
}

fn knot_mean<S: PoweredPosteriorSampler + ?Sized>(
    sampler: &S,
    delta: f64,
    stream: &RngStream,
    count: usize,
) -> Result<(f64, f64)> {
    let fail = |reason: String| Error::Evaluation { node: delta, reason };
    let draws = sampler.draw(delta, stream, count).map_err(|e| fail(format!("sampling failed: {e}")))?;
    let values: Vec<f64> = draws.rows().map(|theta| sampler.log_likelihood(theta)).collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(fail(format!("historical log-likelihood is {bad}")));
    }
    let (mean, sd) = mean_and_sd(&values);
    Ok((mean, sd / (values.len() as f64).sqrt()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_se(weights: &[f64], se: &[f64]) -> f64 {
    weights.iter().zip(se).map(|(w, s)| (w * s).powi(2)).sum::<f64>().sqrt()
}

/// Largest gap between `interp` and the exact `family.log_scale_factor` at `queries`.
///
/// When the table is pinned at `δ = 1`, both curves are compared relative to their value there.
pub fn max_gap_to_closed_form<F: PowerPriorFamily + ?Sized>(
    interp: &LogCInterpolant,
    family: &F,
    queries: &[f64],
) -> Result<f64> {
    let reference = if interp.anchor == 0.0 { 0.0 } else { family.log_scale_factor(interp.anchor)? };
    let mut worst = 0.0f64;
    for &q in queries {
        let exact = family.log_scale_factor(q)? - reference;
        worst = worst.max((interp.interpolate(q)? - exact).abs());
    }
    Ok(worst)
}

/// `count` equispaced points on `[lo, hi]`.
pub fn equispaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
