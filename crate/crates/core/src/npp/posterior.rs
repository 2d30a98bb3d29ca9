use rand::Rng;
use rayon::prelude::*;

use super::PowerPriorFamily;
use crate::error::{Error, Result};
use crate::numkit::{argmax_on_interval, NodeValues, PanelSpacing, QuadratureRule, RngStream, Samples};

/// Panels of the default δ rule (8 Gauss nodes each, 2048 evaluations).
pub const DEFAULT_DELTA_RULE_PANELS: usize = 256;
const RULE_ORDER: usize = 8;
const BLOCK: usize = 4096;

/// Normalized marginal posterior of the power parameter.
///
/// The density is tabulated at the nodes of a composite Gauss rule whose panels
/// crowd quadratically towards the lower end of the domain. The CDF assigns each
/// node's mass uniformly to its cell and is piecewise linear between cell edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPosterior {
    pub lower: f64,
    pub upper: f64,
    /// Quadrature nodes, strictly increasing inside `(lower, upper)`.
    pub grid: Vec<f64>,
    /// Normalized log density at each node.
    pub log_density: Vec<f64>,
    /// Normalized probability mass of each node.
    pub masses: Vec<f64>,
    /// `(δ, F(δ))` at cell edges, from `(lower, 0)` to `(upper, 1)`.
    pub cdf: Vec<(f64, f64)>,
    pub mean: f64,
    pub mode: f64,
    pub multimodal: bool,
    /// The δ domain was cut at a propriety bound and the prior renormalized there.
    pub truncated: bool,
    /// Degenerate posterior of a fixed power parameter.
    pub fixed: bool,
}

impl DeltaPosterior {
    pub fn default_rule() -> QuadratureRule {
        QuadratureRule::composite(DEFAULT_DELTA_RULE_PANELS, RULE_ORDER, PanelSpacing::CrowdLow)
            .expect("valid default rule")
    }

    /// Point mass at `delta0`.
    pub fn fixed(delta0: f64) -> Self {
        Self {
            lower: delta0,
            upper: delta0,
            grid: vec![delta0],
            log_density: vec![0.0],
            masses: vec![1.0],
            cdf: vec![(delta0, 0.0), (delta0, 1.0)],
            mean: delta0,
            mode: delta0,
            multimodal: false,
            truncated: false,
            fixed: true,
        }
    }

    /// Normalize `log_kernel` on `[lower, upper]` with the default rule.
    pub fn from_log_kernel(
        log_kernel: impl Fn(f64) -> Result<f64> + Sync,
        lower: f64,
        upper: f64,
        truncated: bool,
    ) -> Result<Self> {
        Self::with_rule(log_kernel, lower, upper, truncated, &Self::default_rule())
    }

    pub fn with_rule(
        log_kernel: impl Fn(f64) -> Result<f64> + Sync,
        lower: f64,
        upper: f64,
        truncated: bool,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        let values = NodeValues::evaluate_par(&log_kernel, lower, upper, rule)?;
        let log_z = values.log_normalizer();
        let masses = values.masses()?;
        let mean = masses.iter().zip(&values.x).map(|(m, x)| m * x).sum();
        let mut cdf = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        cdf.push((values.cell_edges[0], 0.0));
        for (m, edge) in masses.iter().zip(&values.cell_edges[1..]) {
            acc += m;
            cdf.push((*edge, acc.min(1.0)));
        }
        cdf.last_mut().expect("nonempty").1 = 1.0;
        let best = argmax_on_interval(|d| log_kernel(d).unwrap_or(f64::NEG_INFINITY), lower, upper)?;
        Ok(Self {
            lower,
            upper,
            log_density: values.log_f.iter().map(|l| l - log_z).collect(),
            grid: values.x,
            masses,
            cdf,
            mean,
            mode: best.x,
            multimodal: best.multimodal,
            truncated,
            fixed: false,
        })
    }

    /// `E[g(δ)]` under the tabulated posterior.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.masses.iter().zip(&self.grid).map(|(m, &d)| m * g(d)).sum()
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean;
        self.expectation(|d| (d - m) * (d - m)).max(0.0).sqrt()
    }

    /// `F(δ)` by linear interpolation of the cell CDF.
    pub fn cdf_at(&self, delta: f64) -> f64 {
        if delta < self.lower {
            return 0.0;
        }
        if delta >= self.upper {
            return 1.0;
        }
        let i = self.cdf.partition_point(|&(x, _)| x <= delta);
        let (x0, f0) = self.cdf[i - 1];
        let (x1, f1) = self.cdf[i];
        if x1 > x0 {
            f0 + (f1 - f0) * (delta - x0) / (x1 - x0)
        } else {
            f1
        }
    }

    /// Inverse of the piecewise-linear CDF.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.fixed {
            return self.mode;
        }
        let u = u.clamp(0.0, 1.0);
        let i = self.cdf.partition_point(|&(_, f)| f < u).clamp(1, self.cdf.len() - 1);
        let (x0, f0) = self.cdf[i - 1];
        let (x1, f1) = self.cdf[i];
        if f1 > f0 {
            x0 + (x1 - x0) * (u - f0) / (f1 - f0)
        } else {
            x1
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.fixed {
            self.mode
        } else {
            self.quantile(rng.random::<f64>())
        }
    }
}

/// Composition sampling: `δ` from `posterior`, then `θ | δ` from the family's
/// conditional law. Returns rows `(θ…, δ)`.
///
/// Draws are produced in fixed-size blocks, each on its own substream, so the
/// output does not depend on the number of worker threads.
pub fn sample_joint<F: PowerPriorFamily + ?Sized>(
    family: &F,
    posterior: &DeltaPosterior,
    draws: usize,
    stream: &RngStream,
) -> Result<Samples> {
    if draws == 0 {
        return Err(Error::domain("number of draws must be positive"));
    }
    let dim = family.param_names().len();
    let fixed_law = if posterior.fixed { Some(family.conditional(posterior.mode)?) } else { None };
    let blocks = draws.div_ceil(BLOCK);
    let parts: Vec<Samples> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<Samples> {
            let rows = BLOCK.min(draws - b * BLOCK);
            let mut rng = stream.substream(b as u64).rng();
            let mut out = Samples::with_capacity(dim + 1, rows);
            let mut row = vec![0.0; dim + 1];
            let fixed_sampler = fixed_law.as_ref().map(|l| l.sampler()).transpose()?;
            for _ in 0..rows {
                let delta = posterior.draw(&mut rng);
                match &fixed_sampler {
                    Some(s) => s.draw(&mut rng, &mut row[..dim]),
                    None => {
                        let law = family.conditional(delta)?;
                        law.sampler()?.draw(&mut rng, &mut row[..dim]);
                    }
                }
                row[dim] = delta;
                out.push(&row);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut all = Samples::with_capacity(dim + 1, draws);
    for p in parts {
        all.extend(p);
    }
    Ok(all)
}
