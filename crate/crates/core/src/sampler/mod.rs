//! Metropolis-Hastings-within-Gibbs sampling over `(θ, δ)`.
//!
//! Each iteration updates `δ` by a Metropolis-Hastings step, either a Gaussian
//! random walk on `logit δ` or an independence proposal from a beta law, and
//! then refreshes `θ` from its full conditionals given `δ`.

mod diagnostics;

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::DeltaPrior;
use crate::npp::{ConditionalPosterior, PowerPriorFamily};
use crate::numkit::{draw_beta, draw_gamma, draw_standard_normal, ln_beta, RngStream, Samples, StreamRng};
use crate::scalefactor::LogCInterpolant;

pub use diagnostics::{autocorrelation_ess, diagnostics, split_rhat, DiagnosticsReport, MIN_DIAGNOSTIC_DRAWS};

/// How a new power parameter is proposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaProposal {
    /// `logit δ* ~ N(logit δ, c)` with `c` the configured tuning variance.
    #[default]
    RandomWalkLogit,
    /// `δ* ~ Beta(a, b)` independently of the current state.
    BetaIndependence { a: f64, b: f64 },
}

/// A beta independence proposal for `δ`.
pub fn beta_independence_proposal(a: f64, b: f64) -> Result<DeltaProposal> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("beta proposal parameters must be positive, got ({a}, {b})")));
    }
    Ok(DeltaProposal::BetaIndependence { a, b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Variance of the random-walk proposal on `logit δ`.
    pub tuning_c: f64,
    /// Rescale `tuning_c` during burn-in towards an acceptance rate in `[0.3, 0.5]`.
    pub adapt: bool,
    pub master_seed: u64,
    pub thin: usize,
    #[serde(default)]
    pub proposal: DeltaProposal,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 2_000,
            tuning_c: 1.0,
            adapt: true,
            master_seed: 20_200_101,
            thin: 1,
            proposal: DeltaProposal::RandomWalkLogit,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be shorter than the run ({} iterations)",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.tuning_c > 0.0 && self.tuning_c.is_finite()) {
            return Err(Error::Config(format!("tuning_c must be positive, got {}", self.tuning_c)));
        }
        if let DeltaProposal::BetaIndependence { a, b } = self.proposal {
            beta_independence_proposal(a, b).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Full conditionals of a model over `(θ, δ)`.
pub trait ModelConditionals: Sync {
    fn param_names(&self) -> Vec<String>;

    /// A degenerate prior pins `δ` to this value.
    fn fixed_delta(&self) -> Option<f64> {
        None
    }

    /// `log π(δ | θ, D₀, D)` up to an additive constant; `-∞` outside the support.
    fn log_target_delta(&self, theta: &[f64], delta: f64) -> f64;

    /// Starting value of `θ` for a chain starting at `delta`.
    fn initial_theta(&self, delta: f64, rng: &mut StreamRng) -> Result<Vec<f64>>;

    /// One sweep over the coordinates of `θ`, each drawn from its full conditional.
    fn gibbs_sweep(&self, theta: &mut [f64], delta: f64, rng: &mut StreamRng) -> Result<()>;
}

/// Where `log C(δ)` comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum LogCSource {
    ClosedForm,
    Interpolated(LogCInterpolant),
}

/// Normalized power prior conditionals for a conjugate family.
///
/// `π(δ | θ, D₀, D) ∝ π₀(δ) L(θ|D₀)^δ / C(δ)`; `θ` given `δ` follows the
/// family's conditional posterior, updated block-wise for the normal model
/// (`β | σ²` then `σ² | β`).
pub struct NppConditionals<'a, F: ?Sized> {
    pub family: &'a F,
    pub delta_prior: DeltaPrior,
    pub log_c: LogCSource,
}

impl<'a, F: PowerPriorFamily + ?Sized> NppConditionals<'a, F> {
    pub fn new(family: &'a F, delta_prior: DeltaPrior, log_c: LogCSource) -> Result<Self> {
        delta_prior.validate()?;
        Ok(Self { family, delta_prior, log_c })
    }

    fn log_c(&self, delta: f64) -> Result<f64> {
        match &self.log_c {
            LogCSource::ClosedForm => self.family.log_scale_factor(delta),
            LogCSource::Interpolated(table) => table.interpolate(delta),
        }
    }
}

impl<F: PowerPriorFamily + ?Sized> ModelConditionals for NppConditionals<'_, F> {
    fn param_names(&self) -> Vec<String> {
        self.family.param_names()
    }

    fn fixed_delta(&self) -> Option<f64> {
        self.delta_prior.fixed_value()
    }

    fn log_target_delta(&self, theta: &[f64], delta: f64) -> f64 {
        if !(delta > 0.0 && delta < 1.0) {
            return f64::NEG_INFINITY;
        }
        if self.family.propriety_bound().is_some_and(|lo| delta <= lo) {
            return f64::NEG_INFINITY;
        }
        let log_c = match self.log_c(delta) {
            Ok(v) if v.is_finite() => v,
            _ => return f64::NEG_INFINITY,
        };
        self.delta_prior.log_density(delta) + delta * self.family.historical_log_likelihood(theta) - log_c
    }

    fn initial_theta(&self, delta: f64, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let law = self.family.conditional(delta)?;
        let mut theta = vec![0.0; law.dim()];
        law.sampler()?.draw(rng, &mut theta);
        Ok(theta)
    }

    fn gibbs_sweep(&self, theta: &mut [f64], delta: f64, rng: &mut StreamRng) -> Result<()> {
        let law = self.family.conditional(delta)?;
        match &law {
            ConditionalPosterior::NormalInverseGamma { mean, precision, shape, scale } => {
                let k = mean.len();
                let chol = precision
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::domain("conditional precision matrix is not positive definite"))?;
                // β | σ² ~ N(mean, σ² precision⁻¹).
                let sigma2 = theta[k];
                let z = DVector::from_fn(k, |_, _| draw_standard_normal(rng));
                let x = chol.l().transpose().solve_upper_triangular(&z).expect("nonsingular Cholesky factor");
                for i in 0..k {
                    theta[i] = mean[i] + sigma2.sqrt() * x[i];
                }
                // σ² | β ~ InvGamma(shape + k/2, scale + (β − mean)' precision (β − mean)/2).
                let d = DVector::from_column_slice(&theta[..k]) - mean;
                let q = (precision * &d).dot(&d);
                theta[k] = (scale + q / 2.0) / draw_gamma(rng, shape + k as f64 / 2.0, 1.0);
            }
            // Single-block parameters: the full conditional is the conditional posterior itself.
            _ => law.sampler()?.draw(rng, theta),
        }
        Ok(())
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Column names: the model parameters followed by `delta`.
    pub names: Vec<String>,
    /// Rows `(θ…, δ)` after burn-in and thinning.
    pub draws: Samples,
    /// Fraction of accepted `δ` proposals after burn-in (0 for a fixed `δ`).
    pub acceptance_rate: f64,
    /// Random-walk variance used after burn-in.
    pub tuning_c: f64,
    /// Effective sample size per column.
    pub ess: Vec<f64>,
}

impl Chain {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|j| self.draws.column(j))
    }

    pub fn delta(&self) -> Vec<f64> {
        self.draws.column(self.names.len() - 1)
    }

    pub fn mean(&self, column: usize) -> f64 {
        let col = self.draws.column(column);
        col.iter().sum::<f64>() / col.len() as f64
    }

    /// Header row of column names, then one row per retained draw.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Config(format!("writing chain CSV: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names).map_err(io)?;
        for row in self.draws.rows() {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Config(format!("writing chain CSV: {e}")))
    }
}

/// Run one chain on stream `(master_seed, 0)`.
pub fn run_mh_within_gibbs<M: ModelConditionals + ?Sized>(model: &M, config: &McmcConfig) -> Result<Chain> {
    run_chain(model, config, &RngStream::new(config.master_seed, 0), true)
}

/// Run `count` chains concurrently on streams `(master_seed, 0..count)`.
pub fn run_chains<M: ModelConditionals + ?Sized>(model: &M, config: &McmcConfig, count: usize) -> Result<Vec<Chain>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| run_chain(model, config, &RngStream::new(config.master_seed, i), true))
        .collect()
}

const ADAPT_BATCH: usize = 100;

fn logit(d: f64) -> f64 {
    (d / (1.0 - d)).ln()
}

fn expit(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `jacobian = false` drops the `δ(1−δ)` factors of the logit random walk; only tests use it.
fn run_chain<M: ModelConditionals + ?Sized>(
    model: &M,
    config: &McmcConfig,
    stream: &RngStream,
    jacobian: bool,
) -> Result<Chain> {
    config.validate()?;
    let mut rng = stream.rng();
    let fixed = model.fixed_delta();
    let mut delta = fixed.unwrap_or(0.5);
    let mut theta = model
        .initial_theta(delta, &mut rng)
        .map_err(|e| Error::Initialization(format!("initial parameters at delta = {delta}: {e}")))?;
    let mut current = model.log_target_delta(&theta, delta);
    if fixed.is_none() && !current.is_finite() {
        return Err(Error::Initialization(format!("log target of delta is {current} at delta = {delta}")));
    }

    let mut names = model.param_names();
    names.push("delta".into());
    let mut draws = Samples::with_capacity(names.len(), (config.iterations - config.burn_in) / config.thin + 1);
    let mut tuning = config.tuning_c;
    let (mut accepted, mut batch_accepted) = (0usize, 0usize);
    let mut row = vec![0.0; names.len()];

    for iter in 0..config.iterations {
        if fixed.is_none() {
            let (proposal, log_ratio) = match config.proposal {
                DeltaProposal::RandomWalkLogit => {
                    let d = expit(logit(delta) + tuning.sqrt() * draw_standard_normal(&mut rng));
                    let jac = if jacobian { (d * (1.0 - d)).ln() - (delta * (1.0 - delta)).ln() } else { 0.0 };
                    (d, jac)
                }
                DeltaProposal::BetaIndependence { a, b } => {
                    let d = draw_beta(&mut rng, a, b);
                    let log_q = |x: f64| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b);
                    (d, log_q(delta) - log_q(d))
                }
            };
            let candidate = model.log_target_delta(&theta, proposal);
            let log_t = candidate - current + log_ratio;
            if candidate.is_finite() && (log_t >= 0.0 || rng.random::<f64>().ln() < log_t) {
                delta = proposal;
                if iter >= config.burn_in {
                    accepted += 1;
                }
                batch_accepted += 1;
            }
        }
        model.gibbs_sweep(&mut theta, delta, &mut rng)?;
        current = model.log_target_delta(&theta, delta);

        if iter < config.burn_in {
            if config.adapt && (iter + 1) % ADAPT_BATCH == 0 {
                let rate = batch_accepted as f64 / ADAPT_BATCH as f64;
                if rate < 0.3 {
                    tuning *= 0.7;
                } else if rate > 0.5 {
                    tuning *= 1.4;
                }
            }
            if (iter + 1) % ADAPT_BATCH == 0 {
                batch_accepted = 0;
            }
            continue;
        }
        if (iter - config.burn_in) % config.thin == 0 {
            row[..theta.len()].copy_from_slice(&theta);
            row[theta.len()] = delta;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation { node: delta, reason: format!("non-finite draw at iteration {iter}") });
            }
            draws.push(&row);
        }
    }

    let retained = config.iterations - config.burn_in;
    let acceptance_rate = if fixed.is_some() { 0.0 } else { accepted as f64 / retained as f64 };
    let ess = (0..names.len()).map(|j| autocorrelation_ess(&draws.column(j)).0).collect();
    Ok(Chain { names, draws, acceptance_rate, tuning_c: tuning, ess })
}

#[cfg(test)]
mod tests;
