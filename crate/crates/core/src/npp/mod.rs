//! Exact normalized power prior posteriors for conjugate families.
//!
//! For historical data `D₀`, current data `D`, initial prior `π₀(θ)` and power
//! parameter `δ`, the normalized power prior is
//! `π(θ | D₀, δ) = L(θ|D₀)^δ π₀(θ) / C(δ)` with `C(δ) = ∫ L(θ|D₀)^δ π₀(θ) dθ`.
//! Every family here supplies `log C(δ)`, the numerator integral
//! `∫ L(θ|D) L(θ|D₀)^δ π₀(θ) dθ` and the exact law of `θ` given `δ`, from which
//! the marginal posterior of `δ` and joint posterior draws follow.

mod binomial;
mod conditional;
mod kl;
mod multinomial;
mod normal;
mod posterior;

pub use binomial::BinomialNpp;
pub use conditional::{ConditionalPosterior, ConditionalSampler};
pub use kl::{verify_kl_optimality, KlGrid, KlReport};
pub use multinomial::MultinomialNpp;
pub use normal::{complete_the_square, log_normal_scale_integral, NormalLinearIntermediates, NormalLinearNpp};
pub use posterior::{sample_joint, DeltaPosterior, DEFAULT_DELTA_RULE_PANELS};

use crate::error::{Error, Result};
use crate::models::{BetaPrior, BinomialData, ConjugatePrior, DataPair, DeltaPrior, DirichletPrior, MultinomialData};
use crate::models::{NormalLinearData, NormalLinearPrior};
use crate::numkit::{QuadratureRule, RngStream, Samples};

/// A model for which the power prior is available in closed form.
pub trait PowerPriorFamily: Send + Sync {
    fn family(&self) -> &'static str;

    /// Column labels of a parameter draw.
    fn param_names(&self) -> Vec<String>;

    /// Number of historical observations `n₀`.
    fn historical_size(&self) -> u64;

    /// Propriety bound for improper initial priors: `δ` must strictly exceed it.
    /// `None` when `π₀(θ)` is proper and every `δ ∈ [0, 1]` is admissible.
    fn propriety_bound(&self) -> Option<f64> {
        None
    }

    /// `log ∫ L(θ|D) L(θ|D₀)^δ π₀(θ) dθ`.
    fn log_numerator(&self, delta: f64) -> Result<f64>;

    /// `log C(δ) = log ∫ L(θ|D₀)^δ π₀(θ) dθ`.
    fn log_scale_factor(&self, delta: f64) -> Result<f64>;

    /// `log numerator − log C(δ)` up to an additive constant free of `δ`,
    /// evaluated from sufficient statistics only.
    fn log_npp_ratio(&self, delta: f64) -> Result<f64> {
        Ok(self.log_numerator(delta)? - self.log_scale_factor(delta)?)
    }

    /// Law of `θ` given `δ` under the (normalized or joint) power prior.
    fn conditional(&self, delta: f64) -> Result<ConditionalPosterior>;

    /// The powered prior `π(θ | D₀, δ) ∝ L(θ|D₀)^δ π₀(θ)`.
    fn powered_prior(&self, delta: f64) -> Result<ConditionalPosterior>;

    /// `log L(θ | D₀)` with the same constant convention as [`Self::log_scale_factor`].
    fn historical_log_likelihood(&self, theta: &[f64]) -> f64;
}

/// A family whose historical likelihood is multiplied by `exp(log_constant)`.
///
/// The constant enters `L(θ|D₀)^δ` as `δ · log_constant` in both the numerator
/// integral and `C(δ)`; the normalized ratio is inherited unchanged because it
/// never depends on the constant.
pub struct WithLikelihoodConstant<'a, F: ?Sized> {
    pub inner: &'a F,
    pub log_constant: f64,
}

impl<'a, F: PowerPriorFamily + ?Sized> WithLikelihoodConstant<'a, F> {
    pub fn new(inner: &'a F, log_constant: f64) -> Self {
        Self { inner, log_constant }
    }
}

impl<F: PowerPriorFamily + ?Sized> PowerPriorFamily for WithLikelihoodConstant<'_, F> {
    fn family(&self) -> &'static str {
        self.inner.family()
    }
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }
    fn historical_size(&self) -> u64 {
        self.inner.historical_size()
    }
    fn propriety_bound(&self) -> Option<f64> {
        self.inner.propriety_bound()
    }
    fn log_numerator(&self, delta: f64) -> Result<f64> {
        Ok(self.inner.log_numerator(delta)? + delta * self.log_constant)
    }
    fn log_scale_factor(&self, delta: f64) -> Result<f64> {
        Ok(self.inner.log_scale_factor(delta)? + delta * self.log_constant)
    }
    fn log_npp_ratio(&self, delta: f64) -> Result<f64> {
        self.inner.log_npp_ratio(delta)
    }
    fn conditional(&self, delta: f64) -> Result<ConditionalPosterior> {
        self.inner.conditional(delta)
    }
    fn powered_prior(&self, delta: f64) -> Result<ConditionalPosterior> {
        self.inner.powered_prior(delta)
    }
    fn historical_log_likelihood(&self, theta: &[f64]) -> f64 {
        self.inner.historical_log_likelihood(theta) + self.log_constant
    }
}

/// Any of the conjugate families, selected at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum ConjugateModel {
    Binomial(BinomialNpp),
    Multinomial(MultinomialNpp),
    Normal(NormalLinearNpp),
}

impl ConjugateModel {
    /// Pair data with a matching initial prior.
    pub fn new(data: &DataPair, prior: &ConjugatePrior) -> Result<Self> {
        match (data, prior) {
            (DataPair::Binomial { historical, current }, ConjugatePrior::Beta(p)) => {
                Ok(Self::Binomial(BinomialNpp::new(*historical, *current, *p)?))
            }
            (DataPair::Multinomial { historical, current }, ConjugatePrior::Dirichlet(p)) => {
                Ok(Self::Multinomial(MultinomialNpp::new(historical.clone(), current.clone(), p.clone())?))
            }
            (DataPair::Normal { historical, current }, ConjugatePrior::NormalLinear(p)) => {
                Ok(Self::Normal(NormalLinearNpp::new(historical.clone(), current.clone(), p.clone())?))
            }
            (d, p) => Err(Error::Config(format!("prior {p:?} does not apply to {} data", d.family()))),
        }
    }

    pub fn as_family(&self) -> &dyn PowerPriorFamily {
        match self {
            Self::Binomial(f) => f,
            Self::Multinomial(f) => f,
            Self::Normal(f) => f,
        }
    }
}

impl PowerPriorFamily for ConjugateModel {
    fn family(&self) -> &'static str {
        self.as_family().family()
    }
    fn param_names(&self) -> Vec<String> {
        self.as_family().param_names()
    }
    fn historical_size(&self) -> u64 {
        self.as_family().historical_size()
    }
    fn propriety_bound(&self) -> Option<f64> {
        self.as_family().propriety_bound()
    }
    fn log_numerator(&self, delta: f64) -> Result<f64> {
        self.as_family().log_numerator(delta)
    }
    fn log_scale_factor(&self, delta: f64) -> Result<f64> {
        self.as_family().log_scale_factor(delta)
    }
    fn log_npp_ratio(&self, delta: f64) -> Result<f64> {
        self.as_family().log_npp_ratio(delta)
    }
    fn conditional(&self, delta: f64) -> Result<ConditionalPosterior> {
        self.as_family().conditional(delta)
    }
    fn powered_prior(&self, delta: f64) -> Result<ConditionalPosterior> {
        self.as_family().powered_prior(delta)
    }
    fn historical_log_likelihood(&self, theta: &[f64]) -> f64 {
        self.as_family().historical_log_likelihood(theta)
    }
}

pub(crate) fn check_unit(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::domain(format!("delta must lie in [0, 1], got {delta}")))
    }
}

/// Admissible `δ` for the normalized power prior of `family`.
pub fn check_npp_delta<F: PowerPriorFamily + ?Sized>(family: &F, delta: f64) -> Result<()> {
    check_unit(delta)?;
    match family.propriety_bound() {
        Some(delta_min) if delta <= delta_min => Err(Error::Propriety { delta, delta_min }),
        _ => Ok(()),
    }
}

/// Unnormalized log marginal posterior density of `δ` under the normalized power prior.
pub fn npp_log_kernel<F: PowerPriorFamily + ?Sized>(family: &F, dprior: &DeltaPrior, delta: f64) -> Result<f64> {
    check_npp_delta(family, delta)?;
    Ok(dprior.log_density(delta) + family.log_npp_ratio(delta)?)
}

pub fn log_marginal_delta_binomial(
    hist: &BinomialData,
    cur: &BinomialData,
    prior: &BetaPrior,
    dprior: &DeltaPrior,
    delta: f64,
) -> Result<f64> {
    npp_log_kernel(&BinomialNpp::new(*hist, *cur, *prior)?, dprior, delta)
}

pub fn log_marginal_delta_multinomial(
    hist: &MultinomialData,
    cur: &MultinomialData,
    prior: &DirichletPrior,
    dprior: &DeltaPrior,
    delta: f64,
) -> Result<f64> {
    npp_log_kernel(&MultinomialNpp::new(hist.clone(), cur.clone(), prior.clone())?, dprior, delta)
}

pub fn log_marginal_delta_normal(
    hist: &NormalLinearData,
    cur: &NormalLinearData,
    prior: &NormalLinearPrior,
    dprior: &DeltaPrior,
    delta: f64,
) -> Result<f64> {
    npp_log_kernel(&NormalLinearNpp::new(hist.clone(), cur.clone(), prior.clone())?, dprior, delta)
}

/// Marginal posterior of `δ` under the normalized power prior.
pub fn delta_posterior<F: PowerPriorFamily + ?Sized>(family: &F, dprior: &DeltaPrior) -> Result<DeltaPosterior> {
    delta_posterior_with_rule(family, dprior, &DeltaPosterior::default_rule())
}

/// [`delta_posterior`] tabulated on the nodes of `rule`.
pub fn delta_posterior_with_rule<F: PowerPriorFamily + ?Sized>(
    family: &F,
    dprior: &DeltaPrior,
    rule: &QuadratureRule,
) -> Result<DeltaPosterior> {
    dprior.validate()?;
    if let Some(delta0) = dprior.fixed_value() {
        family.conditional(delta0)?;
        return Ok(DeltaPosterior::fixed(delta0));
    }
    let lo = family.propriety_bound().unwrap_or(0.0);
    if lo >= 1.0 {
        return Err(Error::Propriety { delta: 1.0, delta_min: lo });
    }
    DeltaPosterior::with_rule(|d| npp_log_kernel(family, dprior, d), lo, 1.0, lo > 0.0, rule)
}

/// Composition draws of `(θ, δ)` under the normalized power prior.
pub fn sample_posterior<F: PowerPriorFamily + ?Sized>(
    family: &F,
    dprior: &DeltaPrior,
    draws: usize,
    stream: &RngStream,
) -> Result<Samples> {
    let post = delta_posterior(family, dprior)?;
    sample_joint(family, &post, draws, stream)
}

/// Central-difference slopes of a log density at `points` equispaced interior
/// locations of `[lo, hi]`.
pub fn numeric_log_slopes(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    let width = hi - lo;
    let h = 1e-5 * width;
    (1..=points)
        .map(|i| {
            // Stay h away from both ends so every stencil is inside the domain.
            let x = lo + h + (width - 2.0 * h) * (i as f64 - 0.5) / points as f64;
            let slope = (f(x + h * 0.5)? - f(x - h * 0.5)?) / h;
            Ok((x, slope))
        })
        .collect()
}
