use super::binomial::xlogy;
use super::{check_unit, ConditionalPosterior, PowerPriorFamily};
use crate::error::{Error, Result};
use crate::models::{DirichletPrior, MultinomialData};
use crate::numkit::ln_gamma;

/// Multinomial counts with a Dirichlet initial prior on the cell probabilities.
///
/// The likelihood is the categorical product `Π θᵢ^{yᵢ}` (no multinomial coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialNpp {
    pub historical: MultinomialData,
    pub current: MultinomialData,
    pub prior: DirichletPrior,
}

/// `ln B(a) = Σ ln Γ(aᵢ) − ln Γ(Σ aᵢ)`.
fn ln_multivariate_beta(a: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut total) = (0.0, 0.0);
    for v in a {
        sum += ln_gamma(v);
        total += v;
    }
    sum - ln_gamma(total)
}

impl MultinomialNpp {
    pub fn new(historical: MultinomialData, current: MultinomialData, prior: DirichletPrior) -> Result<Self> {
        prior.validate()?;
        let k = prior.alpha.len();
        if historical.k() != k || current.k() != k {
            return Err(Error::domain(format!(
                "cell counts disagree: historical {}, current {}, prior {k}",
                historical.k(),
                current.k()
            )));
        }
        Ok(Self { historical, current, prior })
    }

    fn powered(&self, delta: f64) -> impl Iterator<Item = f64> + '_ {
        self.historical.counts.iter().zip(&self.prior.alpha).map(move |(&y0, &a)| delta * y0 as f64 + a)
    }

    fn updated(&self, delta: f64) -> impl Iterator<Item = f64> + '_ {
        self.powered(delta).zip(&self.current.counts).map(|(a, &y)| a + y as f64)
    }

    fn ln_prior_beta(&self) -> f64 {
        ln_multivariate_beta(self.prior.alpha.iter().copied())
    }
}

impl PowerPriorFamily for MultinomialNpp {
    fn family(&self) -> &'static str {
        "multinomial"
    }

    fn param_names(&self) -> Vec<String> {
        (1..=self.prior.alpha.len()).map(|i| format!("theta{i}")).collect()
    }

    fn historical_size(&self) -> u64 {
        self.historical.total()
    }

    fn log_numerator(&self, delta: f64) -> Result<f64> {
        check_unit(delta)?;
        Ok(ln_multivariate_beta(self.updated(delta)) - self.ln_prior_beta())
    }

    fn log_scale_factor(&self, delta: f64) -> Result<f64> {
        check_unit(delta)?;
        Ok(ln_multivariate_beta(self.powered(delta)) - self.ln_prior_beta())
    }

    fn log_npp_ratio(&self, delta: f64) -> Result<f64> {
        check_unit(delta)?;
        Ok(ln_multivariate_beta(self.updated(delta)) - ln_multivariate_beta(self.powered(delta)))
    }

    fn conditional(&self, delta: f64) -> Result<ConditionalPosterior> {
        check_unit(delta)?;
        Ok(ConditionalPosterior::Dirichlet { alpha: self.updated(delta).collect() })
    }

    fn powered_prior(&self, delta: f64) -> Result<ConditionalPosterior> {
        check_unit(delta)?;
        Ok(ConditionalPosterior::Dirichlet { alpha: self.powered(delta).collect() })
    }

    fn historical_log_likelihood(&self, theta: &[f64]) -> f64 {
        self.historical.counts.iter().zip(theta).map(|(&y, &t)| xlogy(y as f64, t)).sum()
    }
}
