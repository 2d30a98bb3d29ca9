use super::{check_unit, ConditionalPosterior, PowerPriorFamily};
use crate::error::Result;
use crate::models::{BetaPrior, BinomialData};
use crate::numkit::ln_beta;

/// Bernoulli outcomes with a Beta initial prior on the success probability.
///
/// The likelihood is the product of Bernoulli densities, `p^y (1−p)^{n−y}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinomialNpp {
    pub historical: BinomialData,
    pub current: BinomialData,
    pub prior: BetaPrior,
}

impl BinomialNpp {
    pub fn new(historical: BinomialData, current: BinomialData, prior: BetaPrior) -> Result<Self> {
        prior.validate()?;
        Ok(Self { historical, current, prior })
    }

    /// Beta parameters of the powered prior `L(p|D₀)^δ π₀(p)`.
    fn powered(&self, delta: f64) -> (f64, f64) {
        let h = &self.historical;
        (delta * h.y as f64 + self.prior.alpha, delta * h.failures() as f64 + self.prior.beta)
    }

    fn updated(&self, delta: f64) -> (f64, f64) {
        let (a, b) = self.powered(delta);
        (a + self.current.y as f64, b + self.current.failures() as f64)
    }
}

impl PowerPriorFamily for BinomialNpp {
    fn family(&self) -> &'static str {
        "binomial"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["p".into()]
    }

    fn historical_size(&self) -> u64 {
        self.historical.n
    }

    fn log_numerator(&self, delta: f64) -> Result<f64> {
        check_unit(delta)?;
        let (a, b) = self.updated(delta);
        Ok(ln_beta(a, b) - ln_beta(self.prior.alpha, self.prior.beta))
    }

    fn log_scale_factor(&self, delta: f64) -> Result<f64> {
        check_unit(delta)?;
        let (a, b) = self.powered(delta);
        Ok(ln_beta(a, b) - ln_beta(self.prior.alpha, self.prior.beta))
    }

    fn log_npp_ratio(&self, delta: f64) -> Result<f64> {
        check_unit(delta)?;
        let (a0, b0) = self.powered(delta);
        let (a, b) = self.updated(delta);
        Ok(ln_beta(a, b) - ln_beta(a0, b0))
    }

    fn conditional(&self, delta: f64) -> Result<ConditionalPosterior> {
        check_unit(delta)?;
        let (a, b) = self.updated(delta);
        Ok(ConditionalPosterior::Beta { a, b })
    }

    fn powered_prior(&self, delta: f64) -> Result<ConditionalPosterior> {
        check_unit(delta)?;
        let (a, b) = self.powered(delta);
        Ok(ConditionalPosterior::Beta { a, b })
    }

    fn historical_log_likelihood(&self, theta: &[f64]) -> f64 {
        let p = theta[0];
        let h = &self.historical;
        xlogy(h.y as f64, p) + xlogy(h.failures() as f64, 1.0 - p)
    }
}

/// `x ln y` with the convention `0 ln 0 = 0`.
pub(crate) fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

