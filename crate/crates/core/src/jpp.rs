//! Joint power prior comparators.
//!
//! Without the normalizing factor `C(δ)`, the marginal posterior of `δ` is
//! `π₀(δ) ∫ L(θ|D) L(θ|D₀)^δ π₀(θ) dθ`, which changes when the likelihood is
//! multiplied by a constant: a factor `c` on `L(θ|D₀)` tilts it by `c^δ`. The
//! [`LikelihoodForm`] fixes that constant explicitly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{BetaPrior, BinomialData, DeltaPrior, MultinomialData, NormalLinearData};
use crate::npp::{
    check_unit, numeric_log_slopes, BinomialNpp, ConditionalPosterior, ConjugateModel, DeltaPosterior,
    PowerPriorFamily, WithLikelihoodConstant,
};
use crate::numkit::{ln_gamma, PanelSpacing, QuadratureRule};

/// Constant placed in front of the historical likelihood kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum LikelihoodForm {
    /// `Π p^{xᵢ}(1−p)^{1−xᵢ}`.
    BernoulliProduct,
    /// `C(n₀, y₀) p^{y₀}(1−p)^{n₀−y₀}`.
    BinomialDensity,
    /// `Π θᵢ^{yᵢ}`.
    CategoricalProduct,
    /// Full multinomial likelihood including `n₀!/Π y₀ᵢ!`.
    MultinomialDensity,
    /// Product of normal densities, `(2πσ²)^{−n₀/2} exp(…)`.
    NormalRawProduct,
    /// Joint density of the sufficient statistics `(x̄₀, s₀²)` (intercept-only model).
    NormalSufficientDensity,
    /// Raw product multiplied by `exp(extra_log_constant)`, by default `(2π)^{n₀/2} e^{200}`.
    NormalScaled {
        #[serde(default)]
        extra_log_constant: Option<f64>,
    },
}

impl LikelihoodForm {
    /// Raw product scaled by `(2π)^{n₀/2} e^{200}`.
    pub fn normal_scaled_default() -> Self {
        LikelihoodForm::NormalScaled { extra_log_constant: None }
    }

    pub fn family(&self) -> &'static str {
        match self {
            LikelihoodForm::BernoulliProduct | LikelihoodForm::BinomialDensity => "binomial",
            LikelihoodForm::CategoricalProduct | LikelihoodForm::MultinomialDensity => "multinomial",
            _ => "normal",
        }
    }

    pub fn binomial_log_constant(&self, hist: &BinomialData) -> Result<f64> {
        match self {
            LikelihoodForm::BernoulliProduct => Ok(0.0),
            LikelihoodForm::BinomialDensity => {
                let (n, y) = (hist.n as f64, hist.y as f64);
                Ok(ln_gamma(n + 1.0) - ln_gamma(y + 1.0) - ln_gamma(n - y + 1.0))
            }
            other => Err(other.mismatch("binomial")),
        }
    }

    pub fn multinomial_log_constant(&self, hist: &MultinomialData) -> Result<f64> {
        match self {
            LikelihoodForm::CategoricalProduct => Ok(0.0),
            LikelihoodForm::MultinomialDensity => Ok(ln_gamma(hist.total() as f64 + 1.0)
                - hist.counts.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>()),
            other => Err(other.mismatch("multinomial")),
        }
    }

    /// Relative to the kernel `σ^{−n₀} exp(−(S₀ + (β−β̂₀)'X₀'X₀(β−β̂₀))/(2σ²))`.
    pub fn normal_log_constant(&self, hist: &NormalLinearData) -> Result<f64> {
        let n0 = hist.n as f64;
        let raw = -n0 / 2.0 * (2.0 * PI).ln();
        match *self {
            LikelihoodForm::NormalRawProduct => Ok(raw),
            LikelihoodForm::NormalScaled { extra_log_constant } => {
                let extra = extra_log_constant.unwrap_or(n0 / 2.0 * (2.0 * PI).ln() + 200.0);
                if !extra.is_finite() {
                    return Err(Error::Config(format!("scaled-form constant must be finite, got {extra}")));
                }
                Ok(raw + extra)
            }
            LikelihoodForm::NormalSufficientDensity => {
                if hist.k() != 1 || hist.n < 2 {
                    return Err(Error::Config(
                        "the sufficient-statistic density form needs an intercept-only model with n0 >= 2".into(),
                    ));
                }
                Ok(log_c2(hist.n, (hist.s / (n0 - 1.0)).sqrt()))
            }
            other => Err(other.mismatch("normal")),
        }
    }

    /// Per-unit-δ log constant for the historical data of `model`.
    pub fn log_constant(&self, model: &ConjugateModel) -> Result<f64> {
        match model {
            ConjugateModel::Binomial(m) => self.binomial_log_constant(&m.historical),
            ConjugateModel::Multinomial(m) => self.multinomial_log_constant(&m.historical),
            ConjugateModel::Normal(m) => self.normal_log_constant(&m.historical),
        }
    }

    fn mismatch(&self, family: &str) -> Error {
        Error::Config(format!("likelihood form {self:?} does not apply to the {family} family"))
    }
}

/// `log c₂` of the density of `(x̄₀, s₀²)` for `n₀` normal observations with sample sd `s₀`:
/// `(n₀−3) ln s₀ + ((n₀−1)/2) ln((n₀−1)/2) + ½ ln n₀ − ½ ln 2π − ln Γ((n₀−1)/2)`.
pub fn log_c2(n0: u64, s0: f64) -> f64 {
    let n0 = n0 as f64;
    let h = (n0 - 1.0) / 2.0;
    (n0 - 3.0) * s0.ln() + h * h.ln() + 0.5 * n0.ln() - 0.5 * (2.0 * PI).ln() - ln_gamma(h)
}

/// Unnormalized log marginal posterior density of `δ` under the joint power prior.
pub fn jpp_log_kernel<F: PowerPriorFamily + ?Sized>(family: &F, dprior: &DeltaPrior, delta: f64) -> Result<f64> {
    check_unit(delta)?;
    Ok(dprior.log_density(delta) + family.log_numerator(delta)?)
}

/// `jpp_log_kernel` for `model` with its historical likelihood in the given form.
pub fn jpp_log_marginal_delta(
    model: &ConjugateModel,
    form: &LikelihoodForm,
    dprior: &DeltaPrior,
    delta: f64,
) -> Result<f64> {
    let scaled = WithLikelihoodConstant::new(model, form.log_constant(model)?);
    jpp_log_kernel(&scaled, dprior, delta)
}

/// Marginal posterior of `δ` under the joint power prior on `[0, 1]`.
pub fn jpp_delta_posterior<F: PowerPriorFamily + ?Sized>(family: &F, dprior: &DeltaPrior) -> Result<DeltaPosterior> {
    jpp_delta_posterior_with_rule(family, dprior, &DeltaPosterior::default_rule())
}

/// [`jpp_delta_posterior`] tabulated on the nodes of `rule`.
pub fn jpp_delta_posterior_with_rule<F: PowerPriorFamily + ?Sized>(
    family: &F,
    dprior: &DeltaPrior,
    rule: &QuadratureRule,
) -> Result<DeltaPosterior> {
    dprior.validate()?;
    if let Some(delta0) = dprior.fixed_value() {
        family.conditional(delta0)?;
        return Ok(DeltaPosterior::fixed(delta0));
    }
    DeltaPosterior::with_rule(|d| jpp_log_kernel(family, dprior, d), 0.0, 1.0, false, rule)
}

/// Outcome of [`compute_k0`].
#[derive(Debug, Clone, PartialEq)]
pub struct K0Report {
    pub k0: f64,
    /// `max_δ E[log f(D₀|p) | D₀, D, δ]` over the search grid.
    pub max_expected_log_lik: f64,
    pub argmax_delta: f64,
    /// Largest numeric slope of the JPP log density of `δ` with `L = k₀ f`.
    pub max_slope: f64,
    /// Mode of that JPP posterior under a uniform prior on `δ`.
    pub mode: f64,
}

impl K0Report {
    pub fn mode_at_zero(&self) -> bool {
        self.max_slope <= 1e-6 && self.mode == 0.0
    }
}

/// Likelihood constant that forces the Bernoulli JPP posterior of `δ` to peak at 0.
///
/// With `L = k f`, the derivative of the log JPP density is
/// `R(δ) + n₀ ln k`, where `R(δ)` is the posterior mean of `log f(D₀|p)` given `δ`;
/// `k₀ = exp(−max R / n₀)` makes it nonpositive throughout.
pub fn compute_k0(hist: &BinomialData, cur: &BinomialData, prior: &BetaPrior, grid_points: usize) -> Result<K0Report> {
    if hist.n == 0 {
        return Err(Error::domain("historical data are empty"));
    }
    if grid_points < 2 {
        return Err(Error::domain("the delta grid needs at least two points"));
    }
    let fam = BinomialNpp::new(*hist, *cur, *prior)?;
    let rule = QuadratureRule::composite(256, 8, PanelSpacing::Uniform)?;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..grid_points {
        let delta = i as f64 / (grid_points - 1) as f64;
        let r = expected_log_lik(&fam, delta, &rule)?;
        if !r.is_finite() {
            return Err(Error::Evaluation { node: delta, reason: "expected log-likelihood is not finite".into() });
        }
        if r > best.0 {
            best = (r, delta);
        }
    }
    let n0 = hist.n as f64;
    let log_k0 = -best.0 / n0;
    let tilted = WithLikelihoodConstant::new(&fam, n0 * log_k0);
    let uniform = DeltaPrior::uniform();
    let slopes = numeric_log_slopes(|d| jpp_log_kernel(&tilted, &uniform, d), 0.0, 1.0, 200)?;
    let max_slope = slopes.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let mode = jpp_delta_posterior(&tilted, &uniform)?.mode;
    Ok(K0Report { k0: log_k0.exp(), max_expected_log_lik: best.0, argmax_delta: best.1, max_slope, mode })
}

/// `∫ log f(D₀|p) π(p | D₀, D, δ) dp` by quadrature in `t = logit p`, where the
/// Beta density has no endpoint singularities.
fn expected_log_lik(fam: &BinomialNpp, delta: f64, rule: &QuadratureRule) -> Result<f64> {
    let ConditionalPosterior::Beta { a, b } = fam.conditional(delta)? else { unreachable!("binomial family") };
    let ln_norm = crate::numkit::ln_beta(a, b);
    let centre = (a / b).ln();
    let spread = (1.0 / a + 1.0 / b).sqrt();
    let lo = centre - (40.0 * spread).max(50.0 / a);
    let hi = centre + (40.0 * spread).max(50.0 / b);
    let (y0, f0) = (fam.historical.y as f64, fam.historical.failures() as f64);
    let mut total = 0.0;
    for (&u, &w) in rule.nodes().iter().zip(rule.weights()) {
        let t = lo + (hi - lo) * u;
        // ln p and ln(1 − p) without cancellation.
        let ln_p = -(-t).exp().ln_1p();
        let ln_q = -t.exp().ln_1p();
        if !ln_p.is_finite() || !ln_q.is_finite() {
            continue;
        }
        let density = (a * ln_p + b * ln_q - ln_norm).exp();
        total += w * density * (y0 * ln_p + f0 * ln_q);
    }
    Ok(total * (hi - lo))
}
