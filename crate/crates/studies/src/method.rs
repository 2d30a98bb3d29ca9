//! Borrowing methods and posterior summaries shared by every study.

use npp_core::jpp::{jpp_delta_posterior_with_rule, LikelihoodForm};
use npp_core::models::DeltaPrior;
use npp_core::npp::{delta_posterior_with_rule, sample_joint, ConjugateModel, DeltaPosterior, PowerPriorFamily, WithLikelihoodConstant};
use npp_core::numkit::{hpd_interval, mean_and_sd, sorted_copy, QuadratureRule, RngStream, Samples};
use npp_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// How much of the historical data enters the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    /// Normalized power prior with a random `δ`.
    Npp,
    /// Joint power prior with the historical likelihood in the given form.
    Jpp(LikelihoodForm),
    /// Power prior with `δ` fixed.
    Fixed { delta: f64 },
    /// Historical and current data pooled (`δ = 1`).
    Pool,
    /// Historical data ignored (`δ = 0`).
    Discard,
}

impl Method {
    /// Short column label; JPP forms are numbered per family, raw product first.
    pub fn label(&self) -> String {
        match self {
            Method::Npp => "npp".into(),
            Method::Pool => "pool".into(),
            Method::Discard => "discard".into(),
            Method::Fixed { delta } => format!("fixed_{delta}"),
            Method::Jpp(form) => match form {
                LikelihoodForm::BernoulliProduct
                | LikelihoodForm::CategoricalProduct
                | LikelihoodForm::NormalRawProduct => "jpp1".into(),
                LikelihoodForm::BinomialDensity
                | LikelihoodForm::MultinomialDensity
                | LikelihoodForm::NormalSufficientDensity => "jpp2".into(),
                LikelihoodForm::NormalScaled { .. } => "jpp3".into(),
            },
        }
    }

    /// Parse `npp`, `pool`, `discard`, `fixed_<δ>`, or `jpp1`/`jpp2`/`jpp3` for `family`.
    pub fn parse(text: &str, family: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method `{text}` for the {family} family"));
        Ok(match text {
            "npp" => Method::Npp,
            "pool" => Method::Pool,
            "discard" => Method::Discard,
            _ if text.starts_with("fixed_") => {
                let delta: f64 = text["fixed_".len()..].parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&delta) {
                    return Err(bad());
                }
                Method::Fixed { delta }
            }
            "jpp1" | "jpp2" | "jpp3" => Method::Jpp(match (family, text) {
                ("binomial", "jpp1") => LikelihoodForm::BernoulliProduct,
                ("binomial", "jpp2") => LikelihoodForm::BinomialDensity,
                ("multinomial", "jpp1") => LikelihoodForm::CategoricalProduct,
                ("multinomial", "jpp2") => LikelihoodForm::MultinomialDensity,
                ("normal", "jpp1") => LikelihoodForm::NormalRawProduct,
                ("normal", "jpp2") => LikelihoodForm::NormalSufficientDensity,
                ("normal", "jpp3") => LikelihoodForm::normal_scaled_default(),
                _ => return Err(bad()),
            }),
            _ => return Err(bad()),
        })
    }

    /// Marginal posterior of `δ` under this method.
    pub fn delta_posterior(&self, model: &ConjugateModel, dprior: &DeltaPrior, rule: &QuadratureRule) -> Result<DeltaPosterior> {
        let fixed = |delta: f64| {
            model.conditional(delta)?;
            Ok(DeltaPosterior::fixed(delta))
        };
        match *self {
            Method::Npp => delta_posterior_with_rule(model, dprior, rule),
            Method::Jpp(form) => {
                let scaled = WithLikelihoodConstant::new(model, form.log_constant(model)?);
                jpp_delta_posterior_with_rule(&scaled, dprior, rule)
            }
            Method::Fixed { delta } => fixed(delta),
            Method::Pool => fixed(1.0),
            Method::Discard => fixed(0.0),
        }
    }
}

/// `E[θ]` as the `δ`-posterior average of the conditional posterior means.
pub fn posterior_mean(model: &ConjugateModel, post: &DeltaPosterior) -> Result<Vec<f64>> {
    if post.fixed {
        return Ok(model.conditional(post.mode)?.mean());
    }
    let mut acc = vec![0.0; model.param_names().len()];
    for (&d, &m) in post.grid.iter().zip(&post.masses) {
        if m == 0.0 {
            continue;
        }
        for (a, v) in acc.iter_mut().zip(model.conditional(d)?.mean()) {
            *a += m * v;
        }
    }
    Ok(acc)
}

/// `δ` posterior plus composition draws of `(θ, δ)`.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub method: Method,
    pub names: Vec<String>,
    pub delta: DeltaPosterior,
    pub samples: Samples,
}

pub fn analyze(
    model: &ConjugateModel,
    method: Method,
    dprior: &DeltaPrior,
    draws: usize,
    stream: &RngStream,
) -> Result<Analysis> {
    let delta = method.delta_posterior(model, dprior, &DeltaPosterior::default_rule())?;
    let samples = sample_joint(model, &delta, draws, stream)?;
    let mut names = model.param_names();
    names.push("delta".into());
    Ok(Analysis { method, names, delta, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub hpd_lower: f64,
    pub hpd_upper: f64,
}

impl ParameterSummary {
    /// Mean, sd and 95% HPD interval of `values`.
    pub fn from_draws(name: &str, values: &[f64]) -> Result<Self> {
        let (mean, sd) = mean_and_sd(values);
        let (hpd_lower, hpd_upper) = hpd_interval(&sorted_copy(values), 0.95)?;
        Ok(Self { name: name.into(), mean, sd, hpd_lower, hpd_upper })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub mean: f64,
    pub sd: f64,
    pub mode: f64,
    pub lower: f64,
    pub upper: f64,
    /// The mode search found ties.
    pub multimodal: bool,
    /// The domain starts at a propriety bound above 0.
    pub truncated: bool,
    pub fixed: bool,
}

impl From<&DeltaPosterior> for DeltaSummary {
    fn from(p: &DeltaPosterior) -> Self {
        Self {
            mean: p.mean,
            sd: p.sd(),
            mode: p.mode,
            lower: p.lower,
            upper: p.upper,
            multimodal: p.multimodal,
            truncated: p.truncated,
            fixed: p.fixed,
        }
    }
}

/// Posterior summaries of one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub method: String,
    pub parameters: Vec<ParameterSummary>,
    pub delta: DeltaSummary,
    /// Settings that reproduce the run, filled in by the caller.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
    #[serde(default)]
    pub version: String,
}

impl PosteriorReport {
    /// Summaries of the model parameters (not `δ`, which is tabulated exactly).
    pub fn from_analysis(a: &Analysis) -> Result<Self> {
        let params = a.names.len() - 1;
        let parameters = (0..params)
            .map(|j| ParameterSummary::from_draws(&a.names[j], &a.samples.column(j)))
            .collect::<Result<_>>()?;
        Ok(Self {
            method: a.method.label(),
            parameters,
            delta: DeltaSummary::from(&a.delta),
            config: serde_json::Value::Null,
            version: env!("CARGO_PKG_VERSION").into(),
        })
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}
