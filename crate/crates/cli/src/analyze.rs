//! `npp analyze`: one posterior analysis of a (historical, current) dataset.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use npp_core::jpp::LikelihoodForm;
use npp_core::models::{BetaPrior, ConjugatePrior, DataPair, Dataset, DeltaPrior, DirichletPrior, NormalLinearPrior};
use npp_core::npp::{ConjugateModel, PowerPriorFamily};
use npp_core::numkit::{mean_and_sd, sorted_copy, RngStream};
use npp_core::sampler::{run_mh_within_gibbs, LogCSource, McmcConfig, NppConditionals};
use npp_core::scalefactor::LogCInterpolant;
use npp_studies::method::{analyze, DeltaSummary, Method, ParameterSummary, PosteriorReport};
use npp_studies::table::Table;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome};
use crate::io::{self, Format};
use crate::DEFAULT_SEED;

pub const DEFAULT_DRAWS: usize = 100_000;
const MIN_DRAWS: usize = 100;

/// Everything needed to repeat an analysis; echoed into its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub data: Dataset,
    pub prior: ConjugatePrior,
    pub method: Method,
    pub delta_prior: DeltaPrior,
    pub draws: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerConfig {
    /// Tabulated `δ` posterior plus independent composition draws.
    #[default]
    Exact,
    /// Metropolis-Hastings within Gibbs over `(θ, δ)`; `draws` is ignored.
    Mcmc {
        iterations: usize,
        burn_in: usize,
        /// Path-sampled `log C(δ)`; the closed form is used when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_c: Option<LogCInterpolant>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodKind {
    Npp,
    Jpp,
    Fixed,
    Pool,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Exact,
    Mcmc,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset JSON: {"family": ..., "current": {...}, "historical": [{...}]}.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Expected family of the dataset (binomial, multinomial, normal_summary, normal_linear or normal).
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<MethodKind>,
    /// Historical likelihood form for `--method jpp`, e.g. bernoulli_product.
    #[arg(long)]
    pub form: Option<String>,
    /// Beta(a, b) prior on δ, written `a,b`.
    #[arg(long, value_name = "A,B")]
    pub delta_prior: Option<String>,
    /// δ for `--method fixed`.
    #[arg(long)]
    pub fixed_delta: Option<f64>,
    /// Initial prior on the model parameters, as inline JSON or a file path.
    #[arg(long)]
    pub prior: Option<String>,
    /// Posterior draws [default: 100000].
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerKind>,
    /// MCMC iterations including burn-in [default: 20000].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// MCMC burn-in [default: 2000].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// `log C(δ)` table written by `npp scale-factor`, for the MCMC sampler.
    #[arg(long)]
    pub log_c: Option<PathBuf>,
    /// Replay an analysis config, or the `config` echo of an earlier report; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// A config file holds either an [`AnalyzeConfig`] or a report echoing one.
fn load_config(path: &std::path::Path) -> Outcome<AnalyzeConfig> {
    let mut value: serde_json::Value = io::read_json(path, "analysis config")?;
    if value_is_report(&value) {
        value = value["config"].take();
    }
    io::parse_json(&value.to_string(), "analysis config")
}

fn value_is_report(value: &serde_json::Value) -> bool {
    value.get("parameters").is_some() && value.get("delta").is_some()
}

fn default_prior(pair: &DataPair) -> ConjugatePrior {
    match pair {
        DataPair::Binomial { .. } => ConjugatePrior::Beta(BetaPrior::default()),
        DataPair::Multinomial { current, .. } => ConjugatePrior::Dirichlet(DirichletPrior::symmetric(current.k(), 1.0)),
        DataPair::Normal { .. } => ConjugatePrior::NormalLinear(NormalLinearPrior::flat(1.0)),
    }
}

fn dataset_family(data: &Dataset) -> &'static str {
    match data {
        Dataset::Binomial { .. } => "binomial",
        Dataset::Multinomial { .. } => "multinomial",
        Dataset::NormalSummary { .. } => "normal_summary",
        Dataset::NormalLinear { .. } => "normal_linear",
    }
}

fn parse_form(text: &str) -> Outcome<LikelihoodForm> {
    serde_json::from_value(serde_json::json!({ "form": text })).map_err(|_| {
        Failure::config(format!(
            "unknown likelihood form `{text}` (expected bernoulli_product, binomial_density, categorical_product, \
             multinomial_density, normal_raw_product, normal_sufficient_density or normal_scaled)"
        ))
    })
}

fn parse_delta_prior(text: &str) -> Outcome<DeltaPrior> {
    let bad = || Failure::config(format!("--delta-prior expects `a,b` with positive a and b, got `{text}`"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let alpha_delta: f64 = a.trim().parse().map_err(|_| bad())?;
    let beta_delta: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(alpha_delta > 0.0 && beta_delta > 0.0 && alpha_delta.is_finite() && beta_delta.is_finite()) {
        return Err(bad());
    }
    Ok(DeltaPrior::Beta { alpha_delta, beta_delta })
}

fn resolve_method(args: &AnalyzeArgs, base: Option<Method>) -> Outcome<Method> {
    let kind = args.method.or(match (args.fixed_delta, &args.form) {
        (Some(_), _) => Some(MethodKind::Fixed),
        (None, Some(_)) => Some(MethodKind::Jpp),
        (None, None) => None,
    });
    if args.form.is_some() && kind != Some(MethodKind::Jpp) {
        return Err(Failure::config("--form applies to --method jpp only"));
    }
    if args.fixed_delta.is_some() && kind != Some(MethodKind::Fixed) {
        return Err(Failure::config("--fixed-delta applies to --method fixed only"));
    }
    Ok(match kind {
        None => base.unwrap_or(Method::Npp),
        Some(MethodKind::Npp) => Method::Npp,
        Some(MethodKind::Pool) => Method::Pool,
        Some(MethodKind::Discard) => Method::Discard,
        Some(MethodKind::Jpp) => {
            let form = args.form.as_deref().ok_or_else(|| Failure::config("--method jpp needs --form"))?;
            Method::Jpp(parse_form(form)?)
        }
        Some(MethodKind::Fixed) => {
            let delta = args.fixed_delta.ok_or_else(|| Failure::config("--method fixed needs --fixed-delta"))?;
            if !(0.0..=1.0).contains(&delta) {
                return Err(Failure::config(format!("--fixed-delta must lie in [0, 1], got {delta}")));
            }
            Method::Fixed { delta }
        }
    })
}

fn resolve_sampler(args: &AnalyzeArgs, base: Option<SamplerConfig>) -> Outcome<SamplerConfig> {
    let mcmc_flags = args.iterations.is_some() || args.burn_in.is_some() || args.log_c.is_some();
    let base = base.unwrap_or_default();
    let kind = args.sampler.unwrap_or(match base {
        SamplerConfig::Exact if mcmc_flags => SamplerKind::Mcmc,
        SamplerConfig::Exact => SamplerKind::Exact,
        SamplerConfig::Mcmc { .. } => SamplerKind::Mcmc,
    });
    if kind == SamplerKind::Exact {
        if mcmc_flags {
            return Err(Failure::config("--iterations, --burn-in and --log-c apply to --sampler mcmc only"));
        }
        return Ok(SamplerConfig::Exact);
    }
    let defaults = McmcConfig::default();
    let (iterations, burn_in, log_c) = match base {
        SamplerConfig::Mcmc { iterations, burn_in, log_c } => (iterations, burn_in, log_c),
        SamplerConfig::Exact => (defaults.iterations, defaults.burn_in, None),
    };
    let log_c = match &args.log_c {
        Some(path) => Some(LogCInterpolant::from_json(&io::read_text(path)?)?),
        None => log_c,
    };
    Ok(SamplerConfig::Mcmc {
        iterations: args.iterations.unwrap_or(iterations),
        burn_in: args.burn_in.unwrap_or(burn_in),
        log_c,
    })
}

/// Merge flags over an optional replayed config.
pub fn resolve(args: &AnalyzeArgs) -> Outcome<AnalyzeConfig> {
    let base = args.config.as_deref().map(load_config).transpose()?;
    let data = match (&args.data, &base) {
        (Some(path), _) => Dataset::from_json(&io::read_text(path)?)?,
        (None, Some(b)) => b.data.clone(),
        (None, None) => return Err(Failure::config("--data (or --config) is required")),
    };
    if let Some(family) = &args.family {
        let actual = dataset_family(&data);
        let matches = family == actual || (family == "normal" && actual.starts_with("normal"));
        if !matches {
            return Err(Failure::config(format!("--family {family} does not match the dataset family `{actual}`")));
        }
    }
    let pair = data.to_pair()?;
    let prior = match (&args.prior, &base) {
        (Some(text), _) => io::json_arg(text, "prior")?,
        (None, Some(b)) => b.prior.clone(),
        (None, None) => default_prior(&pair),
    };
    let delta_prior = match (&args.delta_prior, &base) {
        (Some(text), _) => parse_delta_prior(text)?,
        (None, Some(b)) => b.delta_prior,
        (None, None) => DeltaPrior::uniform(),
    };
    Ok(AnalyzeConfig {
        method: resolve_method(args, base.as_ref().map(|b| b.method))?,
        sampler: resolve_sampler(args, base.as_ref().map(|b| b.sampler.clone()))?,
        draws: args.draws.or(base.as_ref().map(|b| b.draws)).unwrap_or(DEFAULT_DRAWS),
        seed: args.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(DEFAULT_SEED),
        data,
        prior,
        delta_prior,
    })
}

fn check_compatible(pair: &DataPair, config: &AnalyzeConfig) -> Outcome<()> {
    let prior_ok = matches!(
        (pair, &config.prior),
        (DataPair::Binomial { .. }, ConjugatePrior::Beta(_))
            | (DataPair::Multinomial { .. }, ConjugatePrior::Dirichlet(_))
            | (DataPair::Normal { .. }, ConjugatePrior::NormalLinear(_))
    );
    if !prior_ok {
        return Err(Failure::config(format!("the prior does not fit the {} family", pair.family())));
    }
    if let Method::Jpp(form) = config.method {
        if form.family() != pair.family() {
            return Err(Failure::config(format!(
                "likelihood form {form:?} belongs to the {} family, not {}",
                form.family(),
                pair.family()
            )));
        }
    }
    if config.draws < MIN_DRAWS {
        return Err(Failure::config(format!("at least {MIN_DRAWS} draws are needed, got {}", config.draws)));
    }
    Ok(())
}

/// Mode of a sample by repeated halving onto the densest half.
fn half_sample_mode(sorted: &[f64]) -> f64 {
    let mut s = sorted;
    while s.len() > 3 {
        let h = s.len().div_ceil(2);
        let i = (0..=s.len() - h).min_by(|&a, &b| (s[a + h - 1] - s[a]).total_cmp(&(s[b + h - 1] - s[b]))).unwrap();
        s = &s[i..i + h];
    }
    match s {
        [a, b, c] if b - a < c - b => (a + b) / 2.0,
        [a, b, c] if b - a > c - b => (b + c) / 2.0,
        [_, b, _] => *b,
        [a, b] => (a + b) / 2.0,
        _ => s[0],
    }
}

fn run_mcmc(model: &ConjugateModel, config: &AnalyzeConfig, iterations: usize, burn_in: usize, log_c: &Option<LogCInterpolant>) -> Outcome<PosteriorReport> {
    let delta_prior = match config.method {
        Method::Npp => config.delta_prior,
        Method::Fixed { delta } => DeltaPrior::Fixed { delta0: delta },
        Method::Pool => DeltaPrior::Fixed { delta0: 1.0 },
        Method::Discard => DeltaPrior::Fixed { delta0: 0.0 },
        Method::Jpp(_) => return Err(Failure::config("the MCMC sampler runs the normalized power prior only")),
    };
    let source = log_c.clone().map_or(LogCSource::ClosedForm, LogCSource::Interpolated);
    let conditionals = NppConditionals::new(model, delta_prior, source)?;
    let mcmc = McmcConfig { iterations, burn_in, master_seed: config.seed, ..McmcConfig::default() };
    mcmc.validate()?;
    let chain = run_mh_within_gibbs(&conditionals, &mcmc)?;
    log::info!("MCMC: δ acceptance rate {:.3}, ESS {:?}", chain.acceptance_rate, chain.ess);
    let params = chain.names.len() - 1;
    let parameters = (0..params)
        .map(|j| ParameterSummary::from_draws(&chain.names[j], &chain.draws.column(j)))
        .collect::<npp_core::Result<_>>()?;
    let delta = chain.delta();
    let (mean, sd) = mean_and_sd(&delta);
    let fixed = delta_prior.fixed_value();
    let lower = model.propriety_bound().unwrap_or(0.0);
    Ok(PosteriorReport {
        method: config.method.label(),
        parameters,
        delta: DeltaSummary {
            mean,
            sd,
            mode: fixed.unwrap_or_else(|| half_sample_mode(&sorted_copy(&delta))),
            lower: fixed.unwrap_or(lower),
            upper: fixed.unwrap_or(1.0),
            multimodal: false,
            truncated: fixed.is_none() && lower > 0.0,
            fixed: fixed.is_some(),
        },
        config: serde_json::Value::Null,
        version: String::new(),
    })
}

pub fn run_config(config: &AnalyzeConfig) -> Outcome<PosteriorReport> {
    let pair = config.data.to_pair()?;
    check_compatible(&pair, config)?;
    let model = ConjugateModel::new(&pair, &config.prior)?;
    let mut report = match &config.sampler {
        SamplerConfig::Exact => {
            let a = analyze(&model, config.method, &config.delta_prior, config.draws, &RngStream::new(config.seed, 0))?;
            PosteriorReport::from_analysis(&a)?
        }
        SamplerConfig::Mcmc { iterations, burn_in, log_c } => run_mcmc(&model, config, *iterations, *burn_in, log_c)?,
    };
    report.config = serde_json::to_value(config).expect("configs serialize");
    report.version = env!("CARGO_PKG_VERSION").into();
    Ok(report)
}

fn report_table(report: &PosteriorReport) -> Table {
    let mut t = Table::new(&["name", "mean", "sd", "lower", "upper", "mode"]);
    for p in &report.parameters {
        t.push(vec![p.name.as_str().into(), p.mean.into(), p.sd.into(), p.hpd_lower.into(), p.hpd_upper.into(), "".into()]);
    }
    let d = &report.delta;
    t.push(vec!["delta".into(), d.mean.into(), d.sd.into(), d.lower.into(), d.upper.into(), d.mode.into()]);
    t
}

pub fn run(args: &AnalyzeArgs) -> Outcome<()> {
    let config = resolve(args)?;
    let report = run_config(&config)?;
    log::info!("{}: δ mean {:.4}, mode {:.4}", report.method, report.delta.mean, report.delta.mode);
    let text = match args.format {
        Format::Json => io::to_json(&report),
        Format::Csv => report_table(&report).to_csv(),
    };
    io::emit(args.out.as_deref(), &text)
}
