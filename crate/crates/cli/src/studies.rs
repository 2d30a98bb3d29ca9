//! `npp scale-factor`, `npp simulate`, `npp sweep` and `npp case`.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use npp_core::models::{ConjugatePrior, Dataset};
use npp_core::npp::{ConjugateModel, PowerPriorFamily};
use npp_core::numkit::RngStream;
use npp_core::scalefactor::{
    design_knots, equispaced, estimate_log_c, max_gap_to_closed_form, ConjugatePoweredSampler, IntegrationRule,
    LogCInterpolant, DEFAULT_DRAWS_PER_KNOT, DEFAULT_KNOT_COUNT, DEFAULT_KNOT_EXPONENT,
};
use npp_studies::cases::{run_case, CaseSettings, CaseStudyResult, ProbabilityPrior, Study};
use npp_studies::compare::{check, check_sensitivity, CellCheck, ReferenceValues};
use npp_studies::rmse::{self, RmseSpec};
use npp_studies::sweep::{self, SweepSpec};
use npp_studies::table::Table;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome};
use crate::io::{self, Format};
use crate::DEFAULT_SEED;

fn table_text(table: &Table, format: Format) -> String {
    match format {
        Format::Csv => table.to_csv(),
        Format::Json => io::to_json(table),
    }
}

// ---------------------------------------------------------------- scale-factor

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleFactorConfig {
    pub data: Dataset,
    #[serde(default)]
    pub prior: Option<ConjugatePrior>,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_draws_per_knot")]
    pub draws_per_knot: usize,
    #[serde(default)]
    pub rule: IntegrationRule,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Equispaced points at which the estimate is compared with the closed form.
    #[serde(default = "default_queries")]
    pub queries: usize,
}

fn default_knots() -> usize {
    DEFAULT_KNOT_COUNT
}
fn default_exponent() -> f64 {
    DEFAULT_KNOT_EXPONENT
}
fn default_draws_per_knot() -> usize {
    DEFAULT_DRAWS_PER_KNOT
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_queries() -> usize {
    21
}

#[derive(Debug, Args)]
pub struct ScaleFactorArgs {
    /// Scale-factor config JSON (dataset, prior, knots, draws_per_knot, rule, seed, queries).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset JSON, instead of or overriding the config's.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Initial prior as inline JSON or a file path.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub knots: Option<usize>,
    /// Draws per knot.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the `log C(δ)` table (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn resolve_scale_factor(args: &ScaleFactorArgs) -> Outcome<ScaleFactorConfig> {
    let mut config = match (&args.config, &args.data) {
        (Some(path), _) => io::read_json(path, "scale-factor config")?,
        (None, Some(path)) => ScaleFactorConfig {
            data: Dataset::from_json(&io::read_text(path)?)?,
            prior: None,
            knots: default_knots(),
            exponent: default_exponent(),
            draws_per_knot: default_draws_per_knot(),
            rule: IntegrationRule::default(),
            seed: DEFAULT_SEED,
            queries: default_queries(),
        },
        (None, None) => return Err(Failure::config("--config or --data is required")),
    };
    if let (Some(_), Some(path)) = (&args.config, &args.data) {
        config.data = Dataset::from_json(&io::read_text(path)?)?;
    }
    if let Some(text) = &args.prior {
        config.prior = Some(io::json_arg(text, "prior")?);
    }
    config.knots = args.knots.unwrap_or(config.knots);
    config.draws_per_knot = args.draws.unwrap_or(config.draws_per_knot);
    config.seed = args.seed.unwrap_or(config.seed);
    if config.queries < 2 {
        return Err(Failure::config("at least 2 query points are needed"));
    }
    Ok(config)
}

pub struct ScaleFactorRun {
    pub table: LogCInterpolant,
    pub max_gap: f64,
    pub queries: Vec<f64>,
}

pub fn run_scale_factor_config(config: &ScaleFactorConfig) -> Outcome<ScaleFactorRun> {
    let pair = config.data.to_pair()?;
    let prior = match &config.prior {
        Some(p) => p.clone(),
        None => match &pair {
            npp_core::models::DataPair::Binomial { .. } => ConjugatePrior::Beta(Default::default()),
            npp_core::models::DataPair::Multinomial { current, .. } => {
                ConjugatePrior::Dirichlet(npp_core::models::DirichletPrior::symmetric(current.k(), 1.0))
            }
            npp_core::models::DataPair::Normal { .. } => {
                return Err(Failure::config(
                    "the normal family needs an explicit proper prior for path sampling, e.g. \
                     {\"kind\":\"normal_linear\",\"a\":2,\"b\":1,\"mu0\":[0],\"r\":[[1]]}",
                ))
            }
        },
    };
    let model = ConjugateModel::new(&pair, &prior).map_err(|e| match e {
        npp_core::Error::Domain(m) => Failure::config(m),
        other => other.into(),
    })?;
    let grid = design_knots(config.knots, config.exponent, &[])?;
    let stream = RngStream::new(config.seed, 0);
    let table = estimate_log_c(&ConjugatePoweredSampler(&model), &grid, config.draws_per_knot, config.rule, &stream)?;
    let lo = if table.anchor == 0.0 { 0.0 } else { table.knots[0].max(model.propriety_bound().unwrap_or(0.0)) };
    let queries = equispaced(lo, 1.0, config.queries);
    let max_gap = max_gap_to_closed_form(&table, &model, &queries)?;
    Ok(ScaleFactorRun { table, max_gap, queries })
}

pub fn scale_factor(args: &ScaleFactorArgs) -> Outcome<()> {
    let config = resolve_scale_factor(args)?;
    let run = run_scale_factor_config(&config)?;
    eprintln!(
        "log C(δ) at {} knots; max |estimate − closed form| = {:.4} over {} points on [{}, 1]",
        run.table.knots.len(),
        run.max_gap,
        run.queries.len(),
        run.queries[0]
    );
    io::emit(args.out.as_deref(), &run.table.to_json())
}

// -------------------------------------------------------------------- simulate

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Root mean squared error of posterior means over simulated datasets.
    Rmse(RmseArgs),
}

#[derive(Debug, Args)]
pub struct RmseArgs {
    /// fig3 (Bernoulli), fig4 (normal) or fig5 (both, n₀ = 30).
    #[arg(long)]
    pub preset: Option<String>,
    /// An rMSE spec, or a list of them, as JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Replicates per cell for a preset [default: 1000].
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

/// A single spec object or an array of them.
fn read_specs<T: serde::de::DeserializeOwned>(path: &std::path::Path, what: &str) -> Outcome<Vec<T>> {
    let text = io::read_text(path)?;
    if text.trim_start().starts_with('[') {
        io::parse_json(&text, what)
    } else {
        io::parse_json(&text, what).map(|t| vec![t])
    }
}

pub fn simulate(command: &SimulateCommand) -> Outcome<()> {
    let SimulateCommand::Rmse(args) = command;
    let mut specs: Vec<RmseSpec> = match (&args.preset, &args.config) {
        (Some(name), _) => rmse::preset(name, args.m.unwrap_or(1000))?,
        (None, Some(path)) => read_specs(path, "rMSE spec")?,
        (None, None) => return Err(Failure::config("--preset or --config is required")),
    };
    if args.preset.is_none() {
        if let Some(m) = args.m {
            specs.iter_mut().for_each(|s| s.replicates = m);
        }
    }
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    let table = rmse::run_rmse_all(&specs, seed)?;
    eprintln!("{} rMSE rows from {} spec(s), seed {seed}", table.rows.len(), specs.len());
    io::emit(args.out.as_deref(), &table_text(&table, args.format))
}

// ----------------------------------------------------------------------- sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// fig1 (Bernoulli) or fig2 (normal).
    #[arg(long)]
    pub preset: Option<String>,
    /// A sweep spec, or a list of them, as JSON.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

pub fn sweep(args: &SweepArgs) -> Outcome<()> {
    let specs: Vec<SweepSpec> = match (&args.preset, &args.config) {
        (Some(name), _) => sweep::preset(name)?,
        (None, Some(path)) => read_specs(path, "sweep spec")?,
        (None, None) => return Err(Failure::config("--preset or --config is required")),
    };
    let table = sweep::run_sweeps(&specs)?;
    eprintln!("{} sweep rows from {} spec(s)", table.rows.len(), specs.len());
    io::emit(args.out.as_deref(), &table_text(&table, args.format))
}

// ------------------------------------------------------------------------ case

#[derive(Debug, Args)]
pub struct CaseArgs {
    /// ph, vaccine or diagnostic.
    pub study: String,
    /// Noninferiority margin on the probability scale [default: 0.05].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Composition draws per method [default: 200000].
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Prior on response rates for the vaccine power-prior rows.
    #[arg(long, value_parser = ["uniform", "jeffreys"])]
    pub vaccine_prior: Option<String>,
    /// Case settings JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference values with tolerances [default: the embedded table].
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

/// Case-study output: the table rows plus their check against reference values.
#[derive(Debug, Serialize)]
pub struct CaseReport {
    pub result: CaseStudyResult,
    pub checks: Vec<CellCheck>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sensitivity_checks: Vec<CellCheck>,
    pub passed: usize,
    pub total: usize,
    pub version: String,
}

pub fn case(args: &CaseArgs) -> Outcome<()> {
    let study: Study = args.study.parse()?;
    let mut settings: CaseSettings = match &args.config {
        Some(path) => io::read_json(path, "case settings")?,
        None => CaseSettings::default(),
    };
    settings.margin = args.margin.unwrap_or(settings.margin);
    settings.draws = args.draws.unwrap_or(settings.draws);
    settings.seed = args.seed.unwrap_or(settings.seed);
    if let Some(p) = args.vaccine_prior.as_deref() {
        settings.vaccine_prior = if p == "jeffreys" { ProbabilityPrior::Jeffreys } else { ProbabilityPrior::Uniform };
    }
    let reference = match &args.reference {
        Some(path) => ReferenceValues::from_json(&io::read_text(path)?)?,
        None => ReferenceValues::embedded(),
    };
    let result = run_case(study, &settings)?;
    let checks = check(&result, &reference);
    let sensitivity_checks = check_sensitivity(&result, &reference);
    let passed = checks.iter().filter(|c| c.pass).count();
    eprintln!("{study}: {passed}/{} reference cells within tolerance", checks.len());
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "  off: {}/{}/{} computed {} vs {} (±{})",
            c.group,
            c.method,
            c.cell,
            c.computed.map_or("missing".into(), |v| format!("{v:.4}")),
            c.expected,
            c.tolerance
        );
    }
    for row in result.rows.iter().filter(|r| r.verdict.is_some()) {
        let label = if row.group.is_empty() { row.method.clone() } else { format!("{}/{}", row.group, row.method) };
        eprintln!("  {label}: {}", row.verdict.as_deref().unwrap_or_default());
    }
    let text = match args.format {
        Format::Csv => result.to_table().to_csv(),
        Format::Json => io::to_json(&CaseReport {
            total: checks.len(),
            passed,
            checks,
            sensitivity_checks,
            result,
            version: env!("CARGO_PKG_VERSION").into(),
        }),
    };
    io::emit(args.out.as_deref(), &text)
}
