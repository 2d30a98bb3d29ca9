//! Root mean squared error of posterior-mean estimates over simulated
//! (historical, current) data pairs.
//!
//! Replicate `r` draws its data from stream `r` of the master seed, using
//! standardized variates (uniforms for Bernoulli trials, standard normals
//! for normal samples). Every scenario and historical size therefore sees the
//! same underlying noise, and results do not depend on the worker count.

use npp_core::models::{
    BetaPrior, BinomialData, ConjugatePrior, DataPair, DeltaPrior, NormalLinearPrior, NormalSummary,
};
use npp_core::npp::ConjugateModel;
use npp_core::numkit::{PanelSpacing, QuadratureRule, RngStream};
use npp_core::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::method::{posterior_mean, Method};
use crate::table::{Cell, Table};

/// True parameters of the current and historical populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Binomial { p: f64, p0: f64 },
    Normal { mu: f64, sigma: f64, mu0: f64, sigma0: f64 },
}

impl Scenario {
    pub fn family(&self) -> &'static str {
        match self {
            Scenario::Binomial { .. } => "binomial",
            Scenario::Normal { .. } => "normal",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Scenario::Binomial { p, p0 } => [p, p0].iter().all(|v| *v > 0.0 && *v < 1.0),
            Scenario::Normal { mu, sigma, mu0, sigma0 } => {
                mu.is_finite() && mu0.is_finite() && sigma > 0.0 && sigma0 > 0.0 && sigma.is_finite() && sigma0.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid scenario {self:?}: probabilities must lie in (0, 1) and scales be positive")))
        }
    }

    /// Truth of the parameter of interest.
    fn target(&self) -> f64 {
        match *self {
            Scenario::Binomial { p, .. } => p,
            Scenario::Normal { mu, .. } => mu,
        }
    }

    /// Scale used to report a standardized rMSE.
    fn scale(&self) -> f64 {
        match *self {
            Scenario::Binomial { .. } => 1.0,
            Scenario::Normal { sigma, .. } => sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseSpec {
    /// Current sample size.
    pub n: u64,
    /// Historical sample sizes.
    pub n0: Vec<u64>,
    pub scenarios: Vec<Scenario>,
    /// Monte Carlo replicates per cell.
    pub replicates: usize,
    /// Method labels as accepted by [`Method::parse`].
    pub methods: Vec<String>,
}

pub const MIN_REPLICATES: usize = 100;

pub const RMSE_COLUMNS: [&str; 12] =
    ["family", "n", "n0", "truth", "truth0", "sigma", "sigma0", "method", "rmse", "rmse_std", "delta_mean", "replicates"];

impl RmseSpec {
    pub fn family(&self) -> &'static str {
        self.scenarios.first().map_or("binomial", Scenario::family)
    }

    pub fn validate(&self) -> Result<Vec<Method>> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!("at least {MIN_REPLICATES} replicates are needed, got {}", self.replicates)));
        }
        if self.scenarios.is_empty() || self.n0.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("an rMSE study needs scenarios, historical sizes and methods".into()));
        }
        let family = self.family();
        for s in &self.scenarios {
            s.validate()?;
            if s.family() != family {
                return Err(Error::Config("all scenarios of an rMSE study must share one family".into()));
            }
        }
        let min_n = if family == "normal" { 2 } else { 1 };
        if self.n < min_n || self.n0.iter().any(|&m| m < min_n) {
            return Err(Error::Config(format!("{family} samples need at least {min_n} observations")));
        }
        self.methods.iter().map(|m| Method::parse(m, family)).collect()
    }
}

/// Coarser δ rule than the single-analysis default; thousands of fits run per cell.
pub fn rmse_rule() -> QuadratureRule {
    QuadratureRule::composite(64, 8, PanelSpacing::CrowdLow).expect("valid rule")
}

/// Standardized variates of one replicate: current first, then historical.
struct Noise {
    current: Vec<f64>,
    historical: Vec<f64>,
}

impl Noise {
    fn draw(family: &str, n: usize, n0: usize, stream: &RngStream) -> Self {
        let fill = |count: usize, s: RngStream| -> Vec<f64> {
            let mut rng = s.rng();
            (0..count)
                .map(|_| if family == "normal" { rng.sample(StandardNormal) } else { rng.random::<f64>() })
                .collect()
        };
        Self { current: fill(n, stream.substream(0)), historical: fill(n0, stream.substream(1)) }
    }
}

fn simulate_pair(scenario: &Scenario, noise: &Noise, n0: usize) -> Result<DataPair> {
    Ok(match *scenario {
        Scenario::Binomial { p, p0 } => {
            let trials = |u: &[f64], q: f64| BinomialData::from_outcomes(&u.iter().map(|&v| v < q).collect::<Vec<_>>());
            DataPair::Binomial { historical: trials(&noise.historical[..n0], p0), current: trials(&noise.current, p) }
        }
        Scenario::Normal { mu, sigma, mu0, sigma0 } => {
            let sample = |z: &[f64], m: f64, s: f64| {
                NormalSummary::from_observations(&z.iter().map(|v| m + s * v).collect::<Vec<_>>())
            };
            DataPair::Normal {
                historical: sample(&noise.historical[..n0], mu0, sigma0)?.to_linear(),
                current: sample(&noise.current, mu, sigma)?.to_linear(),
            }
        }
    })
}

fn prior_for(family: &str) -> ConjugatePrior {
    if family == "normal" {
        ConjugatePrior::NormalLinear(NormalLinearPrior::flat(1.0))
    } else {
        ConjugatePrior::Beta(BetaPrior::default())
    }
}

/// Posterior-mean estimate and δ mean of every method in every cell, for one replicate.
fn replicate(spec: &RmseSpec, methods: &[Method], rule: &QuadratureRule, stream: &RngStream) -> Result<Vec<(f64, f64)>> {
    let family = spec.family();
    let max_n0 = *spec.n0.iter().max().expect("validated") as usize;
    let noise = Noise::draw(family, spec.n as usize, max_n0, stream);
    let prior = prior_for(family);
    let mut out = Vec::with_capacity(spec.scenarios.len() * spec.n0.len() * methods.len());
    for scenario in &spec.scenarios {
        for &n0 in &spec.n0 {
            let model = ConjugateModel::new(&simulate_pair(scenario, &noise, n0 as usize)?, &prior)?;
            for method in methods {
                let post = method.delta_posterior(&model, &DeltaPrior::uniform(), rule)?;
                out.push((posterior_mean(&model, &post)?[0], post.mean));
            }
        }
    }
    Ok(out)
}

/// One row per scenario, historical size and method.
pub fn run_rmse(spec: &RmseSpec, seed: u64) -> Result<Table> {
    let methods = spec.validate()?;
    let rule = rmse_rule();
    let per_replicate = (0..spec.replicates)
        .into_par_iter()
        .map(|r| replicate(spec, &methods, &rule, &RngStream::new(seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    let m = spec.replicates as f64;
    let mut table = Table::new(&RMSE_COLUMNS);
    let mut index = 0;
    for scenario in &spec.scenarios {
        let (truth0, sigma, sigma0) = match *scenario {
            Scenario::Binomial { p0, .. } => (p0, Cell::from(""), Cell::from("")),
            Scenario::Normal { mu0, sigma, sigma0, .. } => (mu0, sigma.into(), sigma0.into()),
        };
        for &n0 in &spec.n0 {
            for method in &methods {
                let (mut sq, mut delta) = (0.0, 0.0);
                for rep in &per_replicate {
                    let (est, d) = rep[index];
                    sq += (est - scenario.target()).powi(2);
                    delta += d;
                }
                let rmse = (sq / m).sqrt();
                table.push(vec![
                    scenario.family().into(),
                    spec.n.into(),
                    n0.into(),
                    scenario.target().into(),
                    truth0.into(),
                    sigma.clone(),
                    sigma0.clone(),
                    method.label().into(),
                    rmse.into(),
                    (rmse / scenario.scale()).into(),
                    (delta / m).into(),
                    (spec.replicates as u64).into(),
                ]);
                index += 1;
            }
        }
    }
    Ok(table)
}

pub fn run_rmse_all(specs: &[RmseSpec], seed: u64) -> Result<Table> {
    let mut table = Table::new(&RMSE_COLUMNS);
    for spec in specs {
        table.rows.extend(run_rmse(spec, seed)?.rows);
    }
    Ok(table)
}

fn all_methods() -> Vec<String> {
    ["npp", "jpp1", "jpp2", "pool", "discard"].map(String::from).to_vec()
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|i| lo + i as f64 * step).collect()
}

/// Named presets `fig3` (Bernoulli), `fig4` (normal) and `fig5` (average δ
/// at `n = n₀ = 30`), each with `replicates` Monte Carlo samples.
pub fn preset(name: &str, replicates: usize) -> Result<Vec<RmseSpec>> {
    let binomial = |p: f64| -> Vec<Scenario> {
        grid(0.05, 0.95, 0.05).into_iter().map(|p0| Scenario::Binomial { p, p0 }).collect()
    };
    let shifted = || -> Vec<Scenario> {
        grid(-1.0, 1.0, 0.1).into_iter().map(|mu0| Scenario::Normal { mu: 0.0, sigma: 1.0, mu0, sigma0: 1.0 }).collect()
    };
    let scaled = || -> Vec<Scenario> {
        grid(0.5, 2.0, 0.1).into_iter().map(|sigma0| Scenario::Normal { mu: 0.0, sigma: 1.0, mu0: 0.2, sigma0 }).collect()
    };
    let spec = |n0: Vec<u64>, scenarios| RmseSpec { n: 30, n0, scenarios, replicates, methods: all_methods() };
    let sizes = || vec![15, 30, 60];
    match name {
        "fig3" => Ok(vec![spec(sizes(), binomial(0.5)), spec(sizes(), binomial(0.2))]),
        "fig4" => Ok(vec![spec(sizes(), shifted()), spec(sizes(), scaled())]),
        "fig5" => Ok(vec![spec(vec![30], binomial(0.5)), spec(vec![30], shifted()), spec(vec![30], scaled())]),
        other => Err(Error::Config(format!("unknown rMSE preset `{other}` (expected fig3, fig4 or fig5)"))),
    }
}

/// Largest absolute difference in standardized rMSE and average δ between two
/// normal studies whose scenarios have the same standardized configuration.
pub fn standardized_gap(a: &Table, b: &Table) -> Result<f64> {
    if a.rows.len() != b.rows.len() {
        return Err(Error::Config("tables have different shapes".into()));
    }
    let mut gap: f64 = 0.0;
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        for col in ["rmse_std", "delta_mean"] {
            let (x, y) = (a.number(ra, col), b.number(rb, col));
            match (x, y) {
                (Some(x), Some(y)) => gap = gap.max((x - y).abs()),
                _ => return Err(Error::Config(format!("missing column {col}"))),
            }
        }
    }
    Ok(gap)
}
