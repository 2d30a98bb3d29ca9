//! Posterior behaviour of the parameter of interest and of `δ` as one data
//! feature varies with the current sample held fixed.
//!
//! Everything here is computed by quadrature over `δ`, so sweeps are exact up
//! to the rule and need no random numbers.

use npp_core::models::{
    BetaPrior, BinomialData, ConjugatePrior, DataPair, DeltaPrior, NormalLinearPrior, NormalSummary,
};
use npp_core::npp::{ConjugateModel, DeltaPosterior};
use npp_core::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::method::{posterior_mean, Method};
use crate::table::{Cell, Table};

/// Current and historical summaries around which the axis varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepBase {
    /// Sample proportions; success counts are rounded to the nearest integer.
    Binomial { n: u64, p_hat: f64, n0: u64, p0_hat: f64 },
    /// Sample means and variances (`n − 1` divisor) under the prior `1/σ²`.
    Normal { n: u64, mean: f64, var: f64, n0: u64, mean0: f64, var0: f64 },
}

impl SweepBase {
    pub fn family(&self) -> &'static str {
        match self {
            SweepBase::Binomial { .. } => "binomial",
            SweepBase::Normal { .. } => "normal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Historical size as a multiple of the current size.
    N0OverN,
    /// Historical statistic minus the current one (`p̂₀ − p̂` or `x̄₀ − x̄`).
    StatGap,
    /// Historical variance over the current variance (normal only).
    VarRatio,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::N0OverN => "n0_over_n",
            SweepAxis::StatGap => "stat_gap",
            SweepAxis::VarRatio => "var_ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: SweepBase,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Method labels as accepted by [`Method::parse`].
    pub methods: Vec<String>,
}

pub const SWEEP_COLUMNS: [&str; 9] =
    ["axis", "value", "n0", "stat0", "var0", "method", "param_mean", "delta_mean", "delta_mode"];

impl SweepSpec {
    pub fn validate(&self) -> Result<Vec<Method>> {
        if self.values.len() < 2 || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("a sweep needs at least two finite axis values".into()));
        }
        if self.axis == SweepAxis::VarRatio && matches!(self.base, SweepBase::Binomial { .. }) {
            return Err(Error::Config("the var_ratio axis applies to the normal family only".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("a sweep needs at least one method".into()));
        }
        self.methods.iter().map(|m| Method::parse(m, self.base.family())).collect()
    }

    /// Base summaries with the axis set to `value`.
    fn point(&self, value: f64) -> SweepBase {
        let mut b = self.base.clone();
        match (&mut b, self.axis) {
            (SweepBase::Binomial { n, n0, .. }, SweepAxis::N0OverN)
            | (SweepBase::Normal { n, n0, .. }, SweepAxis::N0OverN) => *n0 = (value * *n as f64).round() as u64,
            (SweepBase::Binomial { p_hat, p0_hat, .. }, SweepAxis::StatGap) => *p0_hat = *p_hat + value,
            (SweepBase::Normal { mean, mean0, .. }, SweepAxis::StatGap) => *mean0 = *mean + value,
            (SweepBase::Normal { var, var0, .. }, SweepAxis::VarRatio) => *var0 = *var * value,
            (SweepBase::Binomial { .. }, SweepAxis::VarRatio) => unreachable!("rejected by validate"),
        }
        b
    }
}

fn model_at(base: &SweepBase) -> Result<(ConjugateModel, f64, Option<f64>)> {
    match *base {
        SweepBase::Binomial { n, p_hat, n0, p0_hat } => {
            let count = |m: u64, p: f64| {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("sample proportion {p} is outside [0, 1]")));
                }
                BinomialData::new(m, (p * m as f64).round() as u64)
            };
            let historical = count(n0, p0_hat)?;
            let pair = DataPair::Binomial { historical, current: count(n, p_hat)? };
            let model = ConjugateModel::new(&pair, &ConjugatePrior::Beta(BetaPrior::default()))?;
            Ok((model, historical.y as f64 / n0.max(1) as f64, None))
        }
        SweepBase::Normal { n, mean, var, n0, mean0, var0 } => {
            let summary = |m: u64, x: f64, v: f64| {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("sample variance must be positive, got {v}")));
                }
                NormalSummary::new(m, x, v.sqrt())
            };
            let pair = DataPair::Normal {
                historical: summary(n0, mean0, var0)?.to_linear(),
                current: summary(n, mean, var)?.to_linear(),
            };
            let model = ConjugateModel::new(&pair, &ConjugatePrior::NormalLinear(NormalLinearPrior::flat(1.0)))?;
            Ok((model, mean0, Some(var0)))
        }
    }
}

/// Long-format table with one row per axis value and method.
pub fn run_sweep(spec: &SweepSpec) -> Result<Table> {
    let methods = spec.validate()?;
    let rule = DeltaPosterior::default_rule();
    let rows = spec
        .values
        .par_iter()
        .map(|&value| {
            let point = spec.point(value);
            let (model, stat0, var0) = model_at(&point)?;
            let n0 = match point {
                SweepBase::Binomial { n0, .. } | SweepBase::Normal { n0, .. } => n0,
            };
            methods
                .iter()
                .map(|method| {
                    let post = method.delta_posterior(&model, &DeltaPrior::uniform(), &rule)?;
                    let mean = posterior_mean(&model, &post)?[0];
                    Ok(vec![
                        Cell::from(spec.axis.name()),
                        value.into(),
                        n0.into(),
                        stat0.into(),
                        var0.map_or_else(|| "".into(), Cell::from),
                        method.label().into(),
                        mean.into(),
                        post.mean.into(),
                        post.mode.into(),
                    ])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&SWEEP_COLUMNS);
    rows.into_iter().flatten().for_each(|r| table.push(r));
    Ok(table)
}

/// Run several sweeps into one table.
pub fn run_sweeps(specs: &[SweepSpec]) -> Result<Table> {
    let mut table = Table::new(&SWEEP_COLUMNS);
    for spec in specs {
        table.rows.extend(run_sweep(spec)?.rows);
    }
    Ok(table)
}

fn all_methods() -> Vec<String> {
    ["npp", "jpp1", "jpp2", "pool", "discard"].map(String::from).to_vec()
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step).round() as usize;
    (0..=count).map(|i| lo + i as f64 * step).collect()
}

/// Named sweep presets: `fig1` (Bernoulli) and `fig2` (normal).
pub fn preset(name: &str) -> Result<Vec<SweepSpec>> {
    let binomial = SweepBase::Binomial { n: 20, p_hat: 0.65, n0: 40, p0_hat: 0.5 };
    let normal = SweepBase::Normal { n: 20, mean: 0.5, var: 1.0, n0: 40, mean0: 1.0, var0: 0.8 };
    let spec = |base: &SweepBase, axis, values| SweepSpec { base: base.clone(), axis, values, methods: all_methods() };
    match name {
        "fig1" => Ok(vec![
            spec(&binomial, SweepAxis::N0OverN, steps(0.25, 5.0, 0.25)),
            // p̂₀ from 0 to 1 in steps of 0.025 (whole successes at n₀ = 40).
            spec(&binomial, SweepAxis::StatGap, steps(-0.65, 0.35, 0.025)),
        ]),
        "fig2" => Ok(vec![
            spec(&normal, SweepAxis::N0OverN, steps(0.25, 5.0, 0.25)),
            spec(&normal, SweepAxis::StatGap, steps(-1.5, 1.5, 0.1)),
            spec(&normal, SweepAxis::VarRatio, steps(0.2, 3.0, 0.1)),
        ]),
        other => Err(Error::Config(format!("unknown sweep preset `{other}` (expected fig1 or fig2)"))),
    }
}
