//! The three applications: water-quality impairment (pH), a vaccine
//! noninferiority trial and a diagnostic test evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use npp_core::jpp::LikelihoodForm;
use npp_core::models::{
    BetaPrior, BinomialData, ConjugatePrior, DataPair, DeltaPrior, DirichletPrior, MultinomialData, NormalLinearPrior,
    NormalSummary,
};
use npp_core::npp::ConjugateModel;
use npp_core::numkit::{equal_tailed_interval, hpd_interval, mean_and_sd, sorted_copy, RngStream};
use npp_core::{Error, Result};
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::method::{analyze, Analysis, Method, ParameterSummary, PosteriorReport};

pub const PH_DATA: &str = include_str!("../resources/ph.json");
pub const VACCINE_DATA: &str = include_str!("../resources/vaccine.json");
pub const DIAGNOSTIC_DATA: &str = include_str!("../resources/diagnostic.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Ph,
    Vaccine,
    Diagnostic,
}

impl FromStr for Study {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ph" => Ok(Study::Ph),
            "vaccine" => Ok(Study::Vaccine),
            "diagnostic" => Ok(Study::Diagnostic),
            other => Err(Error::Config(format!("unknown study `{other}` (expected ph, vaccine or diagnostic)"))),
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Ph => "ph",
            Study::Vaccine => "vaccine",
            Study::Diagnostic => "diagnostic",
        })
    }
}

/// Initial prior on a success probability in the vaccine study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityPrior {
    #[default]
    Uniform,
    Jeffreys,
}

impl ProbabilityPrior {
    pub fn beta(self) -> BetaPrior {
        match self {
            ProbabilityPrior::Uniform => BetaPrior::default(),
            ProbabilityPrior::Jeffreys => BetaPrior::jeffreys(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseSettings {
    /// Composition draws per method.
    pub draws: usize,
    pub seed: u64,
    /// Noninferiority margin on the probability scale.
    pub margin: f64,
    /// Prior on the response rates for the power-prior rows of the vaccine study.
    pub vaccine_prior: ProbabilityPrior,
}

impl Default for CaseSettings {
    fn default() -> Self {
        Self { draws: 200_000, seed: 20_190_603, margin: 0.05, vaccine_prior: ProbabilityPrior::Uniform }
    }
}

/// One method's row of a case-study table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    /// Site for the pH study; empty otherwise.
    pub group: String,
    pub method: String,
    /// Table cells by column key.
    pub cells: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub report: PosteriorReport,
}

impl CaseRow {
    pub fn cell(&self, key: &str) -> Option<f64> {
        self.cells.get(key).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyResult {
    pub study: Study,
    pub settings: CaseSettings,
    pub rows: Vec<CaseRow>,
    /// Alternative prior configuration, reported alongside the main rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivity: Vec<CaseRow>,
}

impl CaseStudyResult {
    pub fn row(&self, group: &str, method: &str) -> Option<&CaseRow> {
        self.rows.iter().find(|r| r.group == group && r.method == method)
    }

    /// Flat table: one line per row with every cell as a column.
    pub fn to_table(&self) -> crate::table::Table {
        let mut keys: Vec<&str> = Vec::new();
        for row in self.rows.iter().chain(&self.sensitivity) {
            for k in row.cells.keys() {
                if !keys.contains(&k.as_str()) {
                    keys.push(k);
                }
            }
        }
        let mut columns = vec!["set", "group", "method"];
        columns.extend(&keys);
        columns.push("verdict");
        let mut table = crate::table::Table::new(&columns);
        for (set, rows) in [("main", &self.rows), ("sensitivity", &self.sensitivity)] {
            for row in rows.iter() {
                let mut cells = vec![set.into(), row.group.as_str().into(), row.method.as_str().into()];
                cells.extend(keys.iter().map(|k| row.cells.get(*k).map_or_else(|| "".into(), |v| (*v).into())));
                cells.push(row.verdict.clone().unwrap_or_default().into());
                table.push(cells);
            }
        }
        table
    }
}

pub fn run_case(study: Study, settings: &CaseSettings) -> Result<CaseStudyResult> {
    match study {
        Study::Ph => run_case_ph(settings),
        Study::Vaccine => run_case_vaccine(settings),
        Study::Diagnostic => run_case_diagnostic(settings),
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("embedded {what} data: {e}")))
}

fn validate(settings: &CaseSettings) -> Result<()> {
    if settings.draws < 1000 {
        return Err(Error::Config(format!("case studies need at least 1000 draws, got {}", settings.draws)));
    }
    if !(settings.margin > 0.0 && settings.margin < 1.0) {
        return Err(Error::Config(format!("the margin must lie in (0, 1), got {}", settings.margin)));
    }
    Ok(())
}

/// Delta cells for methods with a random power parameter.
fn delta_cells(a: &Analysis, cells: &mut BTreeMap<String, f64>) {
    if !a.delta.fixed {
        cells.insert("delta_mean".into(), a.delta.mean);
        cells.insert("delta_mode".into(), a.delta.mode);
    }
}

#[derive(Deserialize)]
struct PhData {
    threshold: f64,
    percentile: f64,
    initial_prior: NormalLinearPrior,
    sites: Vec<PhSite>,
}

#[derive(Deserialize)]
struct PhSite {
    site: String,
    current: NormalSummary,
    historical: NormalSummary,
}

/// Column labels and methods of the pH table, in table order.
pub fn ph_methods() -> Vec<(&'static str, Method)> {
    vec![
        ("reference", Method::Discard),
        ("npp", Method::Npp),
        ("jpp(1)", Method::Jpp(LikelihoodForm::NormalSufficientDensity)),
        ("jpp(2)", Method::Jpp(LikelihoodForm::NormalRawProduct)),
        ("jpp(3)", Method::Jpp(LikelihoodForm::normal_scaled_default())),
    ]
}

/// Posterior probability that the lower percentile `L = μ + z σ` of pH is at
/// least the threshold, per site and method.
pub fn run_case_ph(settings: &CaseSettings) -> Result<CaseStudyResult> {
    validate(settings)?;
    let data: PhData = parse(PH_DATA, "pH")?;
    let z = Normal::standard().inverse_cdf(data.percentile);
    let mut jobs = Vec::new();
    for site in &data.sites {
        for (label, method) in ph_methods() {
            jobs.push((site, label, method));
        }
    }
    let rows = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (site, label, method))| {
            let pair = DataPair::Normal { historical: site.historical.to_linear(), current: site.current.to_linear() };
            let model = ConjugateModel::new(&pair, &ConjugatePrior::NormalLinear(data.initial_prior.clone()))?;
            let a = analyze(&model, *method, &DeltaPrior::uniform(), settings.draws, &RngStream::new(settings.seed, i as u64))?;
            let l: Vec<f64> = a.samples.rows().map(|r| r[0] + z * r[1].sqrt()).collect();
            let p_h0 = l.iter().filter(|&&v| v >= data.threshold).count() as f64 / l.len() as f64;
            let (_, sd_l) = mean_and_sd(&l);
            let mut cells = BTreeMap::from([("p_h0".to_string(), p_h0), ("sd_l".to_string(), sd_l)]);
            delta_cells(&a, &mut cells);
            let mut report = PosteriorReport::from_analysis(&a)?;
            report.method = label.to_string();
            report.parameters.push(ParameterSummary::from_draws("L", &l)?);
            let verdict = if p_h0 < 0.05 { "impaired" } else { "not impaired" };
            Ok(CaseRow {
                group: site.site.clone(),
                method: label.to_string(),
                cells,
                verdict: Some(verdict.into()),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseStudyResult { study: Study::Ph, settings: settings.clone(), rows, sensitivity: Vec::new() })
}

#[derive(Deserialize)]
struct VaccineData {
    historical: Vec<BinomialData>,
    control: BinomialData,
    test: BinomialData,
}

/// Control-arm borrowing in a two-arm noninferiority comparison.
///
/// The test arm is analysed with its current data only. The reference row
/// uses Jeffreys priors on both arms and no borrowing; the power-prior rows use
/// `settings.vaccine_prior` on both arms, and the other prior is reported in
/// `sensitivity`.
pub fn run_case_vaccine(settings: &CaseSettings) -> Result<CaseStudyResult> {
    validate(settings)?;
    let data: VaccineData = parse(VACCINE_DATA, "vaccine")?;
    let historical = BinomialData::pool(&data.historical);
    let power_rows = |prior: ProbabilityPrior, offset: u64| -> Result<Vec<CaseRow>> {
        [("jpp1", Method::Jpp(LikelihoodForm::BernoulliProduct)), ("jpp2", Method::Jpp(LikelihoodForm::BinomialDensity)), ("npp", Method::Npp)]
            .par_iter()
            .enumerate()
            .map(|(i, (label, method))| vaccine_row(&data, historical, prior, label, *method, settings, offset + i as u64))
            .collect()
    };
    let mut rows = vec![vaccine_row(&data, historical, ProbabilityPrior::Jeffreys, "jeffreys", Method::Discard, settings, 0)?];
    rows.extend(power_rows(settings.vaccine_prior, 1)?);
    let other = match settings.vaccine_prior {
        ProbabilityPrior::Uniform => ProbabilityPrior::Jeffreys,
        ProbabilityPrior::Jeffreys => ProbabilityPrior::Uniform,
    };
    let sensitivity = power_rows(other, 4)?;
    Ok(CaseStudyResult { study: Study::Vaccine, settings: settings.clone(), rows, sensitivity })
}

fn vaccine_row(
    data: &VaccineData,
    historical: BinomialData,
    prior: ProbabilityPrior,
    label: &str,
    method: Method,
    settings: &CaseSettings,
    index: u64,
) -> Result<CaseRow> {
    let beta = prior.beta();
    let pair = DataPair::Binomial { historical, current: data.control };
    let model = ConjugateModel::new(&pair, &ConjugatePrior::Beta(beta))?;
    let stream = RngStream::new(settings.seed, index);
    let a = analyze(&model, method, &DeltaPrior::uniform(), settings.draws, &stream.substream(0))?;
    let test_law = Beta::new(data.test.y as f64 + beta.alpha, data.test.failures() as f64 + beta.beta)
        .map_err(|e| Error::Domain(format!("test-arm posterior: {e}")))?;
    let mut rng = stream.substream(1).rng();
    let p_c = a.samples.column(0);
    let diff: Vec<f64> = p_c.iter().map(|pc| 100.0 * (test_law.sample(&mut rng) - pc)).collect();
    let (lower, upper) = hpd_interval(&sorted_copy(&diff), 0.95)?;
    let mut cells = BTreeMap::from([
        ("p_c_hat".to_string(), 100.0 * mean_and_sd(&p_c).0),
        ("ci_lower".to_string(), lower),
        ("ci_upper".to_string(), upper),
    ]);
    delta_cells(&a, &mut cells);
    let verdict = if lower > -100.0 * settings.margin { "noninferior" } else { "questionable" };
    let mut report = PosteriorReport::from_analysis(&a)?;
    report.method = label.to_string();
    report.parameters[0].name = "p_c".into();
    report.parameters.push(ParameterSummary::from_draws("p_t_minus_p_c_percent", &diff)?);
    Ok(CaseRow { group: String::new(), method: label.into(), cells, verdict: Some(verdict.into()), report })
}

#[derive(Deserialize)]
struct DiagnosticTable {
    counts: Vec<u64>,
}

#[derive(Deserialize)]
struct DiagnosticData {
    current: DiagnosticTable,
    historical: DiagnosticTable,
    dirichlet: f64,
}

/// Sensitivity `θ₁/(θ₁+θ₃)` and specificity `θ₄/(θ₂+θ₄)` of a diagnostic test
/// with cells (TP, FP, FN, TN), borrowing from an external study.
pub fn run_case_diagnostic(settings: &CaseSettings) -> Result<CaseStudyResult> {
    validate(settings)?;
    let data: DiagnosticData = parse(DIAGNOSTIC_DATA, "diagnostic")?;
    let pair = DataPair::Multinomial {
        historical: MultinomialData::new(data.historical.counts)?,
        current: MultinomialData::new(data.current.counts)?,
    };
    let model = ConjugateModel::new(&pair, &ConjugatePrior::Dirichlet(DirichletPrior::symmetric(4, data.dirichlet)))?;
    let methods = [
        ("fixed_0", Method::Discard),
        ("fixed_1", Method::Pool),
        ("jpp", Method::Jpp(LikelihoodForm::MultinomialDensity)),
        ("npp", Method::Npp),
    ];
    let rows = methods
        .par_iter()
        .enumerate()
        .map(|(i, (label, method))| {
            let a = analyze(&model, *method, &DeltaPrior::uniform(), settings.draws, &RngStream::new(settings.seed, i as u64))?;
            let eta: Vec<f64> = a.samples.rows().map(|t| 100.0 * t[0] / (t[0] + t[2])).collect();
            let lambda: Vec<f64> = a.samples.rows().map(|t| 100.0 * t[3] / (t[1] + t[3])).collect();
            let mut cells = BTreeMap::new();
            for (name, values) in [("eta", &eta), ("lambda", &lambda)] {
                let sorted = sorted_copy(values);
                let (lo, hi) = hpd_interval(&sorted, 0.95)?;
                let (et_lo, et_hi) = equal_tailed_interval(&sorted, 0.95)?;
                cells.insert(format!("{name}_hat"), mean_and_sd(values).0);
                cells.insert(format!("{name}_lower"), lo);
                cells.insert(format!("{name}_upper"), hi);
                cells.insert(format!("{name}_lower_et"), et_lo);
                cells.insert(format!("{name}_upper_et"), et_hi);
            }
            delta_cells(&a, &mut cells);
            let mut report = PosteriorReport::from_analysis(&a)?;
            report.method = label.to_string();
            report.parameters.push(ParameterSummary::from_draws("sensitivity_percent", &eta)?);
            report.parameters.push(ParameterSummary::from_draws("specificity_percent", &lambda)?);
            Ok(CaseRow { group: String::new(), method: label.to_string(), cells, verdict: None, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseStudyResult { study: Study::Diagnostic, settings: settings.clone(), rows, sensitivity: Vec::new() })
}
