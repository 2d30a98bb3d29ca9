//! Sufficient-statistic containers, initial priors and the compatibility statistic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::ln_beta;

/// Binary outcomes summarised as `y` successes out of `n` trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBinomial")]
pub struct BinomialData {
    pub n: u64,
    pub y: u64,
}

#[derive(Deserialize)]
struct RawBinomial {
    n: u64,
    y: u64,
}

impl TryFrom<RawBinomial> for BinomialData {
    type Error = Error;
    fn try_from(r: RawBinomial) -> Result<Self> {
        BinomialData::new(r.n, r.y)
    }
}

impl BinomialData {
    pub fn new(n: u64, y: u64) -> Result<Self> {
        if y > n {
            return Err(Error::domain(format!("successes y = {y} exceed trials n = {n}")));
        }
        Ok(Self { n, y })
    }

    /// Summarise a 0/1 sequence.
    pub fn from_outcomes(outcomes: &[bool]) -> Self {
        let y = outcomes.iter().filter(|&&o| o).count() as u64;
        Self { n: outcomes.len() as u64, y }
    }

    /// Combine several samples into one (sum of trials and successes).
    pub fn pool(samples: &[BinomialData]) -> Self {
        samples.iter().fold(Self { n: 0, y: 0 }, |acc, s| Self { n: acc.n + s.n, y: acc.y + s.y })
    }

    pub fn failures(&self) -> u64 {
        self.n - self.y
    }
}

/// Category counts of a k-cell multinomial sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMultinomial")]
pub struct MultinomialData {
    pub counts: Vec<u64>,
}

#[derive(Deserialize)]
struct RawMultinomial {
    counts: Vec<u64>,
}

impl TryFrom<RawMultinomial> for MultinomialData {
    type Error = Error;
    fn try_from(r: RawMultinomial) -> Result<Self> {
        MultinomialData::new(r.counts)
    }
}

impl MultinomialData {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::domain(format!("multinomial data needs at least 2 cells, got {}", counts.len())));
        }
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::domain("multinomial data has no positive count"));
        }
        Ok(Self { counts })
    }

    /// Tally category labels `0..k`.
    pub fn from_categories(labels: &[usize], k: usize) -> Result<Self> {
        let mut counts = vec![0u64; k];
        for &l in labels {
            *counts
                .get_mut(l)
                .ok_or_else(|| Error::domain(format!("category {l} outside 0..{k}")))? += 1;
        }
        Self::new(counts)
    }

    pub fn pool(samples: &[MultinomialData]) -> Result<Self> {
        let k = samples.first().ok_or_else(|| Error::domain("nothing to pool"))?.k();
        let mut counts = vec![0u64; k];
        for s in samples {
            if s.k() != k {
                return Err(Error::domain(format!("cannot pool {}-cell with {k}-cell data", s.k())));
            }
            counts.iter_mut().zip(&s.counts).for_each(|(c, v)| *c += v);
        }
        Self::new(counts)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Two-cell data viewed as (successes, failures).
    pub fn as_binomial(&self) -> Option<BinomialData> {
        match self.counts[..] {
            [y, f] => Some(BinomialData { n: y + f, y }),
            _ => None,
        }
    }
}

/// Normal linear model `Y = Xβ + ε`, `ε ~ N(0, σ²I)`, reduced to its sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalLinear", into = "RawNormalLinear")]
pub struct NormalLinearData {
    pub n: u64,
    /// `X'X`.
    pub xtx: DMatrix<f64>,
    /// Least-squares estimate `(X'X)⁻¹X'Y`.
    pub beta_hat: DVector<f64>,
    /// Residual sum of squares.
    pub s: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNormalLinear {
    n: u64,
    xtx: Vec<Vec<f64>>,
    beta_hat: Vec<f64>,
    s: f64,
}

impl TryFrom<RawNormalLinear> for NormalLinearData {
    type Error = Error;
    fn try_from(r: RawNormalLinear) -> Result<Self> {
        let k = r.beta_hat.len();
        if r.xtx.len() != k || r.xtx.iter().any(|row| row.len() != k) {
            return Err(Error::domain(format!("xtx must be {k}x{k} to match beta_hat")));
        }
        let xtx = DMatrix::from_fn(k, k, |i, j| r.xtx[i][j]);
        NormalLinearData::new(r.n, xtx, DVector::from_vec(r.beta_hat), r.s)
    }
}

impl From<NormalLinearData> for RawNormalLinear {
    fn from(d: NormalLinearData) -> Self {
        let k = d.k();
        RawNormalLinear {
            n: d.n,
            xtx: (0..k).map(|i| (0..k).map(|j| d.xtx[(i, j)]).collect()).collect(),
            beta_hat: d.beta_hat.iter().copied().collect(),
            s: d.s,
        }
    }
}

impl NormalLinearData {
    pub fn new(n: u64, xtx: DMatrix<f64>, beta_hat: DVector<f64>, s: f64) -> Result<Self> {
        let k = beta_hat.len();
        if k == 0 || xtx.nrows() != k || xtx.ncols() != k {
            return Err(Error::domain("xtx and beta_hat dimensions disagree"));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::domain(format!("residual sum of squares must be finite and nonnegative, got {s}")));
        }
        if beta_hat.iter().chain(xtx.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite entry in xtx or beta_hat"));
        }
        let asym = (&xtx - xtx.transpose()).abs().max();
        if asym > 1e-9 * xtx.abs().max().max(1.0) {
            return Err(Error::domain("xtx is not symmetric"));
        }
        if xtx.clone().cholesky().is_none() {
            return Err(Error::domain("xtx is not positive definite"));
        }
        Ok(Self { n, xtx, beta_hat, s })
    }

    /// Least-squares reduction of a design matrix and response.
    pub fn from_design(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if y.len() != n {
            return Err(Error::domain(format!("design has {n} rows but response has {}", y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite design or response value"));
        }
        if n <= k {
            return Err(Error::domain(format!("need more observations than columns (n = {n}, k = {k})")));
        }
        let svd = x.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-10 * smax) {
            return Err(Error::domain("design matrix is rank deficient"));
        }
        let xtx = x.transpose() * x;
        let xty = x.transpose() * y;
        let beta_hat = xtx
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("design matrix is rank deficient"))?
            .solve(&xty);
        let resid = y - x * &beta_hat;
        Self::new(n as u64, symmetrize(xtx), beta_hat, resid.norm_squared())
    }

    /// Combine samples sharing the same regression coefficients.
    pub fn pool(samples: &[NormalLinearData]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::domain("nothing to pool"))?;
        if samples.len() == 1 {
            return Ok(first.clone());
        }
        let k = first.k();
        let mut xtx = DMatrix::zeros(k, k);
        let mut xty = DVector::zeros(k);
        let mut yty = 0.0;
        let mut n = 0;
        for s in samples {
            if s.k() != k {
                return Err(Error::domain("cannot pool regressions of different dimension"));
            }
            let sxty = &s.xtx * &s.beta_hat;
            yty += s.s + s.beta_hat.dot(&sxty);
            xty += sxty;
            xtx += &s.xtx;
            n += s.n;
        }
        let beta_hat = xtx.clone().cholesky().expect("sum of positive definite matrices").solve(&xty);
        let s = (yty - beta_hat.dot(&xty)).max(0.0);
        Self::new(n, xtx, beta_hat, s)
    }

    pub fn k(&self) -> usize {
        self.beta_hat.len()
    }

    /// `X'Y`, recovered as `X'X β̂`.
    pub fn xty(&self) -> DVector<f64> {
        &self.xtx * &self.beta_hat
    }

    /// `Y'Y = S + β̂'X'Xβ̂`.
    pub fn yty(&self) -> f64 {
        self.s + self.beta_hat.dot(&self.xty())
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Sample size, mean and sample standard deviation (`n − 1` divisor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormalSummary")]
pub struct NormalSummary {
    pub n: u64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Deserialize)]
struct RawNormalSummary {
    n: u64,
    mean: f64,
    sd: f64,
}

impl TryFrom<RawNormalSummary> for NormalSummary {
    type Error = Error;
    fn try_from(r: RawNormalSummary) -> Result<Self> {
        NormalSummary::new(r.n, r.mean, r.sd)
    }
}

impl NormalSummary {
    pub fn new(n: u64, mean: f64, sd: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("a normal summary needs n >= 2, got {n}")));
        }
        if !mean.is_finite() || !(sd >= 0.0 && sd.is_finite()) {
            return Err(Error::domain(format!("invalid summary mean = {mean}, sd = {sd}")));
        }
        Ok(Self { n, mean, sd })
    }

    pub fn from_observations(x: &[f64]) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite observation"));
        }
        let (mean, sd) = crate::numkit::mean_and_sd(x);
        Self::new(x.len() as u64, mean, sd)
    }

    /// Intercept-only regression: `X'X = [n]`, `β̂ = [mean]`, `S = (n − 1)sd²`.
    pub fn to_linear(&self) -> NormalLinearData {
        NormalLinearData {
            n: self.n,
            xtx: DMatrix::from_element(1, 1, self.n as f64),
            beta_hat: DVector::from_element(1, self.mean),
            s: (self.n - 1) as f64 * self.sd * self.sd,
        }
    }
}

impl From<NormalSummary> for NormalLinearData {
    fn from(s: NormalSummary) -> Self {
        s.to_linear()
    }
}

/// Average of the sufficient-statistic functions over a sample.
///
/// Two samples with equal statistics are fully compatible; under a uniform
/// prior on the power parameter the marginal posterior of δ then peaks at 1.
pub trait CompatibilityStatistic {
    fn compatibility_statistic(&self) -> Result<Vec<f64>>;
}

impl CompatibilityStatistic for BinomialData {
    fn compatibility_statistic(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(Error::domain("compatibility statistic undefined for n = 0"));
        }
        Ok(vec![self.y as f64 / self.n as f64])
    }
}

impl CompatibilityStatistic for MultinomialData {
    /// Cell proportions with the last (redundant) coordinate dropped.
    fn compatibility_statistic(&self) -> Result<Vec<f64>> {
        let n = self.total();
        if n == 0 {
            return Err(Error::domain("compatibility statistic undefined for n = 0"));
        }
        Ok(self.counts[..self.k() - 1].iter().map(|&c| c as f64 / n as f64).collect())
    }
}

impl CompatibilityStatistic for NormalSummary {
    /// `[mean of x, mean of x²]`.
    fn compatibility_statistic(&self) -> Result<Vec<f64>> {
        let n = self.n as f64;
        let second = ((n - 1.0) * self.sd * self.sd + n * self.mean * self.mean) / n;
        Ok(vec![self.mean, second])
    }
}

impl CompatibilityStatistic for NormalLinearData {
    /// `[X'Y/n, Y'Y/n, upper triangle of X'X/n]`; for an intercept-only
    /// design the leading two entries are the first two sample moments.
    fn compatibility_statistic(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(Error::domain("compatibility statistic undefined for n = 0"));
        }
        let n = self.n as f64;
        let mut t: Vec<f64> = self.xty().iter().map(|v| v / n).collect();
        t.push(self.yty() / n);
        let k = self.k();
        for i in 0..k {
            for j in i..k {
                t.push(self.xtx[(i, j)] / n);
            }
        }
        Ok(t)
    }
}

/// Beta(α, β) initial prior on a success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl BetaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn jeffreys() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if positive(self.alpha) && positive(self.beta) {
            Ok(())
        } else {
            Err(Error::domain(format!("Beta prior needs positive parameters, got ({}, {})", self.alpha, self.beta)))
        }
    }
}

/// Dirichlet(α₁..α_k) initial prior on cell probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPrior {
    pub alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let p = Self { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn symmetric(k: usize, a: f64) -> Self {
        Self { alpha: vec![a; k] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() >= 2 && self.alpha.iter().all(|&a| positive(a)) {
            Ok(())
        } else {
            Err(Error::domain("Dirichlet prior needs at least 2 positive parameters"))
        }
    }
}

/// Initial prior `π₀(β, σ²) ∝ σ^{−2a} · [N(μ₀, σ²R⁻¹)]^b` for the normal linear model.
///
/// With `b = 0` the prior on β is flat and `mu0`, `r` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalLinearPrior {
    pub a: f64,
    pub b: u8,
    #[serde(default, with = "serde_vector")]
    pub mu0: DVector<f64>,
    #[serde(default, with = "serde_matrix")]
    pub r: DMatrix<f64>,
}

impl NormalLinearPrior {
    /// Flat prior on β (`b = 0`).
    pub fn flat(a: f64) -> Self {
        Self { a, b: 0, mu0: DVector::zeros(0), r: DMatrix::zeros(0, 0) }
    }

    /// Conjugate normal prior on β (`b = 1`).
    pub fn conjugate(a: f64, mu0: DVector<f64>, r: DMatrix<f64>) -> Self {
        Self { a, b: 1, mu0, r }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !positive(self.a) {
            return Err(Error::domain(format!("prior exponent a must be positive, got {}", self.a)));
        }
        match self.b {
            0 => Ok(()),
            1 => {
                if self.mu0.len() != k || self.r.nrows() != k || self.r.ncols() != k {
                    return Err(Error::domain(format!("mu0 and R must have dimension {k} when b = 1")));
                }
                if self.r.clone().cholesky().is_none() {
                    return Err(Error::domain("R must be positive definite"));
                }
                Ok(())
            }
            b => Err(Error::domain(format!("b must be 0 or 1, got {b}"))),
        }
    }

    /// Smallest δ at which the powered prior is proper: `max(0, ((1−b)k + 2 − 2a)/n₀)`.
    pub fn delta_min(&self, k: usize, n0: u64) -> f64 {
        let num = (1.0 - self.b as f64) * k as f64 + 2.0 - 2.0 * self.a;
        (num / n0 as f64).max(0.0)
    }
}

/// Initial prior on the model parameter, one variant per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConjugatePrior {
    Beta(BetaPrior),
    Dirichlet(DirichletPrior),
    NormalLinear(NormalLinearPrior),
}

/// Initial prior on the power parameter δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaPrior {
    Beta { alpha_delta: f64, beta_delta: f64 },
    Fixed { delta0: f64 },
}

impl Default for DeltaPrior {
    fn default() -> Self {
        DeltaPrior::uniform()
    }
}

impl DeltaPrior {
    pub fn uniform() -> Self {
        DeltaPrior::Beta { alpha_delta: 1.0, beta_delta: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaPrior::Beta { alpha_delta, beta_delta } if positive(alpha_delta) && positive(beta_delta) => Ok(()),
            DeltaPrior::Fixed { delta0 } if (0.0..=1.0).contains(&delta0) => Ok(()),
            other => Err(Error::domain(format!("invalid delta prior {other:?}"))),
        }
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match *self {
            DeltaPrior::Fixed { delta0 } => Some(delta0),
            DeltaPrior::Beta { .. } => None,
        }
    }

    /// Normalized log density of a Beta prior; zero for the degenerate prior.
    pub fn log_density(&self, delta: f64) -> f64 {
        match *self {
            DeltaPrior::Fixed { .. } => 0.0,
            DeltaPrior::Beta { alpha_delta: a, beta_delta: b } => {
                if !(0.0..=1.0).contains(&delta) {
                    return f64::NEG_INFINITY;
                }
                let term = |e: f64, x: f64| if e == 1.0 { 0.0 } else { (e - 1.0) * x.ln() };
                term(a, delta) + term(b, 1.0 - delta) - ln_beta(a, b)
            }
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// A current sample and its (pooled) historical counterpart.
#[derive(Debug, Clone, PartialEq)]
pub enum DataPair {
    Binomial { historical: BinomialData, current: BinomialData },
    Multinomial { historical: MultinomialData, current: MultinomialData },
    Normal { historical: NormalLinearData, current: NormalLinearData },
}

impl DataPair {
    pub fn family(&self) -> &'static str {
        match self {
            DataPair::Binomial { .. } => "binomial",
            DataPair::Multinomial { .. } => "multinomial",
            DataPair::Normal { .. } => "normal",
        }
    }
}

/// JSON input document: `{"family": ..., "current": {...}, "historical": [{...}]}`.
///
/// Several historical samples are pooled into one before analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dataset {
    Binomial { current: BinomialData, historical: Vec<BinomialData> },
    Multinomial { current: MultinomialData, historical: Vec<MultinomialData> },
    NormalSummary { current: NormalSummary, historical: Vec<NormalSummary> },
    NormalLinear { current: NormalLinearData, historical: Vec<NormalLinearData> },
}

impl Dataset {
    /// Parse JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid dataset JSON: {e}")))?;
        let family = value
            .get("family")
            .and_then(|f| f.as_str())
            .ok_or_else(|| Error::Config("dataset is missing the string field `family`".into()))?;
        // Each family is parsed on its own so that errors carry a field path.
        fn body<T: serde::de::DeserializeOwned>(value: &serde_json::Value) -> Result<(T, Vec<T>)> {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Body<T> {
                #[allow(dead_code)]
                family: String,
                current: T,
                historical: Vec<T>,
            }
            let b: Body<T> = serde_path_to_error::deserialize(value).map_err(|e| {
                let path = e.path().to_string();
                Error::Config(format!("invalid dataset at `{path}`: {}", e.into_inner()))
            })?;
            Ok((b.current, b.historical))
        }
        Ok(match family {
            "binomial" => body(&value).map(|(current, historical)| Dataset::Binomial { current, historical })?,
            "multinomial" => body(&value).map(|(current, historical)| Dataset::Multinomial { current, historical })?,
            "normal_summary" => {
                body(&value).map(|(current, historical)| Dataset::NormalSummary { current, historical })?
            }
            "normal_linear" => body(&value).map(|(current, historical)| Dataset::NormalLinear { current, historical })?,
            other => {
                return Err(Error::Config(format!(
                    "unknown family `{other}` (expected binomial, multinomial, normal_summary or normal_linear)"
                )))
            }
        })
    }

    pub fn to_pair(&self) -> Result<DataPair> {
        fn nonempty<T>(h: &[T]) -> Result<()> {
            if h.is_empty() {
                Err(Error::Config("dataset has no historical sample".into()))
            } else {
                Ok(())
            }
        }
        Ok(match self {
            Dataset::Binomial { current, historical } => {
                nonempty(historical)?;
                DataPair::Binomial { historical: BinomialData::pool(historical), current: *current }
            }
            Dataset::Multinomial { current, historical } => {
                nonempty(historical)?;
                let historical = MultinomialData::pool(historical)?;
                if historical.k() != current.k() {
                    return Err(Error::domain(format!(
                        "historical data have {} cells but current data have {}",
                        historical.k(),
                        current.k()
                    )));
                }
                DataPair::Multinomial { historical, current: current.clone() }
            }
            Dataset::NormalSummary { current, historical } => {
                nonempty(historical)?;
                let hist: Vec<_> = historical.iter().map(NormalSummary::to_linear).collect();
                DataPair::Normal { historical: NormalLinearData::pool(&hist)?, current: current.to_linear() }
            }
            Dataset::NormalLinear { current, historical } => {
                nonempty(historical)?;
                let historical = NormalLinearData::pool(historical)?;
                if historical.k() != current.k() {
                    return Err(Error::domain("historical and current designs have different dimension"));
                }
                DataPair::Normal { historical, current: current.clone() }
            }
        })
    }
}

mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(D::Error::custom("matrix must be square"));
        }
        Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binomial_statistic() {
        let d = BinomialData::new(20, 13).unwrap();
        assert_eq!(d.compatibility_statistic().unwrap(), vec![0.65]);
        assert!(BinomialData::new(0, 0).unwrap().compatibility_statistic().is_err());
        assert!(BinomialData::new(3, 4).is_err());
    }

    #[test]
    fn multinomial_statistic_drops_last_cell() {
        let d = MultinomialData::new(vec![3, 11, 3, 669]).unwrap();
        let t = d.compatibility_statistic().unwrap();
        assert_eq!(t, vec![3.0 / 686.0, 11.0 / 686.0, 3.0 / 686.0]);
    }

    #[test]
    fn normal_summary_statistic_is_first_two_moments() {
        let s = NormalSummary::from_observations(&[-1.0, 0.0, 0.0, 1.0]).unwrap();
        let t = s.compatibility_statistic().unwrap();
        assert!(t[0].abs() < 1e-15);
        assert!((t[1] - 0.5).abs() < 1e-15);
        let lin = s.to_linear().compatibility_statistic().unwrap();
        assert!((lin[0] - t[0]).abs() < 1e-15 && (lin[1] - t[1]).abs() < 1e-15);
    }

    #[test]
    fn outcomes_and_pooling() {
        assert_eq!(BinomialData::from_outcomes(&[true, false, true, true]), BinomialData { n: 4, y: 3 });
        let hist = [(576, 417), (111, 90), (62, 49), (487, 376)].map(|(n, y)| BinomialData::new(n, y).unwrap());
        assert_eq!(BinomialData::pool(&hist), BinomialData { n: 1236, y: 932 });
        let m = MultinomialData::from_categories(&[0, 2, 2, 1], 3).unwrap();
        assert_eq!(m.counts, vec![1, 1, 2]);
        assert!(MultinomialData::from_categories(&[3], 3).is_err());
    }

    #[test]
    fn summary_to_linear() {
        let lin = NormalSummary::new(16, 6.91, 0.90).unwrap().to_linear();
        assert_eq!(lin.n, 16);
        assert_eq!(lin.xtx[(0, 0)], 16.0);
        assert_eq!(lin.beta_hat[0], 6.91);
        assert!((lin.s - 12.15).abs() < 1e-12);
    }

    #[test]
    fn design_reduction() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 4.0, 8.0]);
        let d = NormalLinearData::from_design(&x, &y).unwrap();
        // Ordinary least squares by hand: slope 2.2, intercept 0.7.
        assert!((d.beta_hat[0] - 0.7).abs() < 1e-12 && (d.beta_hat[1] - 2.2).abs() < 1e-12);
        let fitted = [0.7, 2.9, 5.1, 7.3];
        let rss: f64 = fitted.iter().zip(y.iter()).map(|(f, v)| (v - f) * (v - f)).sum();
        assert!((d.s - rss).abs() < 1e-10);
        let collinear = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(NormalLinearData::from_design(&collinear, &y).is_err());
    }

    #[test]
    fn multinomial_two_cells_is_binomial() {
        let m = MultinomialData::new(vec![7, 5]).unwrap();
        assert_eq!(m.as_binomial(), Some(BinomialData { n: 12, y: 7 }));
        assert_eq!(MultinomialData::new(vec![1, 2, 3]).unwrap().as_binomial(), None);
    }

    #[test]
    fn delta_prior_density() {
        let u = DeltaPrior::uniform();
        assert_eq!(u.log_density(0.0), 0.0);
        assert_eq!(u.log_density(1.0), 0.0);
        assert_eq!(u.log_density(1.5), f64::NEG_INFINITY);
        let b = DeltaPrior::Beta { alpha_delta: 2.0, beta_delta: 3.0 };
        // Beta(2,3) density 12 δ (1−δ)² at δ = 0.5 → 1.5
        assert!((b.log_density(0.5) - 1.5f64.ln()).abs() < 1e-12);
        assert!(DeltaPrior::Fixed { delta0: 1.2 }.validate().is_err());
    }

    #[test]
    fn delta_min_bound() {
        let p = NormalLinearPrior::flat(1.0);
        assert!((p.delta_min(1, 75) - 1.0 / 75.0).abs() < 1e-15);
        assert_eq!(NormalLinearPrior::flat(2.0).delta_min(1, 10), 0.0);
    }

    #[test]
    fn dataset_json_roundtrip() {
        let text = r#"{"family":"binomial","current":{"n":592,"y":426},
            "historical":[{"n":576,"y":417},{"n":111,"y":90},{"n":62,"y":49},{"n":487,"y":376}]}"#;
        let ds = Dataset::from_json(text).unwrap();
        match ds.to_pair().unwrap() {
            DataPair::Binomial { historical, current } => {
                assert_eq!(historical, BinomialData { n: 1236, y: 932 });
                assert_eq!(current.y, 426);
            }
            other => panic!("unexpected {other:?}"),
        }
        let back = Dataset::from_json(&serde_json::to_string(&ds).unwrap()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn dataset_errors_name_the_field() {
        let bad = r#"{"family":"binomial","current":{"n":5,"y":9},"historical":[]}"#;
        let msg = Dataset::from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("current"), "{msg}");
        let bad = r#"{"family":"normal_linear","current":{"n":5,"xtx":[[1,2],[3]],"beta_hat":[1,2],"s":1},"historical":[]}"#;
        assert!(Dataset::from_json(bad).is_err());
    }

    #[test]
    fn normal_linear_json() {
        let text = r#"{"n":10,"xtx":[[10,2],[2,5]],"beta_hat":[1.0,-0.5],"s":3.0}"#;
        let d: NormalLinearData = serde_json::from_str(text).unwrap();
        assert_eq!(d.xtx[(0, 1)], 2.0);
        let again: NormalLinearData = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(again, d);
    }

    fn design_and_response() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
        (4usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec(-3.0f64..3.0, n),
                proptest::collection::vec(-5.0f64..5.0, n),
            )
                .prop_map(move |(x1, y)| {
                    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x1[i] });
                    (x, DVector::from_vec(y))
                })
        })
    }

    proptest! {
        #[test]
        fn sufficient_statistics_ignore_row_order((x, y) in design_and_response(), seed in 0u64..1000) {
            prop_assume!(NormalLinearData::from_design(&x, &y).is_ok());
            let a = NormalLinearData::from_design(&x, &y).unwrap();
            let n = x.nrows();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.rotate_left((seed as usize) % n);
            perm.swap(0, n - 1);
            let xp = DMatrix::from_fn(n, 2, |i, j| x[(perm[i], j)]);
            let yp = DVector::from_fn(n, |i, _| y[perm[i]]);
            let b = NormalLinearData::from_design(&xp, &yp).unwrap();
            prop_assert!((a.xtx - b.xtx).abs().max() < 1e-9);
            prop_assert!((a.beta_hat - b.beta_hat).abs().max() < 1e-7);
            prop_assert!((a.s - b.s).abs() < 1e-7 * (1.0 + a.s));
        }

        #[test]
        fn statistic_of_concatenation_is_shared_value(n in 1u64..200, y_frac in 0.0f64..1.0, reps in 2u64..5) {
            let y = (y_frac * n as f64).floor() as u64;
            let d = BinomialData::new(n, y).unwrap();
            let joined = BinomialData::pool(&vec![d; reps as usize]);
            prop_assert!((joined.compatibility_statistic().unwrap()[0] - d.compatibility_statistic().unwrap()[0]).abs() < 1e-15);
        }

        #[test]
        fn summary_statistic_survives_duplication(x in proptest::collection::vec(-10.0f64..10.0, 2..30)) {
            let one = NormalSummary::from_observations(&x).unwrap().compatibility_statistic().unwrap();
            let twice: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
            let two = NormalSummary::from_observations(&twice).unwrap().compatibility_statistic().unwrap();
            for (a, b) in one.iter().zip(&two) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn pooled_regression_matches_stacked_design(
            (x1, y1) in design_and_response(),
            (x2, y2) in design_and_response(),
        ) {
            let a = NormalLinearData::from_design(&x1, &y1);
            let b = NormalLinearData::from_design(&x2, &y2);
            prop_assume!(a.is_ok() && b.is_ok());
            let (n1, n2) = (x1.nrows(), x2.nrows());
            let x = DMatrix::from_fn(n1 + n2, 2, |i, j| if i < n1 { x1[(i, j)] } else { x2[(i - n1, j)] });
            let y = DVector::from_fn(n1 + n2, |i, _| if i < n1 { y1[i] } else { y2[i - n1] });
            let stacked = NormalLinearData::from_design(&x, &y).unwrap();
            let pooled = NormalLinearData::pool(&[a.unwrap(), b.unwrap()]).unwrap();
            prop_assert!((pooled.beta_hat - stacked.beta_hat).abs().max() < 1e-6);
            prop_assert!((pooled.s - stacked.s).abs() < 1e-6 * (1.0 + stacked.s));
        }
    }
}
