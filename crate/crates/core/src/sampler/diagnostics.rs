use serde::Serialize;

use super::Chain;
use crate::error::{Error, Result};

pub const MIN_DIAGNOSTIC_DRAWS: usize = 1000;

/// Effective sample size from autocorrelations truncated at the first
/// non-positive sum of an adjacent pair (initial positive sequence).
///
/// Returns `(ess, degenerate)`; a constant series is degenerate with ESS 1.
pub fn autocorrelation_ess(x: &[f64]) -> (f64, bool) {
    let n = x.len();
    if n < 2 {
        return (n as f64, true);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let var = autocov(0);
    if !(var > 0.0) || var < 1e-300 {
        return (1.0, true);
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / var;
        if pair <= 0.0 {
            break;
        }
        // Pair sums of a reversible chain are decreasing; enforce it to damp noise.
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    ((n as f64 / tau).min(n as f64 * n.ilog10().max(1) as f64), false)
}

/// Potential scale reduction over the halves of each chain.
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64> {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if chains.is_empty() || half < 2 {
        return Err(Error::domain("split R-hat needs chains with at least 4 draws"));
    }
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[c.len() - half..]]).collect();
    let n = half as f64;
    let stats: Vec<(f64, f64)> = pieces
        .iter()
        .map(|p| {
            let m = p.iter().sum::<f64>() / n;
            let v = p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            (m, v)
        })
        .collect();
    let k = stats.len() as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / k;
    let between = n * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let within = stats.iter().map(|s| s.1).sum::<f64>() / k;
    if within == 0.0 {
        return Ok(if between == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let pooled = (n - 1.0) / n * within + between / n;
    Ok((pooled / within).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub names: Vec<String>,
    /// ESS summed over chains.
    pub ess: Vec<f64>,
    /// Split R-hat per column, when at least two chains were supplied.
    pub rhat: Option<Vec<f64>>,
    /// Columns that never moved.
    pub degenerate: Vec<String>,
}

/// ESS for every column and split R-hat across chains.
pub fn diagnostics(chains: &[Chain]) -> Result<DiagnosticsReport> {
    let first = chains.first().ok_or_else(|| Error::domain("no chains to diagnose"))?;
    if let Some(short) = chains.iter().find(|c| c.draws.len() < MIN_DIAGNOSTIC_DRAWS) {
        return Err(Error::domain(format!(
            "diagnostics need at least {MIN_DIAGNOSTIC_DRAWS} retained draws, a chain has {}",
            short.draws.len()
        )));
    }
    if chains.iter().any(|c| c.names != first.names) {
        return Err(Error::domain("chains have different columns"));
    }
    let mut ess = Vec::new();
    let mut rhat = Vec::new();
    let mut degenerate = Vec::new();
    for (j, name) in first.names.iter().enumerate() {
        let columns: Vec<Vec<f64>> = chains.iter().map(|c| c.draws.column(j)).collect();
        let mut total = 0.0;
        let mut flat = true;
        for col in &columns {
            let (e, d) = autocorrelation_ess(col);
            total += e;
            flat &= d;
        }
        if flat {
            log::warn!("column {name} is constant across all draws");
            degenerate.push(name.clone());
        }
        ess.push(total);
        if chains.len() >= 2 {
            let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
            rhat.push(split_rhat(&refs)?);
        }
    }
    Ok(DiagnosticsReport {
        names: first.names.clone(),
        ess,
        rhat: (chains.len() >= 2).then_some(rhat),
        degenerate,
    })
}
