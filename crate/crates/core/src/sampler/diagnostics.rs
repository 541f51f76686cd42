//! Rank-normalised split R-hat (Vehtari et al. 2021).

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatEntry {
    pub name: String,
    pub value: f64,
    /// Every draw of the parameter is identical; `value` is reported as 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatReport {
    pub entries: Vec<RhatEntry>,
}

impl RhatReport {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst(&self) -> Option<&RhatEntry> {
        self.entries.iter().max_by(|a, b| a.value.total_cmp(&b.value))
    }
}

/// Average ranks (1-based) of the pooled values, ties averaged.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut j = k;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[k]] {
            j += 1;
        }
        let avg = (k + j) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=j] {
            out[i] = avg;
        }
        k = j + 1;
    }
    out
}

fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = pooled.len() as f64;
    let normal = Normal::standard();
    let z: Vec<f64> = ranks(&pooled)
        .into_iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (s + 0.25)))
        .collect();
    let mut out = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for c in chains {
        out.push(z[offset..offset + c.len()].to_vec());
        offset += c.len();
    }
    out
}

fn classic_rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains[0].len() / 2;
    let len = chains[0].len();
    chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[len - half..].to_vec()])
        .collect()
}

/// Rank-normalised split R-hat of one parameter: the larger of the bulk
/// and folded statistics. Returns `(value, degenerate)`.
pub fn rhat_single(chains: &[Vec<f64>]) -> Result<(f64, bool)> {
    if chains.len() < 2 {
        return Err(Error::invalid("R-hat needs at least 2 chains"));
    }
    let len = chains[0].len();
    if len < 4 || chains.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("R-hat needs equal chain lengths of at least 4"));
    }
    let first = chains[0][0];
    if chains.iter().flatten().all(|&x| x == first) {
        return Ok((1.0, true));
    }
    let halves = split(chains);
    let bulk = classic_rhat(&rank_normalize(&halves));
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let median = crate::math::quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let tail = classic_rhat(&rank_normalize(&folded));
    let value = if tail.is_nan() { bulk } else { bulk.max(tail) };
    Ok((value, false))
}

/// R-hat for every column of per-chain draw matrices (`chains[c][draw][k]`).
pub fn rhat(chains: &[Vec<Vec<f64>>], names: &[String]) -> Result<RhatReport> {
    if chains.len() < 2 {
        return Err(Error::invalid("R-hat needs at least 2 chains"));
    }
    let entries = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|row| row[k]).collect()).collect();
            let (value, degenerate) = rhat_single(&cols)?;
            Ok(RhatEntry {
                name: name.clone(),
                value,
                degenerate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RhatReport { entries })
}
