//! Retained draws, their column layout and CSV round-tripping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::diagnostics::{rhat, RhatReport};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Parameters};

/// Transition probabilities used when the model has no outbreak term.
/// They never enter the likelihood or prior.
pub const INERT_GAMMA: (f64, f64) = (0.1, 0.2);

/// Column layout of a flattened [`Parameters`] vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub times: usize,
    pub cycle: usize,
    pub locations: usize,
    pub covariate_dim: usize,
    pub has_outbreaks: bool,
}

impl ParameterLayout {
    pub fn new(spec: &ModelSpec, times: usize, locations: usize) -> Self {
        Self {
            times,
            cycle: spec.cycle_length,
            locations,
            covariate_dim: spec.covariate_dim(),
            has_outbreaks: spec.variant.has_outbreaks(),
        }
    }

    pub fn dim(&self) -> usize {
        self.times + self.cycle + self.locations + 3 + self.covariate_dim + if self.has_outbreaks { 2 } else { 0 }
    }

    pub fn trend_range(&self) -> std::ops::Range<usize> {
        0..self.times
    }

    pub fn seasonal_range(&self) -> std::ops::Range<usize> {
        self.times..self.times + self.cycle
    }

    pub fn spatial_range(&self) -> std::ops::Range<usize> {
        let a = self.times + self.cycle;
        a..a + self.locations
    }

    /// Index of `kappa_r`; `kappa_s` and `kappa_u` follow.
    pub fn kappa_offset(&self) -> usize {
        self.times + self.cycle + self.locations
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        let a = self.kappa_offset() + 3;
        a..a + self.covariate_dim
    }

    /// Index of `gamma01` (followed by `gamma10`), if sampled.
    pub fn gamma_offset(&self) -> Option<usize> {
        self.has_outbreaks.then(|| self.beta_range().end)
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend((1..=self.times).map(|t| format!("r[{t}]")));
        out.extend((1..=self.cycle).map(|c| format!("s[{c}]")));
        out.extend((1..=self.locations).map(|i| format!("u[{i}]")));
        out.extend(["kappa_r", "kappa_s", "kappa_u"].map(String::from));
        out.extend((1..=self.covariate_dim).map(|j| format!("beta[{j}]")));
        if self.has_outbreaks {
            out.extend(["gamma01", "gamma10"].map(String::from));
        }
        out
    }

    pub fn pack(&self, p: &Parameters) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend(&p.trend);
        out.extend(&p.seasonal);
        out.extend(&p.spatial);
        out.extend([p.kappa_r, p.kappa_s, p.kappa_u]);
        out.extend(&p.beta);
        if self.has_outbreaks {
            out.extend([p.gamma01, p.gamma10]);
        }
        out
    }

    pub fn unpack(&self, v: &[f64]) -> Parameters {
        let k = self.kappa_offset();
        let (gamma01, gamma10) = match self.gamma_offset() {
            Some(g) => (v[g], v[g + 1]),
            None => INERT_GAMMA,
        };
        Parameters {
            trend: v[self.trend_range()].to_vec(),
            seasonal: v[self.seasonal_range()].to_vec(),
            spatial: v[self.spatial_range()].to_vec(),
            kappa_r: v[k],
            kappa_s: v[k + 1],
            kappa_u: v[k + 2],
            beta: v[self.beta_range()].to_vec(),
            gamma01,
            gamma10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub spec: ModelSpec,
    pub layout: ParameterLayout,
    pub parameter_names: Vec<String>,
    /// `chains[c][draw][k]`.
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Per chain, post-warmup acceptance rate of every MH block.
    pub acceptance_rates: Vec<BTreeMap<String, f64>>,
}

impl PosteriorSamples {
    pub fn new(spec: ModelSpec, layout: ParameterLayout, chains: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if chains.is_empty() || chains.iter().any(|c| c.is_empty()) {
            return Err(Error::InsufficientDraws("no retained draws".into()));
        }
        if chains.iter().flatten().any(|row| row.len() != layout.dim()) {
            return Err(Error::DimensionMismatch(format!("draws must have {} columns", layout.dim())));
        }
        let n = chains.len();
        Ok(Self {
            spec,
            layout,
            parameter_names: layout.names(),
            chains,
            acceptance_rates: vec![BTreeMap::new(); n],
        })
    }

    /// A single chain built from parameter values.
    pub fn from_parameters(spec: ModelSpec, draws: &[Parameters]) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::InsufficientDraws("no draws".into()))?;
        let layout = ParameterLayout::new(&spec, first.trend.len(), first.spatial.len());
        Self::new(spec, layout, vec![draws.iter().map(|p| layout.pack(p)).collect()])
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// All draws, chain by chain.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flatten().map(Vec::as_slice)
    }

    pub fn parameters(&self) -> impl Iterator<Item = Parameters> + '_ {
        self.rows().map(|r| self.layout.unpack(r))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    /// Pooled draws of column `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.index_of(name).map(|k| self.column(k))
    }

    pub fn rhat(&self) -> Result<RhatReport> {
        let len = self.chains.iter().map(Vec::len).min().unwrap_or(0);
        let trimmed: Vec<Vec<Vec<f64>>> = self.chains.iter().map(|c| c[..len].to_vec()).collect();
        rhat(&trimmed, &self.parameter_names)
    }

    /// Writes `prefix{c}.csv` per chain into `dir`.
    pub fn write_csv(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut paths = Vec::new();
        for (c, chain) in self.chains.iter().enumerate() {
            let path = dir.join(format!("{prefix}{}.csv", c + 1));
            let mut text = self.parameter_names.join(",");
            text.push('\n');
            for row in chain {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Reads per-chain CSVs written by [`write_csv`](Self::write_csv).
    pub fn read_csv(spec: ModelSpec, times: usize, locations: usize, paths: &[PathBuf]) -> Result<Self> {
        let layout = ParameterLayout::new(&spec, times, locations);
        let names = layout.names();
        let mut chains = Vec::new();
        for path in paths {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_path(path)
                .map_err(|e| Error::Csv {
                    path: path.clone(),
                    source: e,
                })?;
            let header: Vec<String> = rdr
                .headers()
                .map_err(|e| Error::Csv {
                    path: path.clone(),
                    source: e,
                })?
                .iter()
                .map(|s| s.trim().to_owned())
                .collect();
            if header != names {
                return Err(Error::DimensionMismatch(format!(
                    "{}: sample columns do not match model {} with T={times}, I={locations}",
                    path.display(),
                    spec.variant
                )));
            }
            let mut rows = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::Csv {
                    path: path.clone(),
                    source: e,
                })?;
                let row = rec
                    .iter()
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("{}: bad number `{s}`", path.display())))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(row);
            }
            chains.push(rows);
        }
        Self::new(spec, layout, chains)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn params(p: usize) -> Parameters {
        Parameters {
            trend: vec![-14.0, -13.5, -13.25],
            seasonal: vec![0.5, -0.25, -0.25],
            spatial: vec![0.1, -0.1],
            kappa_r: 1e4,
            kappa_s: 3.0,
            kappa_u: 25.0,
            beta: vec![1.65; p],
            gamma01: 0.1,
            gamma10: 0.2,
        }
    }

    #[test]
    fn pack_round_trip_and_names() {
        let spec = ModelSpec::new(Variant::III, 3).unwrap();
        let layout = ParameterLayout::new(&spec, 3, 2);
        let p = params(2);
        assert_eq!(layout.unpack(&layout.pack(&p)), p);
        let names = layout.names();
        assert_eq!(names.len(), layout.dim());
        assert_eq!(names[layout.beta_range().start], "beta[1]");
        assert_eq!(names.last().unwrap(), "gamma10");
    }

    #[test]
    fn variant_zero_has_no_outbreak_columns() {
        let spec = ModelSpec::new(Variant::Zero, 3).unwrap();
        let layout = ParameterLayout::new(&spec, 3, 2);
        let names = layout.names();
        assert!(!names.iter().any(|n| n.starts_with("beta") || n.starts_with("gamma")));
        assert_eq!(layout.dim(), 3 + 3 + 2 + 3);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::new(Variant::I, 3).unwrap();
        let mut second = params(1);
        second.kappa_s = 1.0 / 3.0;
        let samples = PosteriorSamples::from_parameters(spec, &[params(1), second]).unwrap();
        let paths = samples.write_csv(dir.path(), "chain").unwrap();
        let back = PosteriorSamples::read_csv(spec, 3, 2, &paths).unwrap();
        assert_eq!(back.chains, samples.chains);
        assert!(PosteriorSamples::read_csv(spec, 4, 2, &paths).is_err());
    }
}
