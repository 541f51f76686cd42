//! Posterior summaries used to judge a fit: predictive bands for monthly
//! totals, ROC curves for outbreak classification, correlation between
//! outbreak maps and relative risks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::outbreak_probability_matrix;
use crate::math::{derive_seed, pairwise_sum, quantile_sorted};
use crate::model::{stationary_distribution, Parameters, SurveillanceModel};
use crate::sampler::PosteriorSamples;

/// Minimum number of retained draws for a predictive check.
pub const MIN_PREDICTIVE_DRAWS: usize = 100;

/// How replicate outbreak indicators are drawn for each posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutbreakReplication {
    /// A fresh stationary path from the draw's `Γ`.
    #[default]
    FreshPath,
    /// Independent Bernoulli draws from the smoothed probabilities given
    /// the observed data.
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveBand {
    /// Observed total per time point over non-missing cells; `None` when
    /// every cell is missing.
    pub observed: Vec<Option<f64>>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
    /// Share of observed totals inside `[lower, upper]`.
    pub coverage_fraction: f64,
}

fn label_stream(label: &str) -> u64 {
    // FNV-1a, so replicates follow the location rather than its index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn replicate_totals(
    model: &SurveillanceModel,
    params: &Parameters,
    mode: OutbreakReplication,
    seed: u64,
) -> Result<Vec<f64>> {
    let data = model.data();
    let (n, t_len) = (data.num_locations(), data.num_times());
    let mut totals = vec![0.0; t_len];
    let has_outbreaks = model.spec().variant.has_outbreaks();
    let smoothed = (has_outbreaks && mode == OutbreakReplication::Smoothed).then(|| outbreak_probability_matrix(model, params));
    let delta = stationary_distribution(params.gamma01, params.gamma10)?;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, label_stream(&data.location_labels()[i])));
        let mut state = 0u8;
        for t in 0..t_len {
            if has_outbreaks {
                let u: f64 = rng.random();
                state = match (&smoothed, t) {
                    (Some(p), _) => u8::from(u < p[i][t]),
                    (None, 0) => u8::from(u < delta[1]),
                    (None, _) if state == 0 => u8::from(u < params.gamma01),
                    (None, _) => u8::from(u >= params.gamma10),
                };
            }
            let mean = model.poisson_mean(params, state, i, t);
            let y = if mean > 0.0 {
                Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng)
            } else {
                0.0
            };
            if data.count(i, t).is_some() {
                totals[t] += y;
            }
        }
    }
    Ok(totals)
}

/// Pointwise 95% bands of replicated totals over locations, one replicate
/// per retained draw. Outbreak covariates come from the observed counts.
pub fn posterior_predictive<R: Rng + ?Sized>(
    model: &SurveillanceModel,
    samples: &PosteriorSamples,
    mode: OutbreakReplication,
    rng: &mut R,
) -> Result<PredictiveBand> {
    let n_draws = samples.total_draws();
    if n_draws < MIN_PREDICTIVE_DRAWS {
        return Err(Error::InsufficientDraws(format!(
            "posterior predictive check needs at least {MIN_PREDICTIVE_DRAWS} draws, got {n_draws}"
        )));
    }
    let data = model.data();
    if samples.layout.times != data.num_times() || samples.layout.locations != data.num_locations() {
        return Err(Error::DimensionMismatch("samples do not match the data".into()));
    }
    let base: u64 = rng.random();
    let params: Vec<Parameters> = samples.parameters().collect();
    let reps: Vec<Vec<f64>> = params
        .par_iter()
        .enumerate()
        .map(|(k, p)| replicate_totals(model, p, mode, derive_seed(base, k as u64)))
        .collect::<Result<_>>()?;

    let t_len = data.num_times();
    let observed: Vec<Option<f64>> = (0..t_len)
        .map(|t| {
            let cells: Vec<u64> = (0..data.num_locations()).filter_map(|i| data.count(i, t)).collect();
            (!cells.is_empty()).then(|| cells.iter().sum::<u64>() as f64)
        })
        .collect();
    let (mut lower, mut mean, mut upper) = (Vec::with_capacity(t_len), Vec::with_capacity(t_len), Vec::with_capacity(t_len));
    for t in 0..t_len {
        let mut col: Vec<f64> = reps.iter().map(|r| r[t]).collect();
        mean.push(pairwise_sum(&col) / col.len() as f64);
        col.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&col, 0.025));
        upper.push(quantile_sorted(&col, 0.975));
    }
    let checked: Vec<bool> = observed
        .iter()
        .enumerate()
        .filter_map(|(t, o)| o.map(|y| lower[t] <= y && y <= upper[t]))
        .collect();
    let coverage_fraction = if checked.is_empty() {
        0.0
    } else {
        checked.iter().filter(|&&c| c).count() as f64 / checked.len() as f64
    };
    Ok(PredictiveBand {
        observed,
        lower,
        mean,
        upper,
        coverage_fraction,
    })
}

/// Posterior mean over draws of `P(x_it = 1 | y, θ)`, as `[i][t]`. Uses at
/// most `max_draws` draws, evenly spaced.
pub fn posterior_outbreak_probabilities(
    model: &SurveillanceModel,
    samples: &PosteriorSamples,
    max_draws: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    let data = model.data();
    if samples.layout.times != data.num_times() || samples.layout.locations != data.num_locations() {
        return Err(Error::DimensionMismatch("samples do not match the data".into()));
    }
    let all: Vec<Parameters> = samples.parameters().collect();
    let keep = max_draws.unwrap_or(all.len()).clamp(1, all.len());
    let picked: Vec<&Parameters> = (0..keep).map(|k| &all[k * all.len() / keep]).collect();
    let maps: Vec<Vec<Vec<f64>>> = picked.par_iter().map(|p| outbreak_probability_matrix(model, p)).collect();
    let (n, t_len) = (data.num_locations(), data.num_times());
    Ok((0..n)
        .map(|i| {
            (0..t_len)
                .map(|t| {
                    let col: Vec<f64> = maps.iter().map(|m| m[i][t]).collect();
                    pairwise_sum(&col) / col.len() as f64
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve over cells `[i][t]`, optionally restricted to the locations in
/// `subset`. Thresholds sit at each distinct score; tied scores form one
/// step, so the trapezoidal AUC equals the Mann–Whitney statistic.
pub fn roc_auc(truth: &[Vec<u8>], scores: &[Vec<f64>], subset: Option<&[usize]>) -> Result<RocCurve> {
    if truth.len() != scores.len() || truth.iter().zip(scores).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::DimensionMismatch("truth and scores differ in shape".into()));
    }
    let rows: Vec<usize> = match subset {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&i| i >= truth.len()) {
                return Err(Error::OutOfRange(format!("location {bad} in subset")));
            }
            s.to_vec()
        }
        None => (0..truth.len()).collect(),
    };
    let mut cells: Vec<(f64, bool)> = Vec::new();
    for &i in &rows {
        for (&x, &s) in truth[i].iter().zip(&scores[i]) {
            if !s.is_finite() {
                return Err(Error::NonFinite(format!("score at location {i}")));
            }
            cells.push((s, x == 1));
        }
    }
    let pos = cells.iter().filter(|c| c.1).count() as f64;
    let neg = cells.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::invalid("ROC needs at least one outbreak and one non-outbreak cell"));
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut auc = 0.0;
    let mut k = 0;
    while k < cells.len() {
        let score = cells[k].0;
        while k < cells.len() && cells[k].0 == score {
            if cells[k].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp / neg, tp / pos);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocCurve { points, auc })
}

/// Pairwise Pearson correlations between flattened maps.
pub fn outbreak_correlation(maps: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    if maps.len() < 2 {
        return Err(Error::invalid("correlation needs at least two maps"));
    }
    let flat: Vec<Vec<f64>> = maps.iter().map(|m| m.iter().flatten().copied().collect()).collect();
    let shape: Vec<usize> = maps[0].iter().map(Vec::len).collect();
    if maps.iter().any(|m| m.iter().map(Vec::len).collect::<Vec<_>>() != shape) {
        return Err(Error::DimensionMismatch("maps differ in shape".into()));
    }
    let centred: Vec<Vec<f64>> = flat
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let m = pairwise_sum(v) / v.len() as f64;
            let c: Vec<f64> = v.iter().map(|x| x - m).collect();
            if c.iter().all(|&x| x == 0.0) {
                return Err(Error::invalid(format!("map {k} has zero variance")));
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let dot = |a: &[f64], b: &[f64]| pairwise_sum(&a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<_>>());
    let norms: Vec<f64> = centred.iter().map(|c| dot(c, c).sqrt()).collect();
    let n = maps.len();
    let mut out = vec![vec![1.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let r = (dot(&centred[a], &centred[b]) / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            out[a][b] = r;
            out[b][a] = r;
        }
    }
    Ok(out)
}

/// Posterior median of `exp(u_i)` per location, relative to the geometric
/// mean risk.
pub fn relative_risks(samples: &PosteriorSamples) -> Vec<f64> {
    samples
        .layout
        .spatial_range()
        .map(|k| {
            let mut v: Vec<f64> = samples.column(k).into_iter().map(f64::exp).collect();
            v.sort_by(f64::total_cmp);
            quantile_sorted(&v, 0.5)
        })
        .collect()
}
