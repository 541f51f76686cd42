//! Synthetic surveillance data drawn from the model itself: RW2 trend,
//! Fourier seasonality, a constrained IGMRF spatial field, stationary
//! outbreak chains and Poisson counts.
//!
//! Every component draws from its own RNG stream derived from the master
//! seed, so datasets simulated for different outbreak variants share the
//! same trend, spatial field, outbreak paths and populations.

use std::path::Path;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{key_values, parse_value};
use crate::data::{parse_edge_list, Adjacency, StructureMatrix, SurveillanceData};
use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::model::{covariate_from_previous, outbreak_effect, stationary_distribution, Variant};

const STREAM_TREND: u64 = 1;
const STREAM_SPATIAL: u64 = 2;
const STREAM_OUTBREAKS: u64 = 3;
const STREAM_POPULATIONS: u64 = 4;
const STREAM_COUNTS: u64 = 5;

/// Largest Poisson mean accepted before aborting.
pub const MAX_POISSON_MEAN: f64 = 1e9;

const NINE_CITY_EDGES: &str = include_str!("../fixtures/nine_cities.edges");

/// Labels of the nine-city study: five small cities then four large ones.
pub fn nine_city_labels() -> Vec<String> {
    ["S1", "S2", "S3", "S4", "S5", "L1", "L2", "L3", "L4"]
        .map(String::from)
        .to_vec()
}

/// Border adjacency of the nine-city grid (bundled fixture).
pub fn nine_city_adjacency() -> Adjacency {
    parse_edge_list(NINE_CITY_EDGES, &nine_city_labels()).expect("bundled fixture is valid")
}

/// Outbreak coefficients used for each variant in the simulation study.
pub fn default_beta(variant: Variant) -> Vec<f64> {
    match variant {
        Variant::Zero => vec![],
        Variant::I | Variant::II | Variant::VII => vec![1.65],
        Variant::III => vec![1.25, 0.75],
        Variant::IV => vec![0.55],
        Variant::V => vec![0.49],
        Variant::VI => vec![0.35, 0.20],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub variant: Variant,
    pub times: usize,
    pub cycle_length: usize,
    /// Value of `r_1 = r_2`.
    pub intercept: f64,
    pub kappa_r: f64,
    pub amplitude: f64,
    /// Cycles per time step.
    pub frequency: f64,
    pub kappa_u: f64,
    pub gamma01: f64,
    pub gamma10: f64,
    pub beta: Vec<f64>,
    pub mean_populations: Vec<f64>,
    /// Relative sd of the lognormal population draw.
    pub population_jitter: f64,
    pub location_labels: Vec<String>,
    pub seed: u64,
}

impl SimulationConfig {
    /// Five years of monthly data in the nine-city layout.
    pub fn nine_city(variant: Variant) -> Self {
        Self {
            variant,
            times: 60,
            cycle_length: 12,
            intercept: -14.0,
            kappa_r: 1e4,
            amplitude: 1.4,
            frequency: 1.0 / 12.0,
            kappa_u: 25.0,
            gamma01: 0.1,
            gamma10: 0.2,
            beta: default_beta(variant),
            mean_populations: [5e5; 5].into_iter().chain([1e6; 4]).collect(),
            population_jitter: 0.05,
            location_labels: nine_city_labels(),
            seed: 1,
        }
    }

    pub fn locations(&self) -> usize {
        self.mean_populations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if self.times < 3 || self.cycle_length < 3 {
            return Err(Error::invalid("simulation needs times >= 3 and cycle_length >= 3"));
        }
        if self.mean_populations.is_empty() || self.mean_populations.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("mean populations must be positive"));
        }
        if self.location_labels.len() != self.locations() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} locations",
                self.location_labels.len(),
                self.locations()
            )));
        }
        if !(self.frequency > 0.0 && self.frequency <= 0.5) {
            return Err(Error::invalid("frequency must lie in (0, 0.5]"));
        }
        if !(self.kappa_r > 0.0) || !(self.kappa_u > 0.0) {
            return Err(Error::invalid("simulation precisions must be positive"));
        }
        if !unit(self.gamma01) || !unit(self.gamma10) {
            return Err(Error::invalid("transition probabilities must lie in (0, 1)"));
        }
        if self.beta.len() != self.variant.covariate_dim() {
            return Err(Error::DimensionMismatch(format!(
                "variant {} needs {} beta values, got {}",
                self.variant,
                self.variant.covariate_dim(),
                self.beta.len()
            )));
        }
        if !(self.population_jitter >= 0.0) || !self.intercept.is_finite() || !self.amplitude.is_finite() {
            return Err(Error::invalid("invalid jitter, intercept or amplitude"));
        }
        Ok(())
    }

    /// Starts from [`nine_city`](Self::nine_city) for the configured
    /// variant and applies the remaining `key=value` overrides. `beta` and
    /// `mean_populations` take comma-separated lists.
    pub fn from_config(text: &str) -> Result<Self> {
        let kv = key_values(text)?;
        let variant = kv
            .iter()
            .find(|(k, _)| k == "variant")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(Variant::I);
        let mut c = Self::nine_city(variant);
        let list = |k: &str, v: &str| -> Result<Vec<f64>> {
            v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_value(k, s.trim())).collect()
        };
        for (k, v) in &kv {
            match k.as_str() {
                "variant" => {}
                "times" => c.times = parse_value(k, v)?,
                "cycle_length" => c.cycle_length = parse_value(k, v)?,
                "intercept" => c.intercept = parse_value(k, v)?,
                "kappa_r" => c.kappa_r = parse_value(k, v)?,
                "amplitude" => c.amplitude = parse_value(k, v)?,
                "frequency" => c.frequency = parse_value(k, v)?,
                "kappa_u" => c.kappa_u = parse_value(k, v)?,
                "gamma01" => c.gamma01 = parse_value(k, v)?,
                "gamma10" => c.gamma10 = parse_value(k, v)?,
                "beta" => c.beta = list(k, v)?,
                "mean_populations" => c.mean_populations = list(k, v)?,
                "population_jitter" => c.population_jitter = parse_value(k, v)?,
                "location_labels" => c.location_labels = v.split(',').map(|s| s.trim().to_owned()).collect(),
                "seed" => c.seed = parse_value(k, v)?,
                _ => {}
            }
        }
        if c.location_labels.len() != c.locations() && !kv.iter().any(|(k, _)| k == "location_labels") {
            c.location_labels = (1..=c.locations()).map(|i| format!("loc{i}")).collect();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_config(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "variant={}\ntimes={}\ncycle_length={}\nintercept={}\nkappa_r={}\namplitude={}\nfrequency={}\nkappa_u={}\ngamma01={}\ngamma10={}\nbeta={}\nmean_populations={}\npopulation_jitter={}\nlocation_labels={}\nseed={}\n",
            self.variant,
            self.times,
            self.cycle_length,
            self.intercept,
            self.kappa_r,
            self.amplitude,
            self.frequency,
            self.kappa_u,
            self.gamma01,
            self.gamma10,
            join(&self.beta),
            join(&self.mean_populations),
            self.population_jitter,
            self.location_labels.join(","),
            self.seed
        )
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub variant: Variant,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub spatial: Vec<f64>,
    /// `outbreaks[i][t]`.
    pub outbreaks: Vec<Vec<u8>>,
    /// True when the variant has no outbreak term, so the paths had no
    /// effect on the counts.
    pub outbreaks_inert: bool,
    pub beta: Vec<f64>,
    pub gamma01: f64,
    pub gamma10: f64,
    pub kappa_r: f64,
    pub kappa_u: f64,
    pub populations: Vec<f64>,
    pub location_labels: Vec<String>,
}

impl SimulationTruth {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// `r_1 = r_2 = intercept`, then `r_t = 2 r_{t-1} - r_{t-2} + ε_t` with
/// `ε_t ~ N(0, 1/κ_r)`.
pub fn simulate_trend<R: Rng + ?Sized>(times: usize, intercept: f64, kappa_r: f64, rng: &mut R) -> Result<Vec<f64>> {
    if times < 3 {
        return Err(Error::invalid(format!("trend simulation needs T >= 3, got {times}")));
    }
    if !(kappa_r > 0.0) {
        return Err(Error::invalid("kappa_r must be positive"));
    }
    let noise = Normal::new(0.0, kappa_r.sqrt().recip()).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut r = vec![intercept, intercept];
    for t in 2..times {
        let next = 2.0 * r[t - 1] - r[t - 2] + noise.sample(rng);
        r.push(next);
    }
    Ok(r)
}

/// `s_c = A sin(2π f c)` for `c = 1..C`, mean-centred.
pub fn simulate_seasonal(cycle_length: usize, amplitude: f64, frequency: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=cycle_length)
        .map(|c| amplitude * (2.0 * std::f64::consts::PI * frequency * c as f64).sin())
        .collect();
    let m = raw.iter().sum::<f64>() / cycle_length as f64;
    raw.into_iter().map(|v| v - m).collect()
}

/// Draw from the IGMRF with precision `κ R` restricted to the complement
/// of the null space of `R`.
pub fn simulate_spatial_igmrf<R: Rng + ?Sized>(structure: &StructureMatrix, kappa: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa_u must be positive"));
    }
    let n = structure.dim();
    let eig = SymmetricEigen::new(structure.to_dense());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale.max(1.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut u = vec![0.0; n];
    for &j in &order {
        let lambda = eig.eigenvalues[j];
        if lambda <= tol {
            continue;
        }
        let c = rng.sample::<f64, _>(rand_distr::StandardNormal) / (kappa * lambda).sqrt();
        for (k, uk) in u.iter_mut().enumerate() {
            *uk += c * eig.eigenvectors[(k, j)];
        }
    }
    let m = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= m);
    Ok(u)
}

/// Two-state chain started from its stationary law, or from `initial`.
pub fn simulate_hmm_path<R: Rng + ?Sized>(times: usize, gamma01: f64, gamma10: f64, initial: Option<u8>, rng: &mut R) -> Result<Vec<u8>> {
    let delta = stationary_distribution(gamma01, gamma10)?;
    let mut x = Vec::with_capacity(times);
    if times == 0 {
        return Ok(x);
    }
    let first = match initial {
        Some(s) if s <= 1 => s,
        Some(s) => return Err(Error::invalid(format!("initial state must be 0 or 1, got {s}"))),
        None => u8::from(rng.random::<f64>() < delta[1]),
    };
    x.push(first);
    for t in 1..times {
        let u: f64 = rng.random();
        let next = match x[t - 1] {
            0 => u8::from(u < gamma01),
            _ => u8::from(u >= gamma10),
        };
        x.push(next);
    }
    Ok(x)
}

/// Location populations, drawn once and held constant over time.
pub fn simulate_populations<R: Rng + ?Sized>(means: &[f64], jitter: f64, rng: &mut R) -> Result<Vec<f64>> {
    if jitter == 0.0 {
        return Ok(means.to_vec());
    }
    let sigma2 = jitter.mul_add(jitter, 1.0).ln();
    means
        .iter()
        .map(|&m| {
            let d = LogNormal::new(m.ln() - 0.5 * sigma2, sigma2.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
            Ok(d.sample(rng).round().max(1.0))
        })
        .collect()
}

/// Assembles every component and draws the counts forward in time, since
/// `z_it` depends on the counts at `t - 1`.
pub fn simulate_dataset(config: &SimulationConfig, adjacency: &Adjacency) -> Result<(SurveillanceData, SimulationTruth)> {
    config.validate()?;
    let n = config.locations();
    if adjacency.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "adjacency has {} nodes but the configuration has {n} locations",
            adjacency.len()
        )));
    }
    let stream = |s| ChaCha8Rng::seed_from_u64(derive_seed(config.seed, s));
    let trend = simulate_trend(config.times, config.intercept, config.kappa_r, &mut stream(STREAM_TREND))?;
    let seasonal = simulate_seasonal(config.cycle_length, config.amplitude, config.frequency);
    let spatial = simulate_spatial_igmrf(&StructureMatrix::spatial(adjacency), config.kappa_u, &mut stream(STREAM_SPATIAL))?;
    let mut rng = stream(STREAM_OUTBREAKS);
    let outbreaks = (0..n)
        .map(|_| simulate_hmm_path(config.times, config.gamma01, config.gamma10, None, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let populations = simulate_populations(&config.mean_populations, config.population_jitter, &mut stream(STREAM_POPULATIONS))?;

    let mut rng = stream(STREAM_COUNTS);
    let mut counts = vec![vec![0u64; config.times]; n];
    for t in 0..config.times {
        for i in 0..n {
            let previous = (t > 0).then(|| {
                let counts = &counts;
                move |j: usize| counts[j][t - 1] as f64
            });
            let z = covariate_from_previous(config.variant, adjacency, i, previous);
            let mut log_risk = trend[t] + seasonal[t % config.cycle_length] + spatial[i];
            if outbreaks[i][t] == 1 {
                log_risk += outbreak_effect(&z, &config.beta);
            }
            let mean = populations[i] * log_risk.exp();
            if !(mean <= MAX_POISSON_MEAN) {
                return Err(Error::Numerical(format!(
                    "Poisson mean {mean:e} at location {i}, time {t} exceeds {MAX_POISSON_MEAN:e}"
                )));
            }
            counts[i][t] = if mean > 0.0 {
                Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?.sample(&mut rng) as u64
            } else {
                0
            };
        }
    }

    let data = SurveillanceData::new(
        counts.into_iter().map(|row| row.into_iter().map(Some).collect()).collect(),
        populations.iter().map(|&p| vec![p; config.times]).collect(),
        adjacency.clone(),
        config.location_labels.clone(),
        (1..=config.times).map(|t| format!("t{t}")).collect(),
    )?;
    let truth = SimulationTruth {
        variant: config.variant,
        trend,
        seasonal,
        spatial,
        outbreaks,
        outbreaks_inert: !config.variant.has_outbreaks(),
        beta: config.beta.clone(),
        gamma01: config.gamma01,
        gamma10: config.gamma10,
        kappa_r: config.kappa_r,
        kappa_u: config.kappa_u,
        populations,
        location_labels: config.location_labels.clone(),
    };
    Ok((data, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::total_loglik;
    use crate::model::{ModelSpec, Parameters, SurveillanceModel};
    use nalgebra::{DMatrix, DVector};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn nine_city_fixture() {
        let adj = nine_city_adjacency();
        assert_eq!(adj.len(), 9);
        assert_eq!(adj.edges().len(), 12);
        assert_eq!(adj.num_components(), 1);
        // the centre city borders four others
        assert_eq!(adj.degree(2), 4);
    }

    #[test]
    fn trend_without_noise_is_flat() {
        let r = simulate_trend(60, -14.0, 1e20, &mut rng(1)).unwrap();
        assert!(r.iter().all(|v| (v + 14.0).abs() < 1e-4));
        assert!(simulate_trend(2, 0.0, 1.0, &mut rng(1)).is_err());
    }

    #[test]
    fn trend_second_differences_have_prior_variance() {
        let kappa = 1e4;
        let r = simulate_trend(100_002, 0.0, kappa, &mut rng(2)).unwrap();
        let d: Vec<f64> = (2..r.len()).map(|t| r[t] - 2.0 * r[t - 1] + r[t - 2]).collect();
        let v = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        assert!((v * kappa - 1.0).abs() < 0.03, "{}", v * kappa);
    }

    #[test]
    fn trend_endpoint_spread_matches_cumulated_noise() {
        // r_T - r_2 = Σ_{k=1}^{T-2} k ε, so Var = Σ k² / κ_r
        let (t, kappa) = (60, 1e4);
        let exact: f64 = (1..=t - 2).map(|k| (k * k) as f64).sum::<f64>() / kappa;
        let reps = 4_000;
        let mut rng = rng(3);
        let v = (0..reps)
            .map(|_| {
                let r = simulate_trend(t, -14.0, kappa, &mut rng).unwrap();
                (r[t - 1] + 14.0).powi(2)
            })
            .sum::<f64>()
            / reps as f64;
        assert!((v / exact - 1.0).abs() < 0.06, "{v} vs {exact}");
    }

    #[test]
    fn seasonal_examples() {
        let raw_third = 1.4 * (2.0 * std::f64::consts::PI * 3.0 / 12.0).sin();
        assert!((raw_third - 1.4).abs() < 1e-12);
        let s = simulate_seasonal(12, 1.4, 1.0 / 12.0);
        // a full period has zero mean, so centring leaves the value unchanged
        assert!((s[2] - 1.4).abs() < 1e-12);
        assert!(s.iter().sum::<f64>().abs() < 1e-12);
        assert!(simulate_seasonal(12, 0.0, 1.0 / 12.0).iter().all(|&v| v == 0.0));
        let odd = simulate_seasonal(7, 0.9, 0.3);
        assert!(odd.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn spatial_draws_match_pseudo_inverse() {
        let adj = nine_city_adjacency();
        let r = StructureMatrix::spatial(&adj);
        let kappa = 25.0;
        let exact = (r.to_dense() * kappa).pseudo_inverse(1e-9).unwrap();
        let n = 100_000;
        let mut rng = rng(4);
        let mut second = DMatrix::<f64>::zeros(9, 9);
        let mut q_mean = 0.0;
        for _ in 0..n {
            let u = simulate_spatial_igmrf(&r, kappa, &mut rng).unwrap();
            assert!(u.iter().sum::<f64>().abs() < 1e-12);
            q_mean += r.quadratic_form(&u);
            let v = DVector::from_vec(u);
            second += &v * v.transpose();
        }
        let cov = second / n as f64;
        let rel = (&cov - &exact).norm() / exact.norm();
        assert!(rel < 0.05, "relative Frobenius error {rel}");
        let expected_q = 8.0 / kappa;
        assert!((q_mean / n as f64 / expected_q - 1.0).abs() < 0.03);
        assert!(simulate_spatial_igmrf(&r, 0.0, &mut rng).is_err());
    }

    #[test]
    fn hmm_path_frequencies() {
        let n = 1_000_000;
        let x = simulate_hmm_path(n, 0.1, 0.2, None, &mut rng(5)).unwrap();
        let frac = x.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        assert!((frac - 1.0 / 3.0).abs() < 0.01, "{frac}");
        let mut counts = [[0f64; 2]; 2];
        for w in x.windows(2) {
            counts[w[0] as usize][w[1] as usize] += 1.0;
        }
        let g01 = counts[0][1] / (counts[0][0] + counts[0][1]);
        let g10 = counts[1][0] / (counts[1][0] + counts[1][1]);
        assert!((g01 - 0.1).abs() < 0.01 && (g10 - 0.2).abs() < 0.01);
        let stuck = simulate_hmm_path(10_000, 1e-9, 0.5, Some(0), &mut rng(6)).unwrap();
        assert!(stuck.iter().all(|&v| v == 0));
    }

    #[test]
    fn dataset_is_reproducible_and_shares_components() {
        let adj = nine_city_adjacency();
        let cfg = SimulationConfig::nine_city(Variant::I);
        let (a, ta) = simulate_dataset(&cfg, &adj).unwrap();
        let (b, tb) = simulate_dataset(&cfg, &adj).unwrap();
        assert_eq!(a.counts(), b.counts());
        assert_eq!(ta, tb);
        let (_, t7) = simulate_dataset(&SimulationConfig::nine_city(Variant::VII), &adj).unwrap();
        assert_eq!(ta.trend, t7.trend);
        assert_eq!(ta.spatial, t7.spatial);
        assert_eq!(ta.outbreaks, t7.outbreaks);
        assert_eq!(ta.populations, t7.populations);
        assert_eq!(a.num_locations(), 9);
        assert_eq!(a.num_times(), 60);
    }

    #[test]
    fn variant_zero_ignores_outbreak_paths() {
        let adj = nine_city_adjacency();
        let base = SimulationConfig::nine_city(Variant::Zero);
        let (a, ta) = simulate_dataset(&base, &adj).unwrap();
        assert!(ta.outbreaks_inert);
        // different transition probabilities change the paths but not the counts
        let mut other = base.clone();
        other.gamma01 = 0.6;
        other.gamma10 = 0.05;
        let (b, tb) = simulate_dataset(&other, &adj).unwrap();
        assert_ne!(ta.outbreaks, tb.outbreaks);
        assert_eq!(a.counts(), b.counts());
    }

    #[test]
    fn truth_components_satisfy_constraints() {
        let (_, t) = simulate_dataset(&SimulationConfig::nine_city(Variant::III), &nine_city_adjacency()).unwrap();
        assert!(t.seasonal.iter().sum::<f64>().abs() < 1e-12);
        assert!(t.spatial.iter().sum::<f64>().abs() < 1e-12);
        assert!(t.populations.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn monthly_totals_are_tens_of_cases() {
        let adj = nine_city_adjacency();
        let mut medians = Vec::new();
        for seed in 0..50 {
            let mut cfg = SimulationConfig::nine_city(Variant::I);
            cfg.seed = seed;
            let (data, _) = simulate_dataset(&cfg, &adj).unwrap();
            let mut totals: Vec<f64> = (0..60)
                .map(|t| (0..9).map(|i| data.count(i, t).unwrap() as f64).sum())
                .collect();
            totals.sort_by(f64::total_cmp);
            medians.push(totals[30]);
        }
        medians.sort_by(f64::total_cmp);
        let mid = medians[25];
        assert!((3.0..=100.0).contains(&mid), "median monthly total {mid}");
    }

    #[test]
    fn covariate_responds_to_previous_counts() {
        let adj = nine_city_adjacency();
        let (data, _) = simulate_dataset(&SimulationConfig::nine_city(Variant::I), &adj).unwrap();
        // find a location with a positive count to zero out
        let (i, t) = (0..9)
            .flat_map(|i| (1..59).map(move |t| (i, t)))
            .find(|&(i, t)| data.count(i, t - 1).unwrap() > 0)
            .unwrap();
        let zeroed = data.with_count(i, t - 1, Some(0));
        for v in Variant::ALL.into_iter().filter(|&v| v != Variant::Zero) {
            let spec = ModelSpec::monthly(v);
            let before = crate::model::outbreak_covariate(&spec, &data, i, t).unwrap();
            let after = crate::model::outbreak_covariate(&spec, &zeroed, i, t).unwrap();
            if v == Variant::VII {
                assert_eq!(before, after);
            } else if matches!(v, Variant::I | Variant::IV | Variant::V | Variant::VI) {
                assert_ne!(before, after, "{v}");
            }
        }
    }

    #[test]
    fn truth_beats_inflated_beta_on_average() {
        let adj = nine_city_adjacency();
        let mut diff = 0.0;
        for seed in 0..50 {
            let mut cfg = SimulationConfig::nine_city(Variant::I);
            cfg.seed = 100 + seed;
            let (data, truth) = simulate_dataset(&cfg, &adj).unwrap();
            let model = SurveillanceModel::new(data, ModelSpec::monthly(Variant::I)).unwrap();
            let mut p = Parameters {
                trend: truth.trend.clone(),
                seasonal: truth.seasonal.clone(),
                spatial: truth.spatial.clone(),
                kappa_r: truth.kappa_r,
                kappa_s: 1.0,
                kappa_u: truth.kappa_u,
                beta: truth.beta.clone(),
                gamma01: truth.gamma01,
                gamma10: truth.gamma10,
            };
            let at_truth = total_loglik(&model, &p);
            assert!(at_truth.is_finite());
            p.beta[0] *= 2.0;
            diff += at_truth - total_loglik(&model, &p);
        }
        assert!(diff / 50.0 > 0.0);
    }

    #[test]
    fn overflow_guard() {
        let mut cfg = SimulationConfig::nine_city(Variant::I);
        cfg.intercept = 20.0;
        assert!(matches!(simulate_dataset(&cfg, &nine_city_adjacency()), Err(Error::Numerical(_))));
    }

    #[test]
    fn config_round_trip() {
        let mut cfg = SimulationConfig::nine_city(Variant::VI);
        cfg.seed = 99;
        cfg.kappa_u = 12.5;
        let back = SimulationConfig::from_config(&cfg.to_config()).unwrap();
        assert_eq!(back, cfg);
        assert!(SimulationConfig::from_config("variant=III\nbeta=1.0").is_err());
    }

    #[test]
    fn truth_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (_, t) = simulate_dataset(&SimulationConfig::nine_city(Variant::II), &nine_city_adjacency()).unwrap();
        let path = dir.path().join("truth.json");
        t.write_json(&path).unwrap();
        assert_eq!(SimulationTruth::read_json(&path).unwrap(), t);
    }
}
