//! Model specification, parameter container, log-risk, outbreak covariates
//! and prior densities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Adjacency, StructureMatrix, SurveillanceData};
use crate::error::{Error, Result};
use crate::math::{beta_ln_pdf, gamma_ln_pdf, ln_factorial};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Functional form of the outbreak term `zᵀβ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// No outbreak term.
    Zero,
    /// Own count at t-1 positive.
    I,
    /// Own or any neighbour's count at t-1 positive.
    II,
    /// Own and neighbour indicators with separate coefficients.
    III,
    /// `log(y_{i,t-1} + 1)`.
    IV,
    /// `log(y_{i,t-1} + Σ_nbr y_{j,t-1} + 1)`.
    V,
    /// `log(y_{i,t-1} + 1)` and `Σ_nbr y_{j,t-1} + 1`.
    VI,
    /// Constant unit covariate.
    VII,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Zero,
        Variant::I,
        Variant::II,
        Variant::III,
        Variant::IV,
        Variant::V,
        Variant::VI,
        Variant::VII,
    ];

    pub fn covariate_dim(self) -> usize {
        match self {
            Variant::Zero => 0,
            Variant::III | Variant::VI => 2,
            _ => 1,
        }
    }

    pub fn has_outbreaks(self) -> bool {
        self != Variant::Zero
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Zero => "0",
            Variant::I => "I",
            Variant::II => "II",
            Variant::III => "III",
            Variant::IV => "IV",
            Variant::V => "V",
            Variant::VI => "VI",
            Variant::VII => "VII",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v = match s.trim().to_ascii_uppercase().as_str() {
            "0" | "ZERO" => Variant::Zero,
            "I" | "1" => Variant::I,
            "II" | "2" => Variant::II,
            "III" | "3" => Variant::III,
            "IV" | "4" => Variant::IV,
            "V" | "5" => Variant::V,
            "VI" | "6" => Variant::VI,
            "VII" | "7" => Variant::VII,
            other => return Err(Error::Parse(format!("unknown model variant `{other}`"))),
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub cycle_length: usize,
}

impl ModelSpec {
    pub fn new(variant: Variant, cycle_length: usize) -> Result<Self> {
        if cycle_length < 3 {
            return Err(Error::invalid(format!(
                "cycle length must be at least 3, got {cycle_length}"
            )));
        }
        Ok(Self {
            variant,
            cycle_length,
        })
    }

    /// Monthly seasonality.
    pub fn monthly(variant: Variant) -> Self {
        Self {
            variant,
            cycle_length: 12,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        self.variant.covariate_dim()
    }

    /// Parses `variant=VII` / `cycle_length=12` lines; other keys are
    /// ignored so a single config file can carry several sections.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut variant = None;
        let mut cycle = 12usize;
        for (key, value) in crate::config::key_values(text)? {
            match key.as_str() {
                "variant" => variant = Some(value.parse()?),
                "cycle_length" => {
                    cycle = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("cycle_length `{value}`")))?
                }
                _ => {}
            }
        }
        let variant = variant.ok_or_else(|| Error::Parse("config is missing `variant`".into()))?;
        Self::new(variant, cycle)
    }

    pub fn to_config(&self) -> String {
        format!("variant={}\ncycle_length={}\n", self.variant, self.cycle_length)
    }
}

/// Continuous model state. The outbreak indicators are never stored: they
/// are integrated out of the likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub spatial: Vec<f64>,
    pub kappa_r: f64,
    pub kappa_s: f64,
    pub kappa_u: f64,
    pub beta: Vec<f64>,
    pub gamma01: f64,
    pub gamma10: f64,
}

impl Parameters {
    /// Starting point: trend at the global log-rate, seasonal and spatial
    /// effects at the centred crude log-rate ratios of each season and
    /// location, precisions at their prior means, `Γ` at (0.1, 0.2) and
    /// `β` at its prior mean.
    pub fn initial(data: &SurveillanceData, spec: &ModelSpec, hyper: &Hyperpriors) -> Self {
        let (cases, exposure) = data.observed_totals();
        // guard all-zero data
        let level = (cases.max(0.5) / exposure).ln();
        let c = spec.cycle_length;
        let mut by_season = vec![(0.0, 0.0); c];
        let mut by_location = vec![(0.0, 0.0); data.num_locations()];
        for (i, row) in data.counts().iter().enumerate() {
            for (t, y) in row.iter().enumerate() {
                if let Some(y) = y {
                    let e = data.populations()[i][t];
                    for acc in [&mut by_season[t % c], &mut by_location[i]] {
                        acc.0 += *y as f64;
                        acc.1 += e;
                    }
                }
            }
        }
        let centred_log_ratio = |acc: &[(f64, f64)]| {
            let mut v: Vec<f64> = acc
                .iter()
                .map(|&(y, e)| if e > 0.0 { ((y + 0.5) / e).ln() - level } else { 0.0 })
                .collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
            v
        };
        Self {
            trend: vec![level; data.num_times()],
            seasonal: centred_log_ratio(&by_season),
            spatial: centred_log_ratio(&by_location),
            kappa_r: hyper.kappa_r.mean(),
            kappa_s: hyper.kappa_s.mean(),
            kappa_u: hyper.kappa_u.mean(),
            beta: vec![hyper.beta.mean(); spec.covariate_dim()],
            gamma01: 0.1,
            gamma10: 0.2,
        }
    }

    /// Whether every constrained quantity lies in its support.
    pub fn in_support(&self) -> bool {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        let unit = |x: f64| x > 0.0 && x < 1.0;
        pos(self.kappa_r)
            && pos(self.kappa_s)
            && pos(self.kappa_u)
            && self.beta.iter().all(|&b| pos(b))
            && unit(self.gamma01)
            && unit(self.gamma10)
            && self
                .trend
                .iter()
                .chain(&self.seasonal)
                .chain(&self.spatial)
                .all(|v| v.is_finite())
    }

    /// Subtracts the mean from the seasonal and spatial effects.
    pub fn recenter(&mut self) {
        for v in [&mut self.seasonal, &mut self.spatial] {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        }
    }

    pub fn check_dims(&self, data: &SurveillanceData, spec: &ModelSpec) -> Result<()> {
        let ok = self.trend.len() == data.num_times()
            && self.seasonal.len() == spec.cycle_length
            && self.spatial.len() == data.num_locations()
            && self.beta.len() == spec.covariate_dim();
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "parameters (T={}, C={}, I={}, p={}) do not match data/spec (T={}, C={}, I={}, p={})",
                self.trend.len(),
                self.seasonal.len(),
                self.spatial.len(),
                self.beta.len(),
                data.num_times(),
                spec.cycle_length,
                data.num_locations(),
                spec.covariate_dim()
            )))
        }
    }
}

/// Gamma distribution in shape-rate form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        gamma_ln_pdf(x, self.shape, self.rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPrior {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        beta_ln_pdf(x, self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperpriors {
    pub beta: GammaPrior,
    pub gamma: BetaPrior,
    pub kappa_r: GammaPrior,
    pub kappa_s: GammaPrior,
    pub kappa_u: GammaPrior,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Self {
            beta: GammaPrior { shape: 2.0, rate: 2.0 },
            gamma: BetaPrior { alpha: 2.0, beta: 2.0 },
            kappa_r: GammaPrior { shape: 1.0, rate: 1e-4 },
            kappa_s: GammaPrior { shape: 1.0, rate: 1e-3 },
            kappa_u: GammaPrior { shape: 1.0, rate: 1e-2 },
        }
    }
}

/// Outbreak covariate `z_it` for 0-based time `t`.
///
/// At `t = 0` the previous counts do not exist and every variant except VII
/// gets the zero vector. Missing previous counts count as zero.
pub fn outbreak_covariate(spec: &ModelSpec, data: &SurveillanceData, i: usize, t: usize) -> Result<Vec<f64>> {
    if i >= data.num_locations() || t >= data.num_times() {
        return Err(Error::OutOfRange(format!(
            "(location {i}, time {t}) outside {}x{}",
            data.num_locations(),
            data.num_times()
        )));
    }
    let previous = (t > 0).then(|| move |j: usize| data.count(j, t - 1).unwrap_or(0) as f64);
    Ok(covariate_from_previous(spec.variant, data.adjacency(), i, previous))
}

/// `z_it` from the counts at the previous time point, `previous(j)` being
/// location `j`'s count. `None` marks the first time point.
pub fn covariate_from_previous<F: Fn(usize) -> f64>(variant: Variant, adjacency: &Adjacency, i: usize, previous: Option<F>) -> Vec<f64> {
    if variant == Variant::VII {
        return vec![1.0];
    }
    let Some(prev) = previous else {
        return vec![0.0; variant.covariate_dim()];
    };
    let own = prev(i);
    let nbr_sum: f64 = adjacency.neighbors(i).iter().map(|&j| prev(j)).sum();
    let nbr_any = adjacency.neighbors(i).iter().any(|&j| prev(j) > 0.0);
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    match variant {
        Variant::Zero => vec![],
        Variant::I => vec![ind(own > 0.0)],
        Variant::II => vec![ind(own > 0.0 || nbr_any)],
        Variant::III => vec![ind(own > 0.0), ind(nbr_any)],
        Variant::IV => vec![(own + 1.0).ln()],
        Variant::V => vec![(own + nbr_sum + 1.0).ln()],
        Variant::VI => vec![(own + 1.0).ln(), nbr_sum + 1.0],
        Variant::VII => unreachable!(),
    }
}

/// Precomputed `z_it` for every cell, stored location-major.
#[derive(Debug, Clone)]
pub struct Covariates {
    dim: usize,
    times: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(data: &SurveillanceData, spec: &ModelSpec) -> Self {
        let (n_loc, n_time) = (data.num_locations(), data.num_times());
        let dim = spec.covariate_dim();
        let mut values = Vec::with_capacity(n_loc * n_time * dim);
        for i in 0..n_loc {
            for t in 0..n_time {
                values.extend(outbreak_covariate(spec, data, i, t).expect("indices in range"));
            }
        }
        Self {
            dim,
            times: n_time,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.times + t) * self.dim;
        &self.values[start..start + self.dim]
    }
}

/// Seasonal component index for 0-based time `t`.
#[inline]
pub fn season_index(t: usize, cycle_length: usize) -> usize {
    t % cycle_length
}

/// `r_t + s_{t mod C} + u_i + x·zᵀβ` for 0-based `t`.
pub fn log_risk(params: &Parameters, spec: &ModelSpec, z: &[f64], x: u8, i: usize, t: usize) -> f64 {
    let base = params.trend[t] + params.seasonal[season_index(t, spec.cycle_length)] + params.spatial[i];
    if x == 0 {
        base
    } else {
        base + outbreak_effect(z, &params.beta)
    }
}

#[inline]
pub fn outbreak_effect(z: &[f64], beta: &[f64]) -> f64 {
    z.iter().zip(beta).map(|(a, b)| a * b).sum()
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {x}")))
    }
}

/// `Γ = [[1-γ01, γ01], [γ10, 1-γ10]]`.
pub fn transition_matrix(gamma01: f64, gamma10: f64) -> Result<[[f64; 2]; 2]> {
    check_unit("gamma01", gamma01)?;
    check_unit("gamma10", gamma10)?;
    Ok([[1.0 - gamma01, gamma01], [gamma10, 1.0 - gamma10]])
}

/// Fixed point of `δΓ = δ`.
pub fn stationary_distribution(gamma01: f64, gamma10: f64) -> Result<[f64; 2]> {
    check_unit("gamma01", gamma01)?;
    check_unit("gamma10", gamma10)?;
    let s = gamma01 + gamma10;
    Ok([gamma10 / s, gamma01 / s])
}

/// Log-density of an intrinsic GMRF term with the `(κ/2π)^{rank/2}`
/// normalisation. Pseudo-determinant factors of the structure matrix and
/// constraint-surface corrections are omitted; they do not depend on any
/// parameter and are identical for every outbreak variant.
pub fn igmrf_ln_density(values: &[f64], kappa: f64, structure: &StructureMatrix) -> f64 {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return f64::NEG_INFINITY;
    }
    let rank = structure.rank() as f64;
    0.5 * rank * (kappa.ln() - LN_2PI) - 0.5 * kappa * structure.quadratic_form(values)
}

/// Log prior density of `θ`. Returns `-∞` outside the support.
///
/// The `β` and `Γ` terms are fully normalised; the improper flat directions
/// of the trend prior contribute nothing.
pub fn log_prior(
    params: &Parameters,
    spec: &ModelSpec,
    rw2: &StructureMatrix,
    crw1: &StructureMatrix,
    spatial: &StructureMatrix,
    hyper: &Hyperpriors,
) -> f64 {
    let mut lp = igmrf_ln_density(&params.trend, params.kappa_r, rw2)
        + igmrf_ln_density(&params.seasonal, params.kappa_s, crw1)
        + igmrf_ln_density(&params.spatial, params.kappa_u, spatial)
        + hyper.kappa_r.ln_pdf(params.kappa_r)
        + hyper.kappa_s.ln_pdf(params.kappa_s)
        + hyper.kappa_u.ln_pdf(params.kappa_u);
    if spec.variant.has_outbreaks() {
        lp += hyper.gamma.ln_pdf(params.gamma01) + hyper.gamma.ln_pdf(params.gamma10);
        lp += params.beta.iter().map(|&b| hyper.beta.ln_pdf(b)).sum::<f64>();
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

/// Data, specification and every quantity precomputed from them that the
/// likelihood and prior evaluations need.
#[derive(Debug, Clone)]
pub struct SurveillanceModel {
    data: SurveillanceData,
    spec: ModelSpec,
    hyper: Hyperpriors,
    covariates: Covariates,
    rw2: StructureMatrix,
    crw1: StructureMatrix,
    spatial: StructureMatrix,
    ln_population: Vec<Vec<f64>>,
    ln_factorial: Vec<Vec<f64>>,
}

impl SurveillanceModel {
    pub fn new(data: SurveillanceData, spec: ModelSpec) -> Result<Self> {
        Self::with_hyperpriors(data, spec, Hyperpriors::default())
    }

    pub fn with_hyperpriors(data: SurveillanceData, spec: ModelSpec, hyper: Hyperpriors) -> Result<Self> {
        if spec.cycle_length < 3 {
            return Err(Error::invalid("cycle length must be at least 3"));
        }
        let rw2 = StructureMatrix::rw2(data.num_times())?;
        let crw1 = StructureMatrix::crw1(spec.cycle_length)?;
        let spatial = StructureMatrix::spatial(data.adjacency());
        let covariates = Covariates::new(&data, &spec);
        let ln_population = data
            .populations()
            .iter()
            .map(|row| row.iter().map(|e| e.ln()).collect())
            .collect();
        let ln_factorial = data
            .counts()
            .iter()
            .map(|row| row.iter().map(|c| c.map_or(0.0, ln_factorial)).collect())
            .collect();
        Ok(Self {
            data,
            spec,
            hyper,
            covariates,
            rw2,
            crw1,
            spatial,
            ln_population,
            ln_factorial,
        })
    }

    pub fn data(&self) -> &SurveillanceData {
        &self.data
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn hyperpriors(&self) -> &Hyperpriors {
        &self.hyper
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn rw2(&self) -> &StructureMatrix {
        &self.rw2
    }

    pub fn crw1(&self) -> &StructureMatrix {
        &self.crw1
    }

    pub fn spatial_structure(&self) -> &StructureMatrix {
        &self.spatial
    }

    pub fn ln_population(&self, i: usize, t: usize) -> f64 {
        self.ln_population[i][t]
    }

    pub fn ln_factorial(&self, i: usize, t: usize) -> f64 {
        self.ln_factorial[i][t]
    }

    pub fn initial_parameters(&self) -> Parameters {
        Parameters::initial(&self.data, &self.spec, &self.hyper)
    }

    pub fn log_prior(&self, params: &Parameters) -> f64 {
        log_prior(params, &self.spec, &self.rw2, &self.crw1, &self.spatial, &self.hyper)
    }

    /// Poisson mean `e_it · exp(log_risk)` at state `x`.
    pub fn poisson_mean(&self, params: &Parameters, x: u8, i: usize, t: usize) -> f64 {
        let z = self.covariates.get(i, t);
        (self.ln_population[i][t] + log_risk(params, &self.spec, z, x, i, t)).exp()
    }
}
