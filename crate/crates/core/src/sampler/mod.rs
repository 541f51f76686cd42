//! MCMC over the continuous parameters with the outbreak chain integrated
//! out.
//!
//! One iteration: Gibbs draws of the three precisions, logit-scale random
//! walks on the transition probabilities, log-scale random walks on each
//! `β_j`, constrained joint random walks on `s` and `u`, then a sweep of
//! conditional-prior block proposals over the trend followed by an adaptive
//! random walk along the trend prior's null space (level and slope).
//!
//! After the Gibbs draws, each of `r`, `s` and `u` also gets a joint
//! rescaling move `x → c x`, `κ → κ / c²` (for the trend, only the part
//! outside the prior's null space is scaled). It leaves the prior quadratic
//! form unchanged and lets a field and its precision move together, which
//! the one-at-a-time updates cannot do when the precision is large.
//!
//! Finally, `s` is redrawn exactly given `r_t + s_{t mod C}` (see
//! [`split`]), moving periodic structure between trend and season without
//! touching the likelihood.

pub mod adapt;
pub mod diagnostics;
pub mod kernels;
pub mod samples;
pub mod split;
pub mod trend;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapt::{RobustAdaptiveMetropolis, StepSizeAdapter};
pub use diagnostics::{rhat, rhat_single, RhatEntry, RhatReport};
pub use kernels::{gibbs_precision, mh_update_scalar, update_constrained_block, Transform};
pub use samples::{ParameterLayout, PosteriorSamples, INERT_GAMMA};
pub use split::SeasonalSplit;
pub use trend::{update_trend_blocks, TrendBlocks};

use crate::config::{key_values, parse_value};
use crate::error::{Error, Result};
use crate::hmm::{emission_at, loglik_from_emissions};
use crate::math::derive_seed;
use crate::model::{GammaPrior, Parameters, SurveillanceModel};
use kernels::{constrained_step, scalar_step};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub n_warmup: usize,
    pub thin: usize,
    pub seed: u64,
    pub trend_block_size: usize,
    /// Target acceptance of the multivariate blocks.
    pub adapt_target: f64,
    /// Target acceptance of the scalar blocks.
    pub scalar_adapt_target: f64,
    pub adapt_rate_decay: f64,
    pub recenter_every: usize,
    /// Random-walk updates of `s` and of `u` per iteration.
    pub field_updates: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 5000,
            n_warmup: 2500,
            thin: 1,
            seed: 1,
            trend_block_size: 10,
            adapt_target: 0.234,
            scalar_adapt_target: 0.44,
            adapt_rate_decay: 0.66,
            recenter_every: 100,
            field_updates: 5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if self.n_chains == 0 || self.thin == 0 || self.trend_block_size == 0 || self.recenter_every == 0 || self.field_updates == 0 {
            return Err(Error::invalid(
                "n_chains, thin, trend_block_size, recenter_every and field_updates must be positive",
            ));
        }
        if self.n_warmup >= self.n_iterations {
            return Err(Error::invalid(format!(
                "n_warmup ({}) must be below n_iterations ({})",
                self.n_warmup, self.n_iterations
            )));
        }
        if !unit(self.adapt_target) || !unit(self.scalar_adapt_target) {
            return Err(Error::invalid("adaptation targets must lie in (0, 1)"));
        }
        if !(self.adapt_rate_decay > 0.5 && self.adapt_rate_decay <= 1.0) {
            return Err(Error::invalid("adapt_rate_decay must lie in (0.5, 1]"));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.n_iterations - self.n_warmup).div_ceil(self.thin)
    }

    /// Overrides defaults with recognised `key=value` lines.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in key_values(text)? {
            match k.as_str() {
                "n_chains" | "chains" => c.n_chains = parse_value(&k, &v)?,
                "n_iterations" | "iterations" => c.n_iterations = parse_value(&k, &v)?,
                "n_warmup" | "warmup" => c.n_warmup = parse_value(&k, &v)?,
                "thin" => c.thin = parse_value(&k, &v)?,
                "seed" => c.seed = parse_value(&k, &v)?,
                "trend_block_size" => c.trend_block_size = parse_value(&k, &v)?,
                "adapt_target" => c.adapt_target = parse_value(&k, &v)?,
                "scalar_adapt_target" => c.scalar_adapt_target = parse_value(&k, &v)?,
                "adapt_rate_decay" => c.adapt_rate_decay = parse_value(&k, &v)?,
                "recenter_every" => c.recenter_every = parse_value(&k, &v)?,
                "field_updates" => c.field_updates = parse_value(&k, &v)?,
                _ => {}
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_config(&self) -> String {
        format!(
            "n_chains={}\nn_iterations={}\nn_warmup={}\nthin={}\nseed={}\ntrend_block_size={}\nadapt_target={}\nscalar_adapt_target={}\nadapt_rate_decay={}\nrecenter_every={}\nfield_updates={}\n",
            self.n_chains,
            self.n_iterations,
            self.n_warmup,
            self.thin,
            self.seed,
            self.trend_block_size,
            self.adapt_target,
            self.scalar_adapt_target,
            self.adapt_rate_decay,
            self.recenter_every,
            self.field_updates
        )
    }
}

/// Draws and bookkeeping of a single chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    /// Post-warmup acceptance rate per MH block.
    pub acceptance: BTreeMap<String, f64>,
    /// Adapter fingerprints when adaptation stopped and at the end.
    pub fingerprints_at_freeze: BTreeMap<String, u64>,
    pub fingerprints_at_end: BTreeMap<String, u64>,
}

#[derive(Default, Clone, Copy)]
struct Counter {
    accepted: u64,
    attempted: u64,
}

/// Current state with cached log emissions and per-location
/// log-likelihoods.
struct ChainState<'m> {
    model: &'m SurveillanceModel,
    params: Parameters,
    em: Vec<Vec<[f64; 2]>>,
    ll: Vec<f64>,
    log_prior: f64,
    scratch_em: Vec<Vec<[f64; 2]>>,
    scratch_ll: Vec<f64>,
}

fn fill_emissions(model: &SurveillanceModel, params: &Parameters, em: &mut [Vec<[f64; 2]>]) {
    for (i, row) in em.iter_mut().enumerate() {
        for (t, cell) in row.iter_mut().enumerate() {
            *cell = emission_at(model, params, i, t);
        }
    }
}

fn fill_loglik(em: &[Vec<[f64; 2]>], params: &Parameters, ll: &mut [f64]) -> f64 {
    for (row, out) in em.iter().zip(ll.iter_mut()) {
        *out = loglik_from_emissions(row, params.gamma01, params.gamma10);
    }
    ll.iter().sum()
}

impl<'m> ChainState<'m> {
    fn new(model: &'m SurveillanceModel, params: Parameters) -> Result<Self> {
        let (n, t) = (model.data().num_locations(), model.data().num_times());
        let mut s = Self {
            model,
            params,
            em: vec![vec![[0.0; 2]; t]; n],
            ll: vec![0.0; n],
            log_prior: 0.0,
            scratch_em: vec![vec![[0.0; 2]; t]; n],
            scratch_ll: vec![0.0; n],
        };
        s.refresh();
        Ok(s)
    }

    fn refresh(&mut self) {
        fill_emissions(self.model, &self.params, &mut self.em);
        fill_loglik(&self.em, &self.params, &mut self.ll);
        self.log_prior = self.model.log_prior(&self.params);
    }

    fn loglik(&self) -> f64 {
        self.ll.iter().sum()
    }

    fn log_posterior(&self) -> f64 {
        self.loglik() + self.log_prior
    }

    /// Keeps the scratch emissions and log-likelihoods of an accepted
    /// proposal.
    fn commit_scratch(&mut self, emissions: bool) {
        if emissions {
            std::mem::swap(&mut self.em, &mut self.scratch_em);
        }
        std::mem::swap(&mut self.ll, &mut self.scratch_ll);
        self.log_prior = self.model.log_prior(&self.params);
    }
}

struct Adapters {
    gamma: [RobustAdaptiveMetropolis; 2],
    beta: Vec<RobustAdaptiveMetropolis>,
    seasonal: RobustAdaptiveMetropolis,
    spatial: Option<RobustAdaptiveMetropolis>,
    trend_shift: RobustAdaptiveMetropolis,
    /// Log-scale increments of the rescaling moves on `r`, `s`, `u`.
    rescale: [RobustAdaptiveMetropolis; 3],
    trend_step: StepSizeAdapter,
}

const RESCALE_NAMES: [&str; 3] = ["rescale_trend", "rescale_seasonal", "rescale_spatial"];

impl Adapters {
    fn new(model: &SurveillanceModel, cfg: &SamplerConfig) -> Self {
        let scalar = |sd| RobustAdaptiveMetropolis::new(1, sd, cfg.scalar_adapt_target, cfg.adapt_rate_decay);
        let multi = |d, sd| RobustAdaptiveMetropolis::new(d, sd, cfg.adapt_target, cfg.adapt_rate_decay);
        let n = model.data().num_locations();
        Self {
            gamma: [scalar(0.5), scalar(0.5)],
            beta: (0..model.spec().covariate_dim()).map(|_| scalar(0.3)).collect(),
            seasonal: multi(model.spec().cycle_length - 1, 0.05),
            spatial: (n >= 2).then(|| multi(n - 1, 0.05)),
            trend_shift: multi(2, 0.02),
            rescale: [scalar(0.1), scalar(0.1), scalar(0.1)],
            trend_step: StepSizeAdapter::new(1.0, cfg.adapt_target, cfg.adapt_rate_decay),
        }
    }

    fn all(&mut self) -> Vec<(String, &mut RobustAdaptiveMetropolis)> {
        let mut out: Vec<(String, &mut RobustAdaptiveMetropolis)> = Vec::new();
        let [g01, g10] = &mut self.gamma;
        out.push(("gamma01".into(), g01));
        out.push(("gamma10".into(), g10));
        for (j, b) in self.beta.iter_mut().enumerate() {
            out.push((format!("beta[{}]", j + 1), b));
        }
        out.push(("seasonal".into(), &mut self.seasonal));
        if let Some(a) = self.spatial.as_mut() {
            out.push(("spatial".into(), a));
        }
        out.push(("trend_shift".into(), &mut self.trend_shift));
        for (name, a) in RESCALE_NAMES.iter().zip(self.rescale.iter_mut()) {
            out.push((name.to_string(), a));
        }
        out
    }

    fn freeze(&mut self) {
        for (_, a) in self.all() {
            a.freeze();
        }
        self.trend_step.freeze();
    }

    fn fingerprints(&mut self) -> BTreeMap<String, u64> {
        let step = self.trend_step.fingerprint();
        let mut out: BTreeMap<String, u64> = self.all().into_iter().map(|(k, a)| (k, a.fingerprint())).collect();
        out.insert("trend_step".into(), step);
        out
    }
}

fn precision_draw<R: Rng + ?Sized>(q: f64, rank: usize, prior: GammaPrior, rng: &mut R) -> Result<f64> {
    if rank == 0 {
        // no structure: the full conditional is the prior
        let g = Gamma::new(prior.shape, 1.0 / prior.rate).map_err(|e| Error::Numerical(e.to_string()))?;
        return Ok(g.sample(rng));
    }
    gibbs_precision(q, rank, prior, rng)
}

/// Which updates an iteration performs. Everything is on in a real fit;
/// tests switch blocks off to check them in isolation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ActiveUpdates {
    pub precisions: bool,
    pub rescale: bool,
    pub gamma: bool,
    pub beta: bool,
    pub seasonal: bool,
    pub spatial: bool,
    pub trend_blocks: bool,
    pub trend_shift: bool,
    pub split: bool,
    pub recenter: bool,
}

impl ActiveUpdates {
    pub const ALL: Self = Self {
        precisions: true,
        rescale: true,
        gamma: true,
        beta: true,
        seasonal: true,
        spatial: true,
        trend_blocks: true,
        trend_shift: true,
        split: true,
        recenter: true,
    };

    #[cfg(test)]
    pub const NONE: Self = Self {
        precisions: false,
        rescale: false,
        gamma: false,
        beta: false,
        seasonal: false,
        spatial: false,
        trend_blocks: false,
        trend_shift: false,
        split: false,
        recenter: false,
    };
}

/// Runs one chain from `init`; `chain` selects the RNG stream.
pub fn run_chain(model: &SurveillanceModel, config: &SamplerConfig, init: &Parameters, chain: usize) -> Result<ChainOutput> {
    run_chain_with(model, config, init, chain, ActiveUpdates::ALL)
}

pub(crate) fn run_chain_with(
    model: &SurveillanceModel,
    config: &SamplerConfig,
    init: &Parameters,
    chain: usize,
    active: ActiveUpdates,
) -> Result<ChainOutput> {
    config.validate()?;
    init.check_dims(model.data(), model.spec())?;
    if !init.in_support() {
        return Err(Error::invalid("initial parameters outside the support"));
    }
    let mut st = ChainState::new(model, init.clone())?;
    if !st.log_posterior().is_finite() {
        return Err(Error::NonFinite("log posterior at the initial parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, chain as u64));
    let mut adapters = Adapters::new(model, config);
    let mut blocks = TrendBlocks::new(model.rw2(), config.trend_block_size, 0)?;
    let split = SeasonalSplit::new(model.rw2(), model.crw1())?;
    let hyper = *model.hyperpriors();
    let has_outbreaks = model.spec().variant.has_outbreaks();
    let layout = ParameterLayout::new(model.spec(), model.data().num_times(), model.data().num_locations());
    let n_times = model.data().num_times();
    let shift_basis: Vec<f64> = (0..n_times)
        .map(|t| (t as f64 - (n_times as f64 - 1.0) / 2.0) / n_times as f64)
        .collect();
    let slope_norm = shift_basis.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rescale_dims = [
        model.rw2().rank(),
        model.spec().cycle_length - 1,
        model.data().num_locations() - 1,
    ];

    let mut counters: BTreeMap<&'static str, Counter> = BTreeMap::new();
    let mut beta_counters = vec![Counter::default(); model.spec().covariate_dim()];
    let mut draws = Vec::with_capacity(config.retained());
    let mut fingerprints_at_freeze = BTreeMap::new();

    for iter in 0..config.n_iterations {
        if iter == config.n_warmup {
            adapters.freeze();
            fingerprints_at_freeze = adapters.fingerprints();
        }
        let record = iter >= config.n_warmup;
        let mut tally = |name: &'static str, ok: bool| {
            if record {
                let c = counters.entry(name).or_default();
                c.attempted += 1;
                c.accepted += ok as u64;
            }
        };

        if active.precisions {
            let p = &mut st.params;
            p.kappa_r = precision_draw(model.rw2().quadratic_form(&p.trend), model.rw2().rank(), hyper.kappa_r, &mut rng)?;
            p.kappa_s = precision_draw(model.crw1().quadratic_form(&p.seasonal), model.crw1().rank(), hyper.kappa_s, &mut rng)?;
            let sp = model.spatial_structure();
            p.kappa_u = precision_draw(sp.quadratic_form(&p.spatial), sp.rank(), hyper.kappa_u, &mut rng)?;
            st.log_prior = model.log_prior(&st.params);
        }

        // joint rescaling of each field with its precision
        for which in 0..3 {
            if !active.rescale || rescale_dims[which] == 0 {
                continue;
            }
            let log_c = adapters.rescale[which].increment(&mut rng)[0];
            let c = log_c.exp();
            let mut trial = st.params.clone();
            match which {
                0 => {
                    let level = trial.trend.iter().sum::<f64>() / n_times as f64;
                    let slope = trial.trend.iter().zip(&shift_basis).map(|(r, b)| r * b).sum::<f64>() / slope_norm;
                    for (r, b) in trial.trend.iter_mut().zip(&shift_basis) {
                        let fixed = level + slope * b / slope_norm;
                        *r = fixed + c * (*r - fixed);
                    }
                    trial.kappa_r /= c * c;
                }
                1 => {
                    trial.seasonal.iter_mut().for_each(|v| *v *= c);
                    trial.kappa_s /= c * c;
                }
                _ => {
                    trial.spatial.iter_mut().for_each(|v| *v *= c);
                    trial.kappa_u /= c * c;
                }
            }
            fill_emissions(model, &trial, &mut st.scratch_em);
            let new_lp = fill_loglik(&st.scratch_em, &trial, &mut st.scratch_ll) + model.log_prior(&trial);
            // Jacobian of (x, κ) → (c x, κ / c²) on the scaled coordinates
            let log_ratio = new_lp - st.log_posterior() + (rescale_dims[which] as f64 - 2.0) * log_c;
            let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            adapters.rescale[which].adapt(prob);
            let ok = rng.random::<f64>() < prob;
            if ok {
                st.params = trial;
                st.commit_scratch(true);
            }
            tally(RESCALE_NAMES[which], ok);
        }

        if has_outbreaks && active.gamma {
            for which in 0..2 {
                let inc = adapters.gamma[which].increment(&mut rng)[0];
                let current = if which == 0 { st.params.gamma01 } else { st.params.gamma10 };
                let cur_lt = st.log_posterior();
                let mut trial = st.params.clone();
                let em = &st.em;
                let scratch = &mut st.scratch_ll;
                let step = scalar_step(
                    current,
                    cur_lt,
                    inc,
                    Transform::Logit,
                    |x| {
                        if which == 0 {
                            trial.gamma01 = x;
                        } else {
                            trial.gamma10 = x;
                        }
                        fill_loglik(em, &trial, scratch) + model.log_prior(&trial)
                    },
                    &mut rng,
                );
                adapters.gamma[which].adapt(step.accept_prob);
                if step.accepted {
                    if which == 0 {
                        st.params.gamma01 = step.value;
                    } else {
                        st.params.gamma10 = step.value;
                    }
                    st.commit_scratch(false);
                }
                tally(if which == 0 { "gamma01" } else { "gamma10" }, step.accepted);
            }

        }
        if has_outbreaks && active.beta {
            for j in 0..st.params.beta.len() {
                let inc = adapters.beta[j].increment(&mut rng)[0];
                let cur_lt = st.log_posterior();
                let mut trial = st.params.clone();
                let (scratch_em, scratch_ll) = (&mut st.scratch_em, &mut st.scratch_ll);
                let step = scalar_step(
                    st.params.beta[j],
                    cur_lt,
                    inc,
                    Transform::Log,
                    |x| {
                        trial.beta[j] = x;
                        fill_emissions(model, &trial, scratch_em);
                        fill_loglik(scratch_em, &trial, scratch_ll) + model.log_prior(&trial)
                    },
                    &mut rng,
                );
                adapters.beta[j].adapt(step.accept_prob);
                if step.accepted {
                    st.params.beta[j] = step.value;
                    st.commit_scratch(true);
                }
                if record {
                    beta_counters[j].attempted += 1;
                    beta_counters[j].accepted += step.accepted as u64;
                }
            }
        }

        // seasonal, then spatial
        for which in (0..2).flat_map(|w| std::iter::repeat_n(w, config.field_updates)) {
            if (which == 0 && !active.seasonal) || (which == 1 && !active.spatial) {
                continue;
            }
            let adapter = if which == 0 {
                &mut adapters.seasonal
            } else {
                match adapters.spatial.as_mut() {
                    Some(a) => a,
                    None => continue,
                }
            };
            let cur_lt = st.log_posterior();
            let mut trial = st.params.clone();
            let current = if which == 0 { st.params.seasonal.clone() } else { st.params.spatial.clone() };
            let (scratch_em, scratch_ll) = (&mut st.scratch_em, &mut st.scratch_ll);
            let step = constrained_step(
                &current,
                cur_lt,
                adapter,
                |v| {
                    if which == 0 {
                        trial.seasonal.copy_from_slice(v);
                    } else {
                        trial.spatial.copy_from_slice(v);
                    }
                    fill_emissions(model, &trial, scratch_em);
                    fill_loglik(scratch_em, &trial, scratch_ll) + model.log_prior(&trial)
                },
                &mut rng,
            );
            if step.accepted {
                if which == 0 {
                    st.params.seasonal = step.value;
                } else {
                    st.params.spatial = step.value;
                }
                st.commit_scratch(true);
            }
            tally(if which == 0 { "seasonal" } else { "spatial" }, step.accepted);
        }

        // trend blocks: the acceptance ratio is the likelihood ratio
        let parts = if active.trend_blocks { blocks.partition(&mut rng) } else { Vec::new() };
        for (a, b) in parts {
            let draw = blocks
                .block(a, b)?
                .propose(&st.params.trend, st.params.kappa_r, adapters.trend_step.step(), &mut rng);
            let mut trial = st.params.clone();
            trial.trend[a..b].copy_from_slice(&draw);
            for (i, row) in st.scratch_em.iter_mut().enumerate() {
                row.copy_from_slice(&st.em[i]);
                for (t, cell) in row.iter_mut().enumerate().take(b).skip(a) {
                    *cell = emission_at(model, &trial, i, t);
                }
            }
            let new_ll = fill_loglik(&st.scratch_em, &trial, &mut st.scratch_ll);
            let log_ratio = new_ll - st.loglik();
            let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            adapters.trend_step.adapt(prob);
            let ok = rng.random::<f64>() < prob;
            if ok {
                st.params.trend[a..b].copy_from_slice(&draw);
                st.commit_scratch(true);
            }
            tally("trend_blocks", ok);
        }

        // level and slope shifts leave the RW2 prior unchanged
        if active.trend_shift {
            let inc = adapters.trend_shift.increment(&mut rng);
            let mut trial = st.params.clone();
            for (t, r) in trial.trend.iter_mut().enumerate() {
                *r += inc[0] + inc[1] * shift_basis[t];
            }
            fill_emissions(model, &trial, &mut st.scratch_em);
            let new_ll = fill_loglik(&st.scratch_em, &trial, &mut st.scratch_ll);
            let log_ratio = new_ll - st.loglik();
            let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            adapters.trend_shift.adapt(prob);
            let ok = rng.random::<f64>() < prob;
            if ok {
                st.params.trend = trial.trend;
                st.commit_scratch(true);
            }
            tally("trend_shift", ok);
        }

        if active.split {
            let p = &mut st.params;
            split.sample(model.rw2(), &mut p.trend, &mut p.seasonal, p.kappa_r, p.kappa_s, &mut rng)?;
            st.refresh();
        }

        if active.recenter && (iter + 1) % config.recenter_every == 0 {
            st.params.recenter();
            st.refresh();
        }

        if record && (iter - config.n_warmup) % config.thin == 0 {
            debug_assert!(st.params.in_support());
            draws.push(layout.pack(&st.params));
        }
    }

    let mut acceptance: BTreeMap<String, f64> = counters
        .into_iter()
        .map(|(k, c)| (k.to_string(), c.accepted as f64 / c.attempted.max(1) as f64))
        .collect();
    for (j, c) in beta_counters.iter().enumerate() {
        acceptance.insert(format!("beta[{}]", j + 1), c.accepted as f64 / c.attempted.max(1) as f64);
    }
    Ok(ChainOutput {
        draws,
        acceptance,
        fingerprints_at_freeze,
        fingerprints_at_end: adapters.fingerprints(),
    })
}

/// Runs `config.n_chains` independent chains in parallel from a common
/// starting point. Chain `c` uses the stream `derive_seed(seed, c)`.
pub fn run_chains(model: &SurveillanceModel, config: &SamplerConfig, init: &Parameters) -> Result<PosteriorSamples> {
    config.validate()?;
    let outputs: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, config, init, c))
        .collect::<Result<_>>()?;
    let layout = ParameterLayout::new(model.spec(), model.data().num_times(), model.data().num_locations());
    let mut samples = PosteriorSamples::new(*model.spec(), layout, outputs.iter().map(|o| o.draws.clone()).collect())?;
    samples.acceptance_rates = outputs.into_iter().map(|o| o.acceptance).collect();
    Ok(samples)
}

/// Fits with the default starting point.
pub fn fit(model: &SurveillanceModel, config: &SamplerConfig) -> Result<PosteriorSamples> {
    run_chains(model, config, &model.initial_parameters())
}
