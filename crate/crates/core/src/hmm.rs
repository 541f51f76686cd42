//! Exact likelihood of the two-state outbreak chain by forward filtering,
//! and local decoding of outbreak probabilities by the backward sweep.
//!
//! All recursions run in log space. The forward vectors are stored
//! normalised (`log P(x_t | y_{1:t})`) together with the per-step log
//! normalising constants, whose sum is the log-likelihood.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{log_add_exp, log_sum_exp, poisson_ln_pmf_from_log_mean};
use crate::model::{outbreak_effect, season_index, Parameters, SurveillanceModel};

/// Largest series length accepted by the path-enumeration oracles.
pub const BRUTE_FORCE_MAX_T: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub log_likelihood: f64,
    /// Normalised forward vectors, `log P(x_t | y_{1:t})`.
    pub log_forward: Vec<[f64; 2]>,
    /// Per-step log normalising constants.
    pub log_scale: Vec<f64>,
}

impl FilterResult {
    /// Unnormalised `log α_t(x) = log P(y_{1:t}, x_t)`.
    pub fn log_alpha(&self, t: usize) -> [f64; 2] {
        let c: f64 = self.log_scale[..=t].iter().sum();
        [self.log_forward[t][0] + c, self.log_forward[t][1] + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedProbs {
    /// `P(x_t = 1 | y_{1:T}, θ)` per time point.
    pub prob_outbreak: Vec<f64>,
}

/// Log-space inputs of a two-state HMM.
#[derive(Debug, Clone)]
pub struct ChainInputs {
    /// Per-time log emission probabilities; `[0, 0]` for a missing cell.
    pub log_emission: Vec<[f64; 2]>,
    pub log_initial: [f64; 2],
    pub log_transition: [[f64; 2]; 2],
}

impl ChainInputs {
    pub fn from_parameters(log_emission: Vec<[f64; 2]>, gamma01: f64, gamma10: f64) -> Self {
        let s = gamma01 + gamma10;
        Self {
            log_emission,
            log_initial: [(gamma10 / s).ln(), (gamma01 / s).ln()],
            log_transition: [
                [(-gamma01).ln_1p(), gamma01.ln()],
                [gamma10.ln(), (-gamma10).ln_1p()],
            ],
        }
    }
}

/// Forward recursion `α_t(x) = e_t(x) Σ_{x'} α_{t-1}(x') Γ(x', x)`.
pub fn forward(inputs: &ChainInputs) -> FilterResult {
    let n = inputs.log_emission.len();
    let lg = &inputs.log_transition;
    let mut log_forward = Vec::with_capacity(n);
    let mut log_scale = Vec::with_capacity(n);
    let mut prev = [0.0; 2];
    for (t, em) in inputs.log_emission.iter().enumerate() {
        let raw = if t == 0 {
            [inputs.log_initial[0] + em[0], inputs.log_initial[1] + em[1]]
        } else {
            [
                em[0] + log_add_exp(prev[0] + lg[0][0], prev[1] + lg[1][0]),
                em[1] + log_add_exp(prev[0] + lg[0][1], prev[1] + lg[1][1]),
            ]
        };
        let c = log_add_exp(raw[0], raw[1]);
        prev = [raw[0] - c, raw[1] - c];
        log_forward.push(prev);
        // a unit emission leaves the predictive distribution normalised
        log_scale.push(if *em == [0.0, 0.0] { 0.0 } else { c });
    }
    FilterResult {
        log_likelihood: log_scale.iter().sum(),
        log_forward,
        log_scale,
    }
}

/// Backward recursion with `β_T ≡ 1`; each vector is normalised so that
/// its entries log-sum to zero.
pub fn backward(inputs: &ChainInputs) -> Vec<[f64; 2]> {
    let n = inputs.log_emission.len();
    let lg = &inputs.log_transition;
    let mut out = vec![[0.0; 2]; n];
    if n == 0 {
        return out;
    }
    let mut next = [0.0; 2];
    for t in (0..n - 1).rev() {
        let em = inputs.log_emission[t + 1];
        let w = [next[0] + em[0], next[1] + em[1]];
        let raw = [
            log_add_exp(lg[0][0] + w[0], lg[0][1] + w[1]),
            log_add_exp(lg[1][0] + w[0], lg[1][1] + w[1]),
        ];
        let c = log_add_exp(raw[0], raw[1]);
        next = [raw[0] - c, raw[1] - c];
        out[t] = next;
    }
    out
}

/// Posterior state-1 probabilities from `α_t(x) β_t(x)`.
pub fn smooth(inputs: &ChainInputs) -> Vec<f64> {
    let fwd = forward(inputs);
    let bwd = backward(inputs);
    fwd.log_forward
        .iter()
        .zip(&bwd)
        .map(|(a, b)| {
            let l0 = a[0] + b[0];
            let l1 = a[1] + b[1];
            1.0 / (1.0 + (l0 - l1).exp())
        })
        .collect()
}

/// Log emission probabilities of cell `(i, t)` under both states;
/// `[0, 0]` when the count is missing.
#[inline]
pub fn emission_at(model: &SurveillanceModel, params: &Parameters, i: usize, t: usize) -> [f64; 2] {
    match model.data().count(i, t) {
        None => [0.0, 0.0],
        Some(y) => {
            let y = y as f64;
            let lf = model.ln_factorial(i, t);
            let base = model.ln_population(i, t)
                + params.trend[t]
                + params.seasonal[season_index(t, model.spec().cycle_length)]
                + params.spatial[i];
            let boost = outbreak_effect(model.covariates().get(i, t), &params.beta);
            [
                poisson_ln_pmf_from_log_mean(y, base, lf),
                poisson_ln_pmf_from_log_mean(y, base + boost, lf),
            ]
        }
    }
}

/// Log emission probabilities of location `i` under both states.
pub fn log_emissions(model: &SurveillanceModel, params: &Parameters, i: usize) -> Vec<[f64; 2]> {
    (0..model.data().num_times())
        .map(|t| emission_at(model, params, i, t))
        .collect()
}

/// Forward-filter log-likelihood from precomputed log emissions, without
/// storing the forward vectors.
pub fn loglik_from_emissions(log_emission: &[[f64; 2]], gamma01: f64, gamma10: f64) -> f64 {
    let lg = [[(-gamma01).ln_1p(), gamma01.ln()], [gamma10.ln(), (-gamma10).ln_1p()]];
    let s = gamma01 + gamma10;
    let mut prev = [(gamma10 / s).ln(), (gamma01 / s).ln()];
    let mut total = 0.0;
    for (t, em) in log_emission.iter().enumerate() {
        let raw = if t == 0 {
            [prev[0] + em[0], prev[1] + em[1]]
        } else {
            [
                em[0] + log_add_exp(prev[0] + lg[0][0], prev[1] + lg[1][0]),
                em[1] + log_add_exp(prev[0] + lg[0][1], prev[1] + lg[1][1]),
            ]
        };
        let norm = log_add_exp(raw[0], raw[1]);
        prev = [raw[0] - norm, raw[1] - norm];
        if *em != [0.0, 0.0] {
            total += norm;
        }
    }
    total
}

fn chain_inputs(model: &SurveillanceModel, params: &Parameters, i: usize) -> ChainInputs {
    ChainInputs::from_parameters(log_emissions(model, params, i), params.gamma01, params.gamma10)
}

/// Forward filter for location `i`. A missing count contributes an
/// emission factor of one; an all-missing series has log-likelihood 0.
pub fn forward_loglik(model: &SurveillanceModel, params: &Parameters, i: usize) -> FilterResult {
    forward(&chain_inputs(model, params, i))
}

/// Log-likelihood of location `i`.
pub fn location_loglik(model: &SurveillanceModel, params: &Parameters, i: usize) -> f64 {
    loglik_from_emissions(&log_emissions(model, params, i), params.gamma01, params.gamma10)
}

/// Sum of per-location log-likelihoods (locations are conditionally
/// independent given θ).
pub fn total_loglik(model: &SurveillanceModel, params: &Parameters) -> f64 {
    (0..model.data().num_locations())
        .map(|i| location_loglik(model, params, i))
        .sum()
}

/// Backward sweep and local decoding for location `i`.
pub fn smoothed_outbreak_probs(model: &SurveillanceModel, params: &Parameters, i: usize) -> SmoothedProbs {
    SmoothedProbs {
        prob_outbreak: smooth(&chain_inputs(model, params, i)),
    }
}

/// Outbreak probabilities for every location, location-major (`[i][t]`).
pub fn outbreak_probability_matrix(model: &SurveillanceModel, params: &Parameters) -> Vec<Vec<f64>> {
    (0..model.data().num_locations())
        .into_par_iter()
        .map(|i| smoothed_outbreak_probs(model, params, i).prob_outbreak)
        .collect()
}

fn path_log_probs(inputs: &ChainInputs) -> Result<Vec<(u32, f64)>> {
    let n = inputs.log_emission.len();
    if n > BRUTE_FORCE_MAX_T {
        return Err(Error::invalid(format!(
            "path enumeration limited to T <= {BRUTE_FORCE_MAX_T}, got {n}"
        )));
    }
    let lg = &inputs.log_transition;
    let state = |mask: u32, t: usize| ((mask >> t) & 1) as usize;
    Ok((0..(1u32 << n))
        .map(|mask| {
            let mut lp = 0.0;
            for t in 0..n {
                let x = state(mask, t);
                lp += if t == 0 {
                    inputs.log_initial[x]
                } else {
                    lg[state(mask, t - 1)][x]
                };
                lp += inputs.log_emission[t][x];
            }
            (mask, lp)
        })
        .collect())
}

/// Log-likelihood by summing over all `2^T` outbreak paths. Test oracle.
pub fn brute_force_loglik(model: &SurveillanceModel, params: &Parameters, i: usize) -> Result<f64> {
    let paths = path_log_probs(&chain_inputs(model, params, i))?;
    Ok(log_sum_exp(&paths.iter().map(|p| p.1).collect::<Vec<_>>()))
}

/// Outbreak marginals `P(x_t = 1 | y)` by path enumeration. Test oracle.
pub fn brute_force_smoothed(model: &SurveillanceModel, params: &Parameters, i: usize) -> Result<Vec<f64>> {
    brute_force_smoothed_inputs(&chain_inputs(model, params, i))
}

pub fn brute_force_smoothed_inputs(inputs: &ChainInputs) -> Result<Vec<f64>> {
    let paths = path_log_probs(inputs)?;
    let all: Vec<f64> = paths.iter().map(|p| p.1).collect();
    let total = log_sum_exp(&all);
    Ok((0..inputs.log_emission.len())
        .map(|t| {
            let on: Vec<f64> = paths
                .iter()
                .filter(|(mask, _)| (mask >> t) & 1 == 1)
                .map(|p| p.1)
                .collect();
            (log_sum_exp(&on) - total).exp()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Adjacency, SurveillanceData};
    use crate::math::ln_factorial;
    use crate::model::{ModelSpec, Variant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, variant: Variant, n_loc: usize, n_time: usize) -> (SurveillanceModel, Parameters) {
        let counts = (0..n_loc)
            .map(|_| {
                (0..n_time)
                    .map(|_| {
                        if rng.random_bool(0.1) {
                            None
                        } else {
                            Some(rng.random_range(0..8u64))
                        }
                    })
                    .collect()
            })
            .collect();
        let pops = (0..n_loc)
            .map(|_| vec![rng.random_range(2e5..2e6); n_time])
            .collect();
        let edges: Vec<(usize, usize)> = (1..n_loc).map(|i| (i - 1, i)).collect();
        let adj = Adjacency::from_edges(n_loc, edges).unwrap();
        let data = SurveillanceData::unlabeled(counts, pops, adj).unwrap();
        let spec = ModelSpec::new(variant, 4).unwrap();
        let mut params = Parameters {
            trend: (0..n_time).map(|_| rng.random_range(-14.5..-12.5)).collect(),
            seasonal: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            spatial: (0..n_loc).map(|_| rng.random_range(-0.5..0.5)).collect(),
            kappa_r: 1e4,
            kappa_s: 1.0,
            kappa_u: 1.0,
            beta: (0..spec.covariate_dim()).map(|_| rng.random_range(0.1..2.0)).collect(),
            gamma01: rng.random_range(0.02..0.98),
            gamma10: rng.random_range(0.02..0.98),
        };
        params.recenter();
        (SurveillanceModel::new(data, spec).unwrap(), params)
    }

    fn pois(y: u64, mu: f64) -> f64 {
        (y as f64 * mu.ln() - mu - ln_factorial(y)).exp()
    }

    #[test]
    fn single_step_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (model, params) = random_model(&mut rng, Variant::VII, 1, 3);
        // T=1 via a one-step chain built from the first emission
        let em = log_emissions(&model, &params, 0);
        let one = ChainInputs::from_parameters(vec![em[0]], params.gamma01, params.gamma10);
        let y = model.data().count(0, 0).unwrap_or(0);
        let mu0 = model.poisson_mean(&params, 0, 0, 0);
        let mu1 = model.poisson_mean(&params, 1, 0, 0);
        let s = params.gamma01 + params.gamma10;
        let (d0, d1) = (params.gamma10 / s, params.gamma01 / s);
        let expected = if model.data().count(0, 0).is_some() {
            (d0 * pois(y, mu0) + d1 * pois(y, mu1)).ln()
        } else {
            0.0
        };
        assert!((forward(&one).log_likelihood - expected).abs() < 1e-12);
        // T=1 posterior by Bayes rule
        let post = smooth(&one)[0];
        let bayes = if model.data().count(0, 0).is_some() {
            d1 * pois(y, mu1) / (d0 * pois(y, mu0) + d1 * pois(y, mu1))
        } else {
            d1
        };
        assert!((post - bayes).abs() < 1e-12);
    }

    #[test]
    fn variant_zero_ignores_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (model, mut params) = random_model(&mut rng, Variant::Zero, 2, 10);
        for i in 0..2 {
            let direct: f64 = log_emissions(&model, &params, i).iter().map(|e| e[0]).sum();
            let a = forward_loglik(&model, &params, i).log_likelihood;
            params.gamma01 = 0.77;
            params.gamma10 = 0.03;
            let b = forward_loglik(&model, &params, i).log_likelihood;
            assert!((a - direct).abs() < 1e-10 * direct.abs());
            assert!((a - b).abs() < 1e-10 * direct.abs());
            let d1 = params.gamma01 / (params.gamma01 + params.gamma10);
            for p in smoothed_outbreak_probs(&model, &params, i).prob_outbreak {
                assert!((p - d1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for variant in Variant::ALL {
            for _ in 0..6 {
                let (model, params) = random_model(&mut rng, variant, 2, 10);
                for i in 0..2 {
                    let f = forward_loglik(&model, &params, i).log_likelihood;
                    let b = brute_force_loglik(&model, &params, i).unwrap();
                    assert!(((f - b) / b).abs() < 1e-10, "{variant}: {f} vs {b}");
                    assert!(((location_loglik(&model, &params, i) - f) / f).abs() < 1e-13);
                    let s = smoothed_outbreak_probs(&model, &params, i).prob_outbreak;
                    let o = brute_force_smoothed(&model, &params, i).unwrap();
                    for (a, b) in s.iter().zip(&o) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn total_is_sum_and_order_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (model, params) = random_model(&mut rng, Variant::II, 3, 8);
        let total = total_loglik(&model, &params);
        let sum: f64 = (0..3).map(|i| brute_force_loglik(&model, &params, i).unwrap()).sum();
        assert!(((total - sum) / sum).abs() < 1e-10);

        // reverse the location order (the path graph maps onto itself)
        let data = model.data();
        let rev = |v: &[Vec<Option<u64>>]| v.iter().rev().cloned().collect::<Vec<_>>();
        let pops: Vec<Vec<f64>> = data.populations().iter().rev().cloned().collect();
        let adj = Adjacency::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let flipped = SurveillanceData::unlabeled(rev(data.counts()), pops, adj).unwrap();
        let fmodel = SurveillanceModel::new(flipped, *model.spec()).unwrap();
        let mut fparams = params.clone();
        fparams.spatial.reverse();
        assert!(((total_loglik(&fmodel, &fparams) - total) / total).abs() < 1e-12);
    }

    #[test]
    fn single_location_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (model, params) = random_model(&mut rng, Variant::IV, 1, 6);
        assert_eq!(total_loglik(&model, &params), location_loglik(&model, &params, 0));
    }

    #[test]
    fn brute_force_rejects_long_series_and_degenerate_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (model, params) = random_model(&mut rng, Variant::I, 1, 17);
        assert!(brute_force_loglik(&model, &params, 0).is_err());

        // γ01 → 0 with the start forced endemic: only the all-endemic path survives
        let (model, params) = random_model(&mut rng, Variant::VII, 1, 8);
        let em = log_emissions(&model, &params, 0);
        let mut inputs = ChainInputs::from_parameters(em.clone(), 1e-300, 0.3);
        inputs.log_initial = [0.0, f64::NEG_INFINITY];
        let paths = path_log_probs(&inputs).unwrap();
        let total = log_sum_exp(&paths.iter().map(|p| p.1).collect::<Vec<_>>());
        let endemic: f64 = em.iter().map(|e| e[0]).sum();
        assert!((total - endemic).abs() < 1e-10);
        assert!((forward(&inputs).log_likelihood - endemic).abs() < 1e-10);
    }

    #[test]
    fn all_missing_is_zero() {
        let adj = Adjacency::empty(1);
        let data = SurveillanceData::unlabeled(vec![vec![None; 5]], vec![vec![1e5; 5]], adj).unwrap();
        let model = SurveillanceModel::new(data, ModelSpec::new(Variant::VII, 3).unwrap()).unwrap();
        let mut params = model.initial_parameters();
        params.beta = vec![1.0];
        assert_eq!(forward_loglik(&model, &params, 0).log_likelihood, 0.0);
    }

    #[test]
    fn forward_backward_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (model, params) = random_model(&mut rng, Variant::III, 2, 12);
        for i in 0..2 {
            let inputs = chain_inputs(&model, &params, i);
            let f = forward(&inputs);
            // unscaled backward by direct recursion from the normalised one
            let lg = inputs.log_transition;
            let n = inputs.log_emission.len();
            let mut lb = vec![[0.0f64; 2]; n];
            for t in (0..n - 1).rev() {
                let em = inputs.log_emission[t + 1];
                for x in 0..2 {
                    lb[t][x] = log_add_exp(lg[x][0] + em[0] + lb[t + 1][0], lg[x][1] + em[1] + lb[t + 1][1]);
                }
            }
            for t in 0..n {
                let a = f.log_alpha(t);
                let joint = log_add_exp(a[0] + lb[t][0], a[1] + lb[t][1]);
                assert!((joint - f.log_likelihood).abs() < 1e-10 * f.log_likelihood.abs());
            }
        }
    }

    #[test]
    fn smoothing_invariant_to_emission_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (model, params) = random_model(&mut rng, Variant::I, 1, 12);
        let inputs = chain_inputs(&model, &params, 0);
        let base = smooth(&inputs);
        let mut scaled = inputs.clone();
        scaled.log_emission[5][0] += 3.7;
        scaled.log_emission[5][1] += 3.7;
        for (a, b) in base.iter().zip(smooth(&scaled)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_count_implies_outbreak() {
        let mut counts = vec![Some(1u64); 10];
        counts[6] = Some(40);
        let data = SurveillanceData::unlabeled(vec![counts], vec![vec![1e6; 10]], Adjacency::empty(1)).unwrap();
        let model = SurveillanceModel::new(data, ModelSpec::new(Variant::VII, 3).unwrap()).unwrap();
        let mut params = model.initial_parameters();
        params.trend = vec![-14.0; 10];
        params.beta = vec![3.0];
        let p = smoothed_outbreak_probs(&model, &params, 0).prob_outbreak;
        assert!(p[6] > 0.99, "{}", p[6]);
    }

    #[test]
    fn missing_equals_unit_emission() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (model, params) = random_model(&mut rng, Variant::VII, 1, 10);
        let missing = SurveillanceModel::new(model.data().with_missing(0, 4), *model.spec()).unwrap();
        let mut inputs = chain_inputs(&model, &params, 0);
        inputs.log_emission[4] = [0.0, 0.0];
        let direct = forward(&inputs).log_likelihood;
        assert_eq!(forward_loglik(&missing, &params, 0).log_likelihood, direct);
        assert_eq!(smoothed_outbreak_probs(&missing, &params, 0).prob_outbreak, smooth(&inputs));
    }

    #[test]
    fn long_series_stays_finite() {
        let n = 10_000;
        let counts = vec![(0..n).map(|t| Some((t % 7) as u64 * 50)).collect()];
        let data = SurveillanceData::unlabeled(counts, vec![vec![1e6; n]], Adjacency::empty(1)).unwrap();
        let model = SurveillanceModel::new(data, ModelSpec::monthly(Variant::IV)).unwrap();
        let params = model.initial_parameters();
        let f = forward_loglik(&model, &params, 0);
        assert!(f.log_likelihood.is_finite());
        let p = smoothed_outbreak_probs(&model, &params, 0).prob_outbreak;
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
