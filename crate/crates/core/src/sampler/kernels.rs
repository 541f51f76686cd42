//! Individual Markov kernels: conjugate Gibbs draws for precisions,
//! transformed scalar random-walk Metropolis, and the sum-to-zero
//! constrained joint random walk.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::adapt::RobustAdaptiveMetropolis;
use crate::error::{Error, Result};
use crate::math::{inv_logit, logit};
use crate::model::GammaPrior;

/// Draw from the full conditional `Gamma(a + rank/2, b + q/2)` of an IGMRF
/// precision with `Gamma(a, b)` prior.
pub fn gibbs_precision<R: Rng + ?Sized>(quadratic_form: f64, rank: usize, prior: GammaPrior, rng: &mut R) -> Result<f64> {
    if !(quadratic_form >= 0.0) {
        return Err(Error::invalid(format!(
            "quadratic form must be nonnegative, got {quadratic_form}"
        )));
    }
    if rank == 0 {
        return Err(Error::invalid("precision update needs rank >= 1"));
    }
    let shape = prior.shape + 0.5 * rank as f64;
    let rate = prior.rate + 0.5 * quadratic_form;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(g.sample(rng))
}

/// Scale on which a scalar random walk operates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `(0, 1)` parameters.
    Logit,
    /// Positive parameters.
    Log,
    Identity,
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Logit => logit(x),
            Transform::Log => x.ln(),
            Transform::Identity => x,
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Transform::Logit => inv_logit(eta),
            Transform::Log => eta.exp(),
            Transform::Identity => eta,
        }
    }

    /// `log |dx/dη|` at `x`.
    pub fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Logit => x.ln() + (-x).ln_1p(),
            Transform::Log => x.ln(),
            Transform::Identity => 0.0,
        }
    }
}

/// Outcome of one Metropolis–Hastings step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub value: T,
    pub log_target: f64,
    pub accepted: bool,
    pub accept_prob: f64,
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> (bool, f64) {
    let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
    let u: f64 = rng.random();
    (u < prob, prob)
}

/// Random walk on the transformed scale with Jacobian correction: the
/// proposal is `forward(current) + increment`. `current_log_target` is the
/// target at `current` on the original scale.
pub fn scalar_step<R, F>(
    current: f64,
    current_log_target: f64,
    increment: f64,
    transform: Transform,
    mut log_target: F,
    rng: &mut R,
) -> Step<f64>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let eta = transform.forward(current) + increment;
    let proposal = transform.inverse(eta);
    let valid = proposal.is_finite()
        && match transform {
            Transform::Logit => proposal > 0.0 && proposal < 1.0,
            Transform::Log => proposal > 0.0,
            Transform::Identity => true,
        };
    if !valid {
        return Step {
            value: current,
            log_target: current_log_target,
            accepted: false,
            accept_prob: 0.0,
        };
    }
    let lt = log_target(proposal);
    let log_ratio = lt + transform.log_jacobian(proposal) - current_log_target - transform.log_jacobian(current);
    let (ok, prob) = accept(log_ratio, rng);
    if ok {
        Step {
            value: proposal,
            log_target: lt,
            accepted: true,
            accept_prob: prob,
        }
    } else {
        Step {
            value: current,
            log_target: current_log_target,
            accepted: false,
            accept_prob: prob,
        }
    }
}

/// One transformed random-walk Metropolis step against `log_target`.
pub fn mh_update_scalar<R, F>(current: f64, mut log_target: F, proposal_sd: f64, transform: Transform, rng: &mut R) -> Result<(f64, bool)>
where
    R: Rng + ?Sized,
    F: FnMut(f64) -> f64,
{
    let lt = log_target(current);
    if !lt.is_finite() {
        return Err(Error::NonFinite(format!("log target at current value {current}")));
    }
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let step = scalar_step(current, lt, proposal_sd * z, transform, log_target, rng);
    Ok((step.value, step.accepted))
}

/// Tolerance for the sum-to-zero check on inputs.
fn constraint_tolerance(v: &[f64]) -> f64 {
    1e-9 * v.iter().map(|x| x.abs()).sum::<f64>().max(1.0)
}

/// Joint random walk on the first `n-1` coordinates; the last is set to
/// minus their sum. The adapter is updated with the acceptance
/// probability unless frozen.
pub fn constrained_step<R, F>(
    current: &[f64],
    current_log_target: f64,
    adapter: &mut RobustAdaptiveMetropolis,
    mut log_target: F,
    rng: &mut R,
) -> Step<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let n = current.len();
    let inc = adapter.increment(rng);
    let mut proposal = current.to_vec();
    let mut sum = 0.0;
    for k in 0..n - 1 {
        proposal[k] += inc[k];
        sum += proposal[k];
    }
    proposal[n - 1] = -sum;
    let lt = log_target(&proposal);
    let (ok, prob) = accept(lt - current_log_target, rng);
    adapter.adapt(prob);
    if ok {
        Step {
            value: proposal,
            log_target: lt,
            accepted: true,
            accept_prob: prob,
        }
    } else {
        Step {
            value: current.to_vec(),
            log_target: current_log_target,
            accepted: false,
            accept_prob: prob,
        }
    }
}

/// Constrained joint update of a sum-to-zero vector.
pub fn update_constrained_block<R, F>(
    current: &[f64],
    mut log_target: F,
    adapter: &mut RobustAdaptiveMetropolis,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    if current.len() < 2 || adapter.dim() != current.len() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "constrained block of length {} with a {}-dimensional adapter",
            current.len(),
            adapter.dim()
        )));
    }
    let sum: f64 = current.iter().sum();
    if sum.abs() > constraint_tolerance(current) {
        return Err(Error::invalid(format!("input violates the sum-to-zero constraint (sum {sum})")));
    }
    let lt = log_target(current);
    if !lt.is_finite() {
        return Err(Error::NonFinite("log target at current block".into()));
    }
    let step = constrained_step(current, lt, adapter, log_target, rng);
    Ok((step.value, step.accepted))
}
