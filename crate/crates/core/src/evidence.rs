//! Importance-sampling estimates of the marginal likelihood
//! `P̂ = (1/N) Σ π(Y|θ) π(θ) / q(θ)` with a multivariate-t proposal fitted
//! to posterior draws in unconstrained coordinates, and posterior model
//! probabilities from the resulting evidences.
//!
//! Unconstrained coordinates: identity for `r`, the first `C - 1` and
//! `I - 1` entries for `s` and `u` (the last is minus the sum of the
//! others), log for the precisions and `β`, logit for the transition
//! probabilities. The improper flat directions of the trend prior carry a
//! constant of 0, shared by every model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::hmm::total_loglik;
use crate::math::{inv_logit, logit, pairwise_sum};
use crate::model::{Parameters, SurveillanceModel};
use crate::sampler::{ParameterLayout, PosteriorSamples, INERT_GAMMA};

/// Degrees of freedom of the default proposal.
pub const PROPOSAL_DF: f64 = 3.0;
/// Diagonal jitter added to the fitted scale matrix.
pub const SCALE_JITTER: f64 = 1e-8;
/// Default number of importance draws.
pub const DEFAULT_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_marginal: f64,
    /// Delta-method standard error of `log_marginal`.
    pub mc_standard_error: f64,
    pub n_samples: usize,
    /// `(Σw)² / Σw²`.
    pub effective_sample_size: f64,
}

/// Unnormalised log density on ℝ^d.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn ln_density(&self, x: &[f64]) -> f64;
}

/// Multivariate t (or Gaussian when `df` is infinite) with location `μ`
/// and scale matrix `Σ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct MvtProposal {
    location: DVector<f64>,
    chol: DMatrix<f64>,
    df: f64,
    ln_norm: f64,
}

impl MvtProposal {
    pub fn new(location: DVector<f64>, scale: DMatrix<f64>, df: f64) -> Result<Self> {
        let d = location.len();
        if d == 0 || scale.nrows() != d || scale.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "location of length {d} with a {}x{} scale",
                scale.nrows(),
                scale.ncols()
            )));
        }
        if !(df > 0.0) {
            return Err(Error::invalid("degrees of freedom must be positive"));
        }
        let chol = scale
            .cholesky()
            .ok_or_else(|| Error::Numerical("proposal scale matrix is not positive definite".into()))?
            .l();
        let ln_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let dd = d as f64;
        let ln_norm = if df.is_infinite() {
            -0.5 * dd * (2.0 * std::f64::consts::PI).ln() - 0.5 * ln_det
        } else {
            ln_gamma(0.5 * (df + dd)) - ln_gamma(0.5 * df) - 0.5 * dd * (df * std::f64::consts::PI).ln() - 0.5 * ln_det
        };
        Ok(Self {
            location,
            chol,
            df,
            ln_norm,
        })
    }

    /// Location at the sample mean and scale at the sample covariance plus
    /// [`SCALE_JITTER`] on the diagonal.
    pub fn fit(draws: &[Vec<f64>], df: f64) -> Result<Self> {
        let d = draws.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::InsufficientDraws("no draws to fit a proposal".into()));
        }
        if draws.len() < 10 * d {
            return Err(Error::InsufficientDraws(format!(
                "{} draws for a {d}-dimensional proposal; need at least {}",
                draws.len(),
                10 * d
            )));
        }
        if draws.iter().any(|x| x.len() != d) {
            return Err(Error::DimensionMismatch("ragged draws".into()));
        }
        let n = draws.len() as f64;
        let mut mean = DVector::zeros(d);
        for x in draws {
            mean += DVector::from_column_slice(x);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for x in draws {
            let dev = DVector::from_column_slice(x) - &mean;
            cov += &dev * dev.transpose();
        }
        cov /= n - 1.0;
        for k in 0..d {
            cov[(k, k)] += SCALE_JITTER;
        }
        Self::new(mean, cov, df)
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn location(&self) -> &DVector<f64> {
        &self.location
    }

    pub fn scale(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    /// Same location and scale with Gaussian tails.
    pub fn to_gaussian(&self) -> Self {
        Self::new(self.location.clone(), self.scale(), f64::INFINITY).expect("scale already factorised")
    }

    pub fn with_scale_factor(&self, factor: f64) -> Result<Self> {
        Self::new(self.location.clone(), self.scale() * (factor * factor), self.df)
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let dev = DVector::from_column_slice(x) - &self.location;
        let z = self.chol.solve_lower_triangular(&dev).expect("nonsingular factor");
        let q = z.norm_squared();
        if self.df.is_infinite() {
            self.ln_norm - 0.5 * q
        } else {
            self.ln_norm - 0.5 * (self.df + self.dim() as f64) * (q / self.df).ln_1p()
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let w = if self.df.is_infinite() {
            1.0
        } else {
            let chi = ChiSquared::new(self.df).expect("positive df").sample(rng);
            (self.df / chi).sqrt()
        };
        let x = &self.location + &self.chol * z * w;
        x.as_slice().to_vec()
    }
}

/// Log posterior density of a model in unconstrained coordinates,
/// Jacobian included.
pub struct ModelTarget<'m> {
    model: &'m SurveillanceModel,
    layout: ParameterLayout,
}

impl<'m> ModelTarget<'m> {
    pub fn new(model: &'m SurveillanceModel) -> Self {
        let data = model.data();
        Self {
            model,
            layout: ParameterLayout::new(model.spec(), data.num_times(), data.num_locations()),
        }
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn to_unconstrained(&self, p: &Parameters) -> Vec<f64> {
        let l = &self.layout;
        let mut x = Vec::with_capacity(self.dim());
        x.extend(&p.trend);
        x.extend(&p.seasonal[..l.cycle - 1]);
        x.extend(&p.spatial[..l.locations - 1]);
        x.extend([p.kappa_r.ln(), p.kappa_s.ln(), p.kappa_u.ln()]);
        x.extend(p.beta.iter().map(|b| b.ln()));
        if l.has_outbreaks {
            x.extend([logit(p.gamma01), logit(p.gamma10)]);
        }
        x
    }

    /// Inverse map and its log Jacobian.
    pub fn from_unconstrained(&self, x: &[f64]) -> (Parameters, f64) {
        let l = &self.layout;
        let mut k = 0;
        let mut take = |n: usize| {
            let s = &x[k..k + n];
            k += n;
            s
        };
        let trend = take(l.times).to_vec();
        let completed = |free: &[f64]| {
            let mut v = free.to_vec();
            v.push(-free.iter().sum::<f64>());
            v
        };
        let seasonal = completed(take(l.cycle - 1));
        let spatial = completed(take(l.locations - 1));
        let logs = take(3).to_vec();
        let log_beta = take(l.covariate_dim).to_vec();
        // drop-last coordinates span the constraint plane with volume
        // factor √n per field
        let mut ln_jac = 0.5 * ((l.cycle as f64).ln() + (l.locations as f64).ln());
        ln_jac += logs.iter().sum::<f64>() + log_beta.iter().sum::<f64>();
        let (gamma01, gamma10) = if l.has_outbreaks {
            let g = take(2);
            let (a, b) = (inv_logit(g[0]), inv_logit(g[1]));
            ln_jac += (a * (1.0 - a)).ln() + (b * (1.0 - b)).ln();
            (a, b)
        } else {
            INERT_GAMMA
        };
        let p = Parameters {
            trend,
            seasonal,
            spatial,
            kappa_r: logs[0].exp(),
            kappa_s: logs[1].exp(),
            kappa_u: logs[2].exp(),
            beta: log_beta.iter().map(|v| v.exp()).collect(),
            gamma01,
            gamma10,
        };
        (p, ln_jac)
    }
}

impl LogDensity for ModelTarget<'_> {
    fn dim(&self) -> usize {
        let l = &self.layout;
        l.times + l.cycle - 1 + l.locations - 1 + 3 + l.covariate_dim + if l.has_outbreaks { 2 } else { 0 }
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        let (p, ln_jac) = self.from_unconstrained(x);
        if !p.in_support() {
            return f64::NEG_INFINITY;
        }
        let lp = self.model.log_prior(&p);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        total_loglik(self.model, &p) + lp + ln_jac
    }
}

/// Maps retained draws to unconstrained coordinates and fits the proposal.
pub fn fit_proposal(model: &SurveillanceModel, samples: &PosteriorSamples, df: f64) -> Result<MvtProposal> {
    let target = ModelTarget::new(model);
    if samples.layout != *target.layout() {
        return Err(Error::DimensionMismatch("samples were drawn for a different model".into()));
    }
    let draws: Vec<Vec<f64>> = samples.parameters().map(|p| target.to_unconstrained(&p)).collect();
    MvtProposal::fit(&draws, df)
}

/// Log-mean-exp of importance weights with delta-method standard error.
/// Non-finite log weights count as zero weights.
pub fn summarize_log_weights(log_weights: &[f64]) -> Result<EvidenceEstimate> {
    let n = log_weights.len();
    if n == 0 {
        return Err(Error::InsufficientDraws("no importance draws".into()));
    }
    let top = log_weights
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::AllWeightsZero(n));
    }
    let w: Vec<f64> = log_weights
        .iter()
        .map(|&v| if v.is_finite() { (v - top).exp() } else { 0.0 })
        .collect();
    let nf = n as f64;
    let sum = pairwise_sum(&w);
    let mean = sum / nf;
    let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
    let sum_sq = pairwise_sum(&sq);
    let dev: Vec<f64> = w.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if n > 1 { pairwise_sum(&dev) / (nf - 1.0) } else { 0.0 };
    Ok(EvidenceEstimate {
        log_marginal: top + mean.ln(),
        mc_standard_error: var.sqrt() / (nf.sqrt() * mean),
        n_samples: n,
        effective_sample_size: sum * sum / sum_sq,
    })
}

/// Draws `n` points from `proposal` (sequentially, so the stream is
/// reproducible) and evaluates their weights in parallel.
pub fn estimate_log_evidence<T, R>(target: &T, proposal: &MvtProposal, n: usize, rng: &mut R) -> Result<EvidenceEstimate>
where
    T: LogDensity + Sync,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::invalid("need at least one importance draw"));
    }
    if proposal.dim() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "proposal dimension {} vs target dimension {}",
            proposal.dim(),
            target.dim()
        )));
    }
    let points: Vec<Vec<f64>> = (0..n).map(|_| proposal.sample(rng)).collect();
    let log_weights: Vec<f64> = points
        .par_iter()
        .map(|x| target.ln_density(x) - proposal.ln_pdf(x))
        .collect();
    summarize_log_weights(&log_weights)
}

/// Fits the t proposal to `samples` and estimates the model's log
/// marginal likelihood from `n` importance draws.
pub fn log_marginal_likelihood<R: Rng + ?Sized>(
    model: &SurveillanceModel,
    samples: &PosteriorSamples,
    n: usize,
    rng: &mut R,
) -> Result<EvidenceEstimate> {
    let proposal = fit_proposal(model, samples, PROPOSAL_DF)?;
    estimate_log_evidence(&ModelTarget::new(model), &proposal, n, rng)
}

/// Softmax of log evidence plus log prior weight.
pub fn posterior_model_probs(log_evidences: &[f64], prior_weights: &[f64]) -> Result<Vec<f64>> {
    if log_evidences.len() != prior_weights.len() || log_evidences.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} log evidences and {} prior weights",
            log_evidences.len(),
            prior_weights.len()
        )));
    }
    if log_evidences.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log evidence".into()));
    }
    if prior_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("prior model weights must be positive"));
    }
    let scores: Vec<f64> = log_evidences.iter().zip(prior_weights).map(|(l, w)| l + w.ln()).collect();
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let z = pairwise_sum(&w);
    Ok(w.into_iter().map(|v| v / z).collect())
}
