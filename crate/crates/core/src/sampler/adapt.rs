//! Robust adaptive Metropolis (Vihola 2012): the proposal factor `S` is
//! updated after every step so that `S Sᵀ` drives the acceptance
//! probability toward a target rate.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RobustAdaptiveMetropolis {
    factor: DMatrix<f64>,
    target: f64,
    decay: f64,
    steps: u64,
    frozen: bool,
    last_normal: DVector<f64>,
}

impl RobustAdaptiveMetropolis {
    /// Isotropic start with per-coordinate proposal sd `scale`.
    pub fn new(dim: usize, scale: f64, target: f64, decay: f64) -> Self {
        Self::with_factor(DMatrix::identity(dim, dim) * scale, target, decay)
    }

    /// Start from a lower-triangular proposal factor.
    pub fn with_factor(factor: DMatrix<f64>, target: f64, decay: f64) -> Self {
        let dim = factor.nrows();
        Self {
            factor,
            target,
            decay,
            steps: 0,
            frozen: false,
            last_normal: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// Proposal sd of a one-dimensional adapter.
    pub fn scale(&self) -> f64 {
        self.factor[(0, 0)]
    }

    /// Draws `S·U` with `U ~ N(0, I)` and remembers `U` for the next
    /// [`adapt`](Self::adapt).
    pub fn increment<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DVector<f64> {
        for v in self.last_normal.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        &self.factor * &self.last_normal
    }

    /// Stochastic-approximation step with the acceptance probability of
    /// the last proposal. No-op once frozen.
    pub fn adapt(&mut self, accept_prob: f64) {
        if self.frozen || !accept_prob.is_finite() {
            return;
        }
        self.steps += 1;
        let d = self.dim() as f64;
        let eta = (d * (self.steps as f64).powf(-self.decay)).min(1.0);
        let norm2 = self.last_normal.norm_squared();
        if norm2 == 0.0 {
            return;
        }
        let coef = eta * (accept_prob.min(1.0) - self.target) / norm2;
        let su = &self.factor * &self.last_normal;
        let updated = self.covariance() + &su * su.transpose() * coef;
        if let Some(chol) = Cholesky::new(updated) {
            let l = chol.unpack();
            if l.iter().all(|v| v.is_finite()) {
                self.factor = l;
            }
        }
    }

    /// Hash of the proposal factor, for checking that adaptation stopped.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.factor.iter() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Robbins–Monro tuning of a step size in `(0, 1]` on the log scale.
#[derive(Debug, Clone)]
pub struct StepSizeAdapter {
    log_step: f64,
    target: f64,
    decay: f64,
    n: u64,
    frozen: bool,
}

impl StepSizeAdapter {
    const MIN_LOG_STEP: f64 = -9.0;

    pub fn new(step: f64, target: f64, decay: f64) -> Self {
        Self {
            log_step: step.clamp(Self::MIN_LOG_STEP.exp(), 1.0).ln(),
            target,
            decay,
            n: 0,
            frozen: false,
        }
    }

    pub fn step(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn adapt(&mut self, accept_prob: f64) {
        if self.frozen {
            return;
        }
        self.n += 1;
        let eta = (self.n as f64).powf(-self.decay);
        self.log_step = (self.log_step + eta * (accept_prob - self.target)).clamp(Self::MIN_LOG_STEP, 0.0);
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.log_step.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}
