//! Block updates of the RW2 trend from its conditional prior.
//!
//! For a block `B` with complement `-B`, the conditional prior is Gaussian
//! with precision `κ R_BB` and mean `-R_BB⁻¹ R_B,-B r_-B`, which involves
//! only the (at most four) RW2 neighbours of the block. With exact
//! conditional-prior proposals the Metropolis–Hastings ratio reduces to the
//! likelihood ratio. The proposal may be damped towards the current value,
//! `μ + √(1-ε²)(r_B - μ) + ε ξ` with `ξ` a conditional-prior deviation;
//! this is still reversible with respect to the conditional prior, so the
//! ratio stays the likelihood ratio. `ε = 1` is the plain conditional prior.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::StructureMatrix;
use crate::error::{Error, Result};

/// Cached factorisation for one block `[start, end)`.
#[derive(Debug, Clone)]
pub struct TrendBlock {
    pub start: usize,
    pub end: usize,
    /// Indices outside the block with nonzero coupling.
    pub neighbors: Vec<usize>,
    /// `-R_BB⁻¹ R_B,nbr`.
    pub gain: DMatrix<f64>,
    /// Upper factor `Lᵀ` with `R_BB = L Lᵀ`.
    pub chol_upper: DMatrix<f64>,
}

impl TrendBlock {
    pub fn conditional_mean(&self, r: &[f64]) -> DVector<f64> {
        let nbr = DVector::from_iterator(self.neighbors.len(), self.neighbors.iter().map(|&j| r[j]));
        &self.gain * nbr
    }

    /// `mean + L⁻ᵀ z / √κ`.
    pub fn sample<R: Rng + ?Sized>(&self, r: &[f64], kappa: f64, rng: &mut R) -> Vec<f64> {
        let len = self.end - self.start;
        let z = DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let dev = self
            .chol_upper
            .solve_upper_triangular(&z)
            .expect("nonsingular block factor");
        let mean = self.conditional_mean(r);
        let sd = kappa.sqrt().recip();
        (0..len).map(|k| mean[k] + dev[k] * sd).collect()
    }

    /// Damped conditional-prior proposal with step `ε ∈ (0, 1]`.
    pub fn propose<R: Rng + ?Sized>(&self, r: &[f64], kappa: f64, step: f64, rng: &mut R) -> Vec<f64> {
        if step >= 1.0 {
            return self.sample(r, kappa, rng);
        }
        let mean = self.conditional_mean(r);
        let fresh = self.sample(r, kappa, rng);
        let keep = (1.0 - step * step).sqrt();
        (0..self.end - self.start)
            .map(|k| mean[k] + keep * (r[self.start + k] - mean[k]) + step * (fresh[k] - mean[k]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrendBlocks {
    dense: DMatrix<f64>,
    first_free: usize,
    block_size: usize,
    cache: HashMap<(usize, usize), TrendBlock>,
}

impl TrendBlocks {
    /// Blocks cover `[first_free, T)`; earlier coordinates are never moved.
    /// Every block leaves at least two coordinates outside it, so the
    /// block size is capped at `T - 2`.
    pub fn new(structure: &StructureMatrix, block_size: usize, first_free: usize) -> Result<Self> {
        let t = structure.dim();
        if block_size == 0 {
            return Err(Error::invalid("trend block size must be at least 1"));
        }
        if first_free >= t {
            return Err(Error::invalid("no free trend coordinates"));
        }
        Ok(Self {
            dense: structure.to_dense(),
            first_free,
            block_size: block_size.min(t - 2),
            cache: HashMap::new(),
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Contiguous blocks with a random phase: the first block has length
    /// in `1..=block_size`.
    pub fn partition<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(usize, usize)> {
        let t = self.dense.nrows();
        let free = t - self.first_free;
        let bs = self.block_size.min(free);
        let first = rng.random_range(1..=bs);
        let mut out = Vec::with_capacity(free / bs + 2);
        let mut a = self.first_free;
        let mut b = a + first;
        while a < t {
            out.push((a, b.min(t)));
            a = b;
            b = a + bs;
        }
        out
    }

    pub fn block(&mut self, start: usize, end: usize) -> Result<&TrendBlock> {
        if !self.cache.contains_key(&(start, end)) {
            let blk = conditional_block(&self.dense, start, end)?;
            self.cache.insert((start, end), blk);
        }
        Ok(&self.cache[&(start, end)])
    }
}

/// Conditional-prior factorisation of block `[start, end)` of a dense
/// structure matrix.
pub fn conditional_block(dense: &DMatrix<f64>, start: usize, end: usize) -> Result<TrendBlock> {
    let n = dense.nrows();
    if start >= end || end > n {
        return Err(Error::OutOfRange(format!("block [{start}, {end}) in dimension {n}")));
    }
    let len = end - start;
    let rbb = dense.view((start, start), (len, len)).into_owned();
    let neighbors: Vec<usize> = (0..n)
        .filter(|&j| (j < start || j >= end) && (start..end).any(|i| dense[(i, j)] != 0.0))
        .collect();
    let rbn = DMatrix::from_fn(len, neighbors.len(), |i, k| dense[(start + i, neighbors[k])]);
    let chol = Cholesky::new(rbb).ok_or_else(|| Error::Numerical(format!("singular block precision on [{start}, {end})")))?;
    let gain = -chol.solve(&rbn);
    Ok(TrendBlock {
        start,
        end,
        neighbors,
        gain,
        chol_upper: chol.l().transpose(),
    })
}

/// One left-to-right sweep of conditional-prior block proposals.
/// `log_likelihood` is evaluated at full trend vectors; returns the number
/// of accepted blocks and the number of blocks.
pub fn update_trend_blocks<R, F>(
    current: &mut [f64],
    blocks: &mut TrendBlocks,
    kappa_r: f64,
    step: f64,
    mut log_likelihood: F,
    rng: &mut R,
) -> Result<(usize, usize)>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let mut ll = log_likelihood(current);
    let parts = blocks.partition(rng);
    let mut accepted = 0;
    let mut proposal = current.to_vec();
    for &(a, b) in &parts {
        let draw = blocks.block(a, b)?.propose(current, kappa_r, step, rng);
        proposal[a..b].copy_from_slice(&draw);
        let new_ll = log_likelihood(&proposal);
        let u: f64 = rng.random();
        if u.ln() < new_ll - ll {
            current[a..b].copy_from_slice(&draw);
            ll = new_ll;
            accepted += 1;
        } else {
            proposal[a..b].copy_from_slice(&current[a..b]);
        }
    }
    Ok((accepted, parts.len()))
}
