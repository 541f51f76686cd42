//! Exact redistribution of periodic structure between trend and season.
//!
//! The likelihood sees `r` and `s` only through `η_t = r_t + s_{t mod C}`.
//! Holding `η` fixed, `s` given `η` is Gaussian under the priors alone:
//! with `S` the `T × C` season indicator matrix and `r = η - S s`, its
//! precision is `κ_r SᵀR_rS + κ_s R_s` on the sum-to-zero subspace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::StructureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SeasonalSplit {
    cycle: usize,
    /// `s = B a`, `a ∈ ℝ^{C-1}`: `s_k = a_k` for `k < C-1`, `s_{C-1} = -Σ a`.
    basis: DMatrix<f64>,
    /// `Sᵀ R_r S`.
    trend_part: DMatrix<f64>,
    seasonal_part: DMatrix<f64>,
}

impl SeasonalSplit {
    pub fn new(rw2: &StructureMatrix, crw1: &StructureMatrix) -> Result<Self> {
        let (t, c) = (rw2.dim(), crw1.dim());
        if c < 2 {
            return Err(Error::invalid("seasonal split needs a cycle of at least 2"));
        }
        let dense = rw2.to_dense();
        let mut trend_part = DMatrix::zeros(c, c);
        for a in 0..t {
            for b in 0..t {
                trend_part[(a % c, b % c)] += dense[(a, b)];
            }
        }
        let basis = DMatrix::from_fn(c, c - 1, |row, col| {
            if row == col {
                1.0
            } else if row == c - 1 {
                -1.0
            } else {
                0.0
            }
        });
        Ok(Self {
            cycle: c,
            basis,
            trend_part,
            seasonal_part: crw1.to_dense(),
        })
    }

    /// Mean and covariance of `s` given `η`.
    pub fn conditional(&self, rw2: &StructureMatrix, eta: &[f64], kappa_r: f64, kappa_s: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let c = self.cycle;
        let r_eta = rw2.apply(eta);
        let mut lin = DVector::zeros(c);
        for (t, v) in r_eta.iter().enumerate() {
            lin[t % c] += kappa_r * v;
        }
        let prec = &self.trend_part * kappa_r + &self.seasonal_part * kappa_s;
        let prec_a = self.basis.transpose() * prec * &self.basis;
        let chol = prec_a
            .cholesky()
            .ok_or_else(|| Error::Numerical("seasonal split precision is not positive definite".into()))?;
        let cov_a = chol.inverse();
        let mean_a = &cov_a * (self.basis.transpose() * lin);
        Ok((&self.basis * mean_a, &self.basis * cov_a * self.basis.transpose()))
    }

    /// Draws a new `(r, s)` with `r + S s` unchanged.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rw2: &StructureMatrix,
        trend: &mut [f64],
        seasonal: &mut [f64],
        kappa_r: f64,
        kappa_s: f64,
        rng: &mut R,
    ) -> Result<()> {
        let c = self.cycle;
        if seasonal.len() != c || trend.len() != rw2.dim() {
            return Err(Error::DimensionMismatch("seasonal split dimensions".into()));
        }
        let eta: Vec<f64> = trend.iter().enumerate().map(|(t, r)| r + seasonal[t % c]).collect();
        let (mean, cov) = self.conditional(rw2, &eta, kappa_r, kappa_s)?;
        // the free coordinates `a` are the first C-1 entries of `s`
        let factor = cov
            .view((0, 0), (c - 1, c - 1))
            .into_owned()
            .cholesky()
            .ok_or_else(|| Error::Numerical("seasonal split covariance is not positive definite".into()))?
            .l();
        let z = DVector::from_iterator(c - 1, (0..c - 1).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let a = mean.rows(0, c - 1).into_owned() + factor * z;
        let draw = &self.basis * a;
        seasonal.copy_from_slice(draw.as_slice());
        for (t, r) in trend.iter_mut().enumerate() {
            *r = eta[t] - seasonal[t % c];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Constrained conditioning through the KKT system
    /// `[[P, 1], [1ᵀ, 0]] [s; λ] = [b; 0]`.
    fn kkt_oracle(t: usize, c: usize, eta: &[f64], kr: f64, ks: f64) -> (DVector<f64>, DMatrix<f64>) {
        let r = StructureMatrix::rw2(t).unwrap().to_dense();
        let s_mat = DMatrix::from_fn(t, c, |row, col| if row % c == col { 1.0 } else { 0.0 });
        let p = s_mat.transpose() * &r * &s_mat * kr + StructureMatrix::crw1(c).unwrap().to_dense() * ks;
        let b = s_mat.transpose() * &r * DVector::from_column_slice(eta) * kr;
        let mut k = DMatrix::zeros(c + 1, c + 1);
        k.view_mut((0, 0), (c, c)).copy_from(&p);
        for i in 0..c {
            k[(i, c)] = 1.0;
            k[(c, i)] = 1.0;
        }
        let inv = k.try_inverse().unwrap();
        let mut rhs = DVector::zeros(c + 1);
        rhs.rows_mut(0, c).copy_from(&b);
        let sol = &inv * rhs;
        (sol.rows(0, c).into_owned(), inv.view((0, 0), (c, c)).into_owned())
    }

    #[test]
    fn conditional_matches_kkt_oracle() {
        let (t, c) = (11, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eta: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rw2 = StructureMatrix::rw2(t).unwrap();
        let split = SeasonalSplit::new(&rw2, &StructureMatrix::crw1(c).unwrap()).unwrap();
        let (mean, cov) = split.conditional(&rw2, &eta, 30.0, 2.0).unwrap();
        let (m2, c2) = kkt_oracle(t, c, &eta, 30.0, 2.0);
        assert!((&mean - &m2).norm() < 1e-10);
        assert!((&cov - &c2).norm() < 1e-10);
    }

    #[test]
    fn draws_preserve_sum_and_match_covariance() {
        let (t, c) = (9, 3);
        let rw2 = StructureMatrix::rw2(t).unwrap();
        let split = SeasonalSplit::new(&rw2, &StructureMatrix::crw1(c).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut trend: Vec<f64> = (0..t).map(|k| 0.1 * k as f64 + rng.random_range(-0.5..0.5)).collect();
        let mut seasonal = vec![0.3, -0.1, -0.2];
        let eta: Vec<f64> = (0..t).map(|k| trend[k] + seasonal[k % c]).collect();
        let (_, exact) = split.conditional(&rw2, &eta, 5.0, 1.0).unwrap();
        let n = 100_000;
        let mut second = DMatrix::<f64>::zeros(c, c);
        let mut mean = DVector::<f64>::zeros(c);
        for _ in 0..n {
            split.sample(&rw2, &mut trend, &mut seasonal, 5.0, 1.0, &mut rng).unwrap();
            assert!(seasonal.iter().sum::<f64>().abs() < 1e-12);
            for k in 0..t {
                assert!((trend[k] + seasonal[k % c] - eta[k]).abs() < 1e-10);
            }
            let v = DVector::from_column_slice(&seasonal);
            mean += &v;
            second += &v * v.transpose();
        }
        let mean = mean / n as f64;
        let cov = second / n as f64 - &mean * mean.transpose();
        assert!((&cov - &exact).norm() / exact.norm() < 0.03);
    }
}
