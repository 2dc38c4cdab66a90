//! Least squares and conjugate Gaussian linear regression.
//!
//! Design matrices are row-major slices with `ncol` columns.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::dist::{inv_gamma, std_normal};
use crate::error::{Error, Result};

/// Ordinary least-squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub sse: f64,
    pub r_squared: f64,
    /// `(C^T C)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
    pub n: usize,
}

/// Sufficient statistics `C^T C`, `C^T y`, `y^T y` for one regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn zeros(dim: usize) -> Self {
        SuffStats {
            xtx: DMatrix::zeros(dim, dim),
            xty: DVector::zeros(dim),
            yty: 0.0,
            n: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// Adds one row. Only the upper triangle of `xtx` is accumulated; call
    /// [`SuffStats::symmetrize`] before use.
    pub fn push(&mut self, row: &[f64], y: f64) {
        let d = row.len();
        for a in 0..d {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            self.xty[a] += ra * y;
            for b in a..d {
                self.xtx[(a, b)] += ra * row[b];
            }
        }
        self.yty += y * y;
        self.n += 1;
    }

    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for a in 0..d {
            for b in 0..a {
                self.xtx[(a, b)] = self.xtx[(b, a)];
            }
        }
    }

    pub fn from_rows(rows: &[f64], ncol: usize, y: &[f64]) -> Self {
        let mut s = SuffStats::zeros(ncol);
        for (r, yi) in rows.chunks_exact(ncol).zip(y) {
            s.push(r, *yi);
        }
        s.symmetrize();
        s
    }

    /// `||y - C beta||^2` from the sufficient statistics.
    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(&self.xtx * beta));
        (self.yty - 2.0 * beta.dot(&self.xty) + quad).max(0.0)
    }
}

/// Least-squares fit via a Cholesky factor of `C^T C`.
///
/// Fails with [`Error::RankDeficient`] when `C^T C` is not numerically
/// positive definite.
pub fn ols(rows: &[f64], ncol: usize, y: &[f64], regression: &'static str) -> Result<OlsFit> {
    let n = y.len();
    debug_assert_eq!(rows.len(), n * ncol);
    if n < ncol {
        return Err(Error::TooFewRows {
            regression,
            rows: n,
            needed: ncol,
        });
    }
    let stats = SuffStats::from_rows(rows, ncol, y);
    let chol = chol_checked(&stats.xtx).ok_or_else(|| Error::RankDeficient {
        regression,
    })?;
    let coef = chol.solve(&stats.xty);
    let mut sse = 0.0;
    for (r, yi) in rows.chunks_exact(ncol).zip(y) {
        let fit: f64 = r.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
        sse += (yi - fit) * (yi - fit);
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    Ok(OlsFit {
        coef,
        sse,
        r_squared,
        xtx_inv: chol.inverse(),
        n,
    })
}

/// Cholesky factor that also rejects near-singular matrices whose pivots fall
/// below a relative threshold.
pub fn chol_checked(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone())?;
    let scale = m.diagonal().iter().cloned().fold(0.0_f64, f64::max);
    let l = chol.l_dirty();
    let min_pivot = (0..m.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > scale * 1e-13) {
        return None;
    }
    Some(chol)
}

/// Gaussian prior `beta ~ N(mean, cov)` with inverse-gamma `sigma^2 ~ IG(shape, scale)`.
///
/// The precision and the precision-weighted mean are cached.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionPrior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub shape: f64,
    pub scale: f64,
    precision: DMatrix<f64>,
    precision_mean: DVector<f64>,
    cov_chol_l: DMatrix<f64>,
}

impl RegressionPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0) {
            return Err(Error::Domain(format!(
                "inverse-gamma hyperparameters must be positive, got shape {shape} scale {scale}"
            )));
        }
        let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite(
            "regression prior covariance".to_string(),
        ))?;
        let precision = chol.inverse();
        let precision_mean = &precision * &mean;
        Ok(RegressionPrior {
            mean,
            cov,
            shape,
            scale,
            precision,
            precision_mean,
            cov_chol_l: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Draw `beta` from the prior.
    pub fn draw_beta<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| std_normal(rng));
        &self.mean + &self.cov_chol_l * z
    }

    pub fn draw_sigma2<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        inv_gamma(rng, self.shape, self.scale)
    }

    /// Posterior moments of `beta` given `sigma^2`:
    /// `cov = (P0 + C^T C / s2)^{-1}`, `mean = cov (P0 mu0 + C^T y / s2)`.
    pub fn beta_posterior(&self, stats: &SuffStats, sigma2: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mean, chol) = self.beta_posterior_chol(stats, sigma2)?;
        Ok((mean, chol.inverse()))
    }

    fn beta_posterior_chol(&self, stats: &SuffStats, sigma2: f64) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
        let prec = &self.precision + &stats.xtx / sigma2;
        let rhs = &self.precision_mean + &stats.xty / sigma2;
        let chol = Cholesky::new(prec).ok_or(Error::NotPositiveDefinite(
            "posterior precision of regression coefficients".to_string(),
        ))?;
        let mean = chol.solve(&rhs);
        Ok((mean, chol))
    }

    /// Draw `beta | sigma^2, data`. Uses `beta = mean + L^{-T} z` with `L L^T` the
    /// posterior precision.
    pub fn draw_beta_posterior<R: Rng + ?Sized>(
        &self,
        stats: &SuffStats,
        sigma2: f64,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        let (mean, chol) = self.beta_posterior_chol(stats, sigma2)?;
        let z = DVector::from_fn(self.dim(), |_, _| std_normal(rng));
        let l = chol.l();
        let shift = l
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or(Error::NotPositiveDefinite("posterior precision factor".to_string()))?;
        Ok(mean + shift)
    }

    /// Draw `sigma^2 | beta, data ~ IG(shape + n/2, scale + RSS/2)`.
    pub fn draw_sigma2_posterior<R: Rng + ?Sized>(&self, stats: &SuffStats, beta: &DVector<f64>, rng: &mut R) -> f64 {
        let shape = self.shape + 0.5 * stats.n as f64;
        let scale = self.scale + 0.5 * stats.rss(beta);
        inv_gamma(rng, shape, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use nalgebra::SymmetricEigen;

    fn synthetic(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = seeded(21);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x1 = std_normal(&mut rng);
            let x2 = std_normal(&mut rng);
            rows.extend_from_slice(&[1.0, x1, x2]);
            y.push(0.5 + 2.0 * x1 - x2 + 0.3 * std_normal(&mut rng));
        }
        (rows, y)
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let (rows, y) = synthetic(20);
        let fit = ols(&rows, 3, &y, "test").unwrap();
        // Oracle: explicit inverse of the normal-equations matrix.
        let c = DMatrix::from_row_slice(20, 3, &rows);
        let yv = DVector::from_column_slice(&y);
        let xtx = c.transpose() * &c;
        let inv = xtx.try_inverse().unwrap();
        let beta = &inv * c.transpose() * &yv;
        let resid = &yv - &c * &beta;
        let sse = resid.dot(&resid);
        for i in 0..3 {
            assert!((fit.coef[i] - beta[i]).abs() < 1e-8);
        }
        assert!((fit.sse / 17.0 - sse / 17.0).abs() < 1e-8);
        assert!((fit.xtx_inv.clone() - inv).abs().max() < 1e-8);
    }

    #[test]
    fn rank_deficient_design_is_named() {
        let rows = vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        let err = ols(&rows, 2, &[1.0, 2.0, 3.0], "mediator").unwrap_err();
        assert!(err.to_string().contains("mediator"));
    }

    #[test]
    fn scalar_conjugate_update() {
        // N(0,1) prior, sigma = 1, one observation (c = 1, y = 2) -> N(1, 1/2).
        let prior = RegressionPrior::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1), 2.0, 1.0).unwrap();
        let stats = SuffStats::from_rows(&[1.0], 1, &[2.0]);
        let (mean, cov) = prior.beta_posterior(&stats, 1.0).unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-15);
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_covariance_is_below_prior_in_loewner_order() {
        let mut rng = seeded(8);
        let a = DMatrix::from_fn(5, 5, |_, _| std_normal(&mut rng));
        let prior_cov = &a * a.transpose() + DMatrix::identity(5, 5);
        let prior = RegressionPrior::new(DVector::zeros(5), prior_cov.clone(), 2.0, 1.0).unwrap();
        let rows: Vec<f64> = (0..40).map(|_| std_normal(&mut rng)).collect();
        let y: Vec<f64> = (0..8).map(|_| std_normal(&mut rng)).collect();
        let stats = SuffStats::from_rows(&rows, 5, &y);
        let (_, post_cov) = prior.beta_posterior(&stats, 0.7).unwrap();
        let diff = prior_cov - post_cov;
        let eig = SymmetricEigen::new(diff).eigenvalues;
        assert!(eig.iter().all(|&e| e > -1e-10), "{eig:?}");
    }

    #[test]
    fn posterior_draws_have_posterior_moments() {
        let prior = RegressionPrior::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1), 2.0, 1.0).unwrap();
        let stats = SuffStats::from_rows(&[1.0], 1, &[2.0]);
        let mut rng = seeded(4);
        let n = 40_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| prior.draw_beta_posterior(&stats, 1.0, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 4.0 * (0.5 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 0.02);
    }

    #[test]
    fn rss_from_stats_matches_direct() {
        let (rows, y) = synthetic(15);
        let stats = SuffStats::from_rows(&rows, 3, &y);
        let beta = DVector::from_vec(vec![0.1, 1.0, -0.5]);
        let direct: f64 = rows
            .chunks_exact(3)
            .zip(&y)
            .map(|(r, yi)| (yi - (r[0] * 0.1 + r[1] - 0.5 * r[2])).powi(2))
            .sum();
        assert!((stats.rss(&beta) - direct).abs() < 1e-10);
    }
}
