//! Cross-world Gaussian copula for the counterfactual confounders.
//!
//! Latent normals `(Z(1), Z(0))` of one cluster of size `N` have correlation
//!
//! ```text
//! Omega = [[C11, C10], [C10, C00]]
//! C11 = (1 - g1) I + g1 J,  C00 = (1 - g0) I + g0 J
//! C10 = (rho - rho*) I + rho* J,  rho* = rho (g0 + g1) / 2
//! ```
//!
//! Every block lies in the commutative algebra spanned by `I` and `J`, so
//! products, inverses and square roots are closed form ([`Equi`]).

use nalgebra::DMatrix;
use rand::Rng;

use crate::consts::{CDF_BRACKET_SDS, CDF_MAX_DOUBLINGS, GAMMA_MH_BURN};
use crate::dist::{norm_cdf, norm_pdf, std_normal};
use crate::error::{domain, Error, Result};

/// `x I + y J` for an `n x n` identity `I` and all-ones `J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equi {
    pub x: f64,
    pub y: f64,
    pub n: usize,
}

impl Equi {
    pub fn new(x: f64, y: f64, n: usize) -> Self {
        Equi { x, y, n }
    }

    /// Unit-diagonal equicorrelation `(1 - g) I + g J`.
    pub fn corr(g: f64, n: usize) -> Self {
        Equi::new(1.0 - g, g, n)
    }

    /// Eigenvalue on the complement of the ones vector.
    pub fn eig_orth(&self) -> f64 {
        self.x
    }

    /// Eigenvalue on the ones vector.
    pub fn eig_mean(&self) -> f64 {
        self.x + self.n as f64 * self.y
    }

    pub fn mul(&self, o: &Equi) -> Equi {
        debug_assert_eq!(self.n, o.n);
        Equi::new(
            self.x * o.x,
            self.x * o.y + self.y * o.x + self.n as f64 * self.y * o.y,
            self.n,
        )
    }

    pub fn sub(&self, o: &Equi) -> Equi {
        Equi::new(self.x - o.x, self.y - o.y, self.n)
    }

    /// `(aI + bJ)^{-1} = (1/a) I - b / (a (a + N b)) J`.
    pub fn inv(&self) -> Result<Equi> {
        let (a, m) = (self.eig_orth(), self.eig_mean());
        if a == 0.0 || m == 0.0 {
            return Err(Error::NotPositiveDefinite("singular equicorrelation block".to_string()));
        }
        Ok(Equi::new(1.0 / a, -self.y / (a * m), self.n))
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let s: f64 = v.iter().sum();
        v.iter().map(|vi| self.x * vi + self.y * s).collect()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.y + if i == j { self.x } else { 0.0 })
    }

    /// Draw from `N(0, self)`: `sqrt(x) (I - P) e + sqrt(x + N y) P e`, `P = J/N`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let (a, m) = (self.eig_orth(), self.eig_mean());
        if a < 0.0 || m < 0.0 {
            return Err(Error::NotPositiveDefinite("covariance has a negative eigenvalue".to_string()));
        }
        let e: Vec<f64> = (0..self.n).map(|_| std_normal(rng)).collect();
        let mean = e.iter().sum::<f64>() / self.n as f64;
        let (sa, sm) = (a.sqrt(), m.sqrt());
        Ok(e.iter().map(|ei| sa * (ei - mean) + sm * mean).collect())
    }
}

/// Same-world correlations, cross-world correlation and the derived `rho*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaParams {
    pub gamma1: f64,
    pub gamma0: f64,
    pub rho: f64,
    pub rho_star: f64,
    pub n: usize,
}

impl CopulaParams {
    /// Validates the positive-definiteness condition.
    pub fn new(gamma1: f64, gamma0: f64, rho: f64, n: usize) -> Result<Self> {
        let report = check_pd_condition(gamma1, gamma0, rho, n);
        if !report.holds {
            return Err(Error::NotPositiveDefinite(report.reason.unwrap_or_default()));
        }
        Ok(Self::unchecked(gamma1, gamma0, rho, n))
    }

    pub fn unchecked(gamma1: f64, gamma0: f64, rho: f64, n: usize) -> Self {
        CopulaParams {
            gamma1,
            gamma0,
            rho,
            rho_star: rho * (gamma0 + gamma1) / 2.0,
            n,
        }
    }

    pub fn c11(&self) -> Equi {
        Equi::corr(self.gamma1, self.n)
    }

    pub fn c00(&self) -> Equi {
        Equi::corr(self.gamma0, self.n)
    }

    pub fn c10(&self) -> Equi {
        Equi::new(self.rho - self.rho_star, self.rho_star, self.n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaBlocks {
    pub c11: DMatrix<f64>,
    pub c00: DMatrix<f64>,
    pub c10: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

/// Dense `2N x 2N` correlation matrix without any admissibility check.
pub fn assemble_omega(p: &CopulaParams) -> OmegaBlocks {
    let (c11, c00, c10) = (p.c11().dense(), p.c00().dense(), p.c10().dense());
    let n = p.n;
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    omega.view_mut((0, 0), (n, n)).copy_from(&c11);
    omega.view_mut((n, n), (n, n)).copy_from(&c00);
    omega.view_mut((0, n), (n, n)).copy_from(&c10);
    omega.view_mut((n, 0), (n, n)).copy_from(&c10.transpose());
    OmegaBlocks { c11, c00, c10, omega }
}

/// Dense blocks of an admissible parameter set.
pub fn build_omega(p: &CopulaParams) -> Result<OmegaBlocks> {
    let report = check_pd_condition(p.gamma1, p.gamma0, p.rho, p.n);
    if !report.holds {
        return Err(Error::NotPositiveDefinite(report.reason.unwrap_or_default()));
    }
    Ok(assemble_omega(p))
}

/// Outcome of the positive-definiteness check with both bounds on `rho^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdReport {
    pub holds: bool,
    /// `4 (1-g1)(1-g0) / (2-g1-g0)^2`.
    pub bound_orth: f64,
    /// `4 (1+(N-1)g1)(1+(N-1)g0) / (2+(N-1)(g1+g0))^2`.
    pub bound_mean: f64,
    pub reason: Option<String>,
}

impl PdReport {
    pub fn rho_sq_bound(&self) -> f64 {
        self.bound_orth.min(self.bound_mean)
    }
}

/// A singleton has no directions orthogonal to the mean, so its orthogonal
/// bound is infinite.
pub fn pd_bounds(gamma1: f64, gamma0: f64, n: usize) -> (f64, f64) {
    let nm1 = n as f64 - 1.0;
    let orth = if n > 1 {
        4.0 * (1.0 - gamma1) * (1.0 - gamma0) / (2.0 - gamma1 - gamma0).powi(2)
    } else {
        f64::INFINITY
    };
    let mean = 4.0 * (1.0 + nm1 * gamma1) * (1.0 + nm1 * gamma0) / (2.0 + nm1 * (gamma1 + gamma0)).powi(2);
    (orth, mean)
}

/// `-1/(N-1) < g_a < 1` and `rho^2 < min(bound_orth, bound_mean)`.
pub fn check_pd_condition(gamma1: f64, gamma0: f64, rho: f64, n: usize) -> PdReport {
    let (bound_orth, bound_mean) = pd_bounds(gamma1, gamma0, n);
    let lower = if n > 1 { -1.0 / (n as f64 - 1.0) } else { f64::NEG_INFINITY };
    let mut reason = None;
    if n == 0 {
        reason = Some("cluster size must be positive".to_string());
    } else if !rho.is_finite() || !gamma1.is_finite() || !gamma0.is_finite() {
        reason = Some("non-finite copula parameter".to_string());
    } else {
        for (name, g) in [("gamma1", gamma1), ("gamma0", gamma0)] {
            if !(g > lower && g < 1.0) {
                reason = Some(format!("{name} = {g} outside ({lower}, 1)"));
            }
        }
        if reason.is_none() && !(rho * rho < bound_orth.min(bound_mean)) {
            reason = Some(format!(
                "rho^2 = {} not below min({bound_orth}, {bound_mean})",
                rho * rho
            ));
        }
    }
    PdReport {
        holds: reason.is_none(),
        bound_orth,
        bound_mean,
        reason,
    }
}

/// `sqrt(min(bound_orth, bound_mean))`.
pub fn rho_upper_bound(gamma1: f64, gamma0: f64, n: usize) -> f64 {
    let (a, b) = pd_bounds(gamma1, gamma0, n);
    a.min(b).sqrt()
}

/// `rho ~ Unif(0, upper)`.
pub fn sample_rho<R: Rng + ?Sized>(gamma1: f64, gamma0: f64, n: usize, rng: &mut R) -> Result<f64> {
    let upper = rho_upper_bound(gamma1, gamma0, n);
    if !(upper > 0.0) {
        return domain(format!("rho prior upper bound {upper} is not positive"));
    }
    // Open interval: redraw the measure-zero endpoint 0.
    loop {
        let r = upper * rng.random::<f64>();
        if r > 0.0 {
            return Ok(r);
        }
    }
}

/// Sufficient statistics `(N, sum z, sum z^2)` of one cluster's latent normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquiStats {
    pub n: usize,
    pub s1: f64,
    pub s2: f64,
}

impl EquiStats {
    pub fn from_z(z: &[f64]) -> Self {
        EquiStats {
            n: z.len(),
            s1: z.iter().sum(),
            s2: z.iter().map(|v| v * v).sum(),
        }
    }

    /// Log copula density relative to independence.
    pub fn loglik(&self, gamma: f64) -> f64 {
        let nm1 = self.n as f64 - 1.0;
        let m = 1.0 + nm1 * gamma;
        let logdet = nm1 * (1.0 - gamma).ln() + m.ln();
        let quad = gamma / (1.0 - gamma) * self.s2 - gamma / ((1.0 - gamma) * m) * self.s1 * self.s1;
        -0.5 * logdet - 0.5 * quad
    }
}

/// `ln N(z; 0, (1-g)I + gJ) - ln N(z; 0, I)`.
pub fn equicorr_loglik(z: &[f64], gamma: f64) -> Result<f64> {
    let n = z.len();
    if n == 0 {
        return domain("empty latent vector");
    }
    let lower = if n > 1 { -1.0 / (n as f64 - 1.0) } else { f64::NEG_INFINITY };
    if !(gamma > lower && gamma < 1.0) {
        return domain(format!("gamma = {gamma} outside ({lower}, 1) for N = {n}"));
    }
    Ok(EquiStats::from_z(z).loglik(gamma))
}

/// Retained `(gamma1, gamma0)` states and the acceptance rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaChain {
    pub draws: Vec<(f64, f64)>,
    pub acceptance_rate: f64,
}

impl GammaChain {
    pub fn last(&self) -> (f64, f64) {
        *self.draws.last().expect("chain has retained draws")
    }
}

/// Independence Metropolis-Hastings for `(gamma1, gamma0)` under `Unif(0,1)`
/// priors, proposing from the prior. `treated`/`control` hold per-cluster
/// latent-normal statistics of each arm. Keeps steps `burn..n_steps`.
pub fn mh_update_gammas<R: Rng + ?Sized>(
    treated: &[EquiStats],
    control: &[EquiStats],
    n_steps: usize,
    burn: usize,
    rng: &mut R,
) -> GammaChain {
    let ll = |stats: &[EquiStats], g: f64| stats.iter().map(|s| s.loglik(g)).sum::<f64>();
    let draw_unit = |rng: &mut R| loop {
        let u = rng.random::<f64>();
        if u > 0.0 {
            return u;
        }
    };
    let mut g1 = draw_unit(rng);
    let mut g0 = draw_unit(rng);
    let mut cur = ll(treated, g1) + ll(control, g0);
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(n_steps.saturating_sub(burn));
    for step in 0..n_steps {
        let p1 = draw_unit(rng);
        let p0 = draw_unit(rng);
        let prop = ll(treated, p1) + ll(control, p0);
        let log_ratio = prop - cur;
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        if rng.random::<f64>() < accept_prob {
            g1 = p1;
            g0 = p0;
            cur = prop;
            accepted += 1;
        }
        if step >= burn {
            draws.push((g1, g0));
        }
    }
    if draws.is_empty() {
        draws.push((g1, g0));
    }
    GammaChain {
        draws,
        acceptance_rate: accepted as f64 / n_steps.max(1) as f64,
    }
}

/// Default chain length wrapper returning only the final state.
pub fn mh_gamma_final_state<R: Rng + ?Sized>(
    treated: &[EquiStats],
    control: &[EquiStats],
    n_steps: usize,
    rng: &mut R,
) -> (f64, f64) {
    mh_update_gammas(treated, control, n_steps, GAMMA_MH_BURN.min(n_steps.saturating_sub(1)), rng).last()
}

/// Gaussian mixture `sum_l w_l N(mu_l, sd_l^2)` for one unit and arm.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMarginal {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl MixtureMarginal {
    /// Drops zero-weight components and renormalizes.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if weights.len() != means.len() || weights.len() != sds.len() {
            return Err(Error::Mismatch("mixture component arrays differ in length".to_string()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) || sds.iter().any(|s| !(*s > 0.0)) {
            return domain("mixture needs nonnegative weights with positive total and positive SDs");
        }
        let mut out = MixtureMarginal {
            weights: Vec::new(),
            means: Vec::new(),
            sds: Vec::new(),
        };
        for ((w, m), s) in weights.iter().zip(&means).zip(&sds) {
            if *w > 0.0 {
                out.weights.push(w / total);
                out.means.push(*m);
                out.sds.push(*s);
            }
        }
        Ok(out)
    }

    pub fn cdf(&self, d: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * norm_cdf((d - m) / s))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    pub fn pdf(&self, d: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * norm_pdf((d - m) / s) / s)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    /// Solves `F(d) = u` by bracketing around the mixture mean, then
    /// Newton steps safeguarded by bisection. Succeeds once
    /// `|F(d) - u| <= tol`, refining further while `|F(d) - u|` exceeds
    /// `tol * min(u, 1 - u)` and the bracket can still shrink.
    pub fn invert(&self, u: f64, tol: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Inversion(format!("target probability {u} not in (0, 1)")));
        }
        let max_sd = self.sds.iter().cloned().fold(0.0, f64::max);
        let centre = self.mean();
        let mut width = CDF_BRACKET_SDS * max_sd;
        let mut lo = centre - width;
        let mut doublings = 0;
        while self.cdf(lo) > u {
            if doublings == CDF_MAX_DOUBLINGS {
                return Err(Error::Inversion(format!("lower bracket not found for u = {u}")));
            }
            width *= 2.0;
            lo = centre - width;
            doublings += 1;
        }
        width = CDF_BRACKET_SDS * max_sd;
        let mut hi = centre + width;
        doublings = 0;
        while self.cdf(hi) < u {
            if doublings == CDF_MAX_DOUBLINGS {
                return Err(Error::Inversion(format!("upper bracket not found for u = {u}")));
            }
            width *= 2.0;
            hi = centre + width;
            doublings += 1;
        }
        let fine = tol * u.min(1.0 - u);
        let mut x = 0.5 * (lo + hi);
        let mut best = (f64::INFINITY, x);
        for _ in 0..300 {
            let f = self.cdf(x) - u;
            if f.abs() < best.0 {
                best = (f.abs(), x);
            }
            if f.abs() <= fine {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
            let dens = self.pdf(x);
            let newton = if dens > 0.0 { x - f / dens } else { f64::NAN };
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        if best.0 <= tol {
            Ok(best.1)
        } else {
            Err(Error::Inversion(format!(
                "no root within tolerance for u = {u} (residual {})",
                best.0
            )))
        }
    }
}

/// Conditional law of `Z(0)` given `Z(1) = z1`:
/// mean `C10 C11^{-1} z1`, covariance `C00 - C10 C11^{-1} C10`.
pub fn conditional_cross_world(z1: &[f64], params: &CopulaParams) -> Result<(Vec<f64>, Equi)> {
    if z1.len() != params.n {
        return Err(Error::Mismatch(format!(
            "latent vector has length {}, cluster size is {}",
            z1.len(),
            params.n
        )));
    }
    let report = check_pd_condition(params.gamma1, params.gamma0, params.rho, params.n);
    if !report.holds {
        return Err(Error::NotPositiveDefinite(report.reason.unwrap_or_default()));
    }
    let b = params.c10();
    let gain = b.mul(&params.c11().inv()?);
    let mean = gain.apply(z1);
    let cov = params.c00().sub(&gain.mul(&b));
    Ok((mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use nalgebra::{DVector, SymmetricEigen};
    use proptest::prelude::*;
    use rand::Rng;

    fn min_eig(m: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(m.clone()).eigenvalues.min()
    }

    #[test]
    fn omega_special_cases() {
        let p = CopulaParams::new(0.3, 0.2, 0.5, 1).unwrap();
        let o = build_omega(&p).unwrap().omega;
        assert_eq!(o, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]));
        let id = build_omega(&CopulaParams::new(0.0, 0.0, 0.0, 4).unwrap()).unwrap().omega;
        assert_eq!(id, DMatrix::identity(8, 8));
        let p = CopulaParams::new(0.8, 0.6, 0.5, 3).unwrap();
        assert!((p.rho_star - 0.35).abs() < 1e-15);
        let b = build_omega(&p).unwrap();
        assert!((b.c10[(0, 1)] - 0.35).abs() < 1e-15);
        assert!((b.c10[(1, 1)] - 0.5).abs() < 1e-15);
        assert!(build_omega(&CopulaParams::unchecked(0.8, 0.6, 0.99, 3)).is_err());
    }

    #[test]
    fn pd_bounds_examples() {
        let r = check_pd_condition(0.0, 0.0, 0.99, 5);
        assert!(r.holds && r.bound_orth == 1.0 && r.bound_mean == 1.0);
        let r = check_pd_condition(0.5, 0.5, 0.99, 10);
        assert!((r.bound_orth - 1.0).abs() < 1e-15 && (r.bound_mean - 1.0).abs() < 1e-15);
        assert!(!check_pd_condition(0.5, 0.5, 1.0, 10).holds);
        let up = rho_upper_bound(0.8, 0.6, 2);
        let a = 2.0 * 0.08f64.sqrt() / 0.6;
        let b = 2.0 * (1.8f64 * 1.6).sqrt() / 3.4;
        assert!((up - a.min(b)).abs() < 1e-12);
        assert!((up - 0.9428).abs() < 1e-4);
        assert!(!check_pd_condition(-0.5, 0.0, 0.0, 4).holds);
    }

    #[test]
    fn rho_draws_are_admissible() {
        let mut rng = seeded(1);
        for _ in 0..2000 {
            let (g1, g0) = (rng.random::<f64>(), rng.random::<f64>());
            let n = rng.random_range(1..30);
            let r = sample_rho(g1, g0, n, &mut rng).unwrap();
            assert!(r > 0.0 && check_pd_condition(g1, g0, r, n).holds);
        }
        let n = 50_000;
        let m = (0..n).map(|_| sample_rho(0.0, 0.0, 5, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 4.0 * (1.0 / 12.0 / n as f64).sqrt());
    }

    #[test]
    fn equicorr_loglik_dense_oracle() {
        // Log-determinant at N = 3, gamma = 0.5 is -ln 2.
        let r = Equi::corr(0.5, 3).dense();
        assert!((r.determinant().ln() + 2f64.ln()).abs() < 1e-14);
        assert_eq!(equicorr_loglik(&[1.0, -2.0, 0.3], 0.0).unwrap(), 0.0);
        let mut rng = seeded(2);
        for _ in 0..50 {
            let n = rng.random_range(1..9);
            let g = rng.random::<f64>() * 0.98;
            let z: Vec<f64> = (0..n).map(|_| 2.0 * std_normal(&mut rng)).collect();
            let rd = Equi::corr(g, n).dense();
            let chol = rd.clone().cholesky().unwrap();
            let zv = DVector::from_column_slice(&z);
            let quad = zv.dot(&chol.solve(&zv));
            let logdet = 2.0 * chol.l().diagonal().map(|v| v.ln()).sum();
            let dense = -0.5 * logdet - 0.5 * quad + 0.5 * zv.dot(&zv);
            assert!((equicorr_loglik(&z, g).unwrap() - dense).abs() < 1e-10);
        }
        assert!(equicorr_loglik(&[0.1, 0.2], 1.0).is_err());
        assert!(equicorr_loglik(&[0.1, 0.2, 0.3], -0.6).is_err());
    }

    proptest! {
        #[test]
        fn equicorr_loglik_vanishes_at_zero(z in proptest::collection::vec(-5.0f64..5.0, 1..10)) {
            let v = equicorr_loglik(&z, 1e-9).unwrap();
            prop_assert!(v.abs() < 1e-6);
        }

        #[test]
        fn conditional_mean_is_linear_and_cov_free_of_z(
            g1 in 0.0f64..0.95, g0 in 0.0f64..0.95, frac in 0.0f64..0.99, n in 1usize..8,
            a in -3.0f64..3.0, seed in 0u64..1000,
        ) {
            let rho = frac * rho_upper_bound(g1, g0, n);
            let p = CopulaParams::new(g1, g0, rho, n).unwrap();
            let mut rng = seeded(seed);
            let z: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
            let w: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
            let zw: Vec<f64> = z.iter().zip(&w).map(|(x, y)| a * x + y).collect();
            let (mz, cz) = conditional_cross_world(&z, &p).unwrap();
            let (mw, cw) = conditional_cross_world(&w, &p).unwrap();
            let (mzw, czw) = conditional_cross_world(&zw, &p).unwrap();
            prop_assert_eq!(cz, cw);
            prop_assert_eq!(cz, czw);
            for i in 0..n {
                prop_assert!((mzw[i] - (a * mz[i] + mw[i])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conditional_bivariate_case() {
        let p = CopulaParams::new(0.2, 0.4, 0.5, 1).unwrap();
        let (m, c) = conditional_cross_world(&[1.0], &p).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!((c.dense()[(0, 0)] - 0.75).abs() < 1e-15);
        let p = CopulaParams::new(0.2, 0.4, 0.0, 3).unwrap();
        let (m, c) = conditional_cross_world(&[1.0, 2.0, 3.0], &p).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
        assert_eq!(c, p.c00());
    }

    #[test]
    fn conditional_dense_oracle_n6() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let (g1, g0) = (rng.random::<f64>() * 0.9, rng.random::<f64>() * 0.9);
            let rho = 0.95 * rho_upper_bound(g1, g0, 6) * rng.random::<f64>();
            let p = CopulaParams::new(g1, g0, rho, 6).unwrap();
            let z: Vec<f64> = (0..6).map(|_| std_normal(&mut rng)).collect();
            let (m, c) = conditional_cross_world(&z, &p).unwrap();
            let o = assemble_omega(&p).omega;
            let s11 = o.view((0, 0), (6, 6)).into_owned();
            let s01 = o.view((6, 0), (6, 6)).into_owned();
            let s00 = o.view((6, 6), (6, 6)).into_owned();
            let inv = s11.try_inverse().unwrap();
            let dm = &s01 * &inv * DVector::from_column_slice(&z);
            let dc = s00 - &s01 * &inv * s01.transpose();
            for i in 0..6 {
                assert!((m[i] - dm[i]).abs() < 1e-10);
            }
            assert!((c.dense() - dc).abs().max() < 1e-10);
            assert!(min_eig(&c.dense()) > 0.0);
        }
    }

    #[test]
    fn equi_sampling_has_target_covariance() {
        let e = Equi::new(0.6, 0.3, 3);
        let mut rng = seeded(4);
        let n = 100_000;
        let mut s = DMatrix::<f64>::zeros(3, 3);
        for _ in 0..n {
            let v = DVector::from_vec(e.sample(&mut rng).unwrap());
            s += &v * v.transpose();
        }
        s /= n as f64;
        assert!((s - e.dense()).abs().max() < 0.03);
    }

    #[test]
    fn mixture_cdf_examples() {
        let single = MixtureMarginal::new(vec![1.0], vec![0.0], vec![1.0]).unwrap();
        assert_eq!(single.cdf(0.0), 0.5);
        assert!(single.invert(0.5, 1e-8).unwrap().abs() < 1e-8);
        let sym = MixtureMarginal::new(vec![0.5, 0.5], vec![-2.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert!((sym.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!(single.invert(0.0, 1e-8).is_err());
        assert!(single.invert(1.0, 1e-8).is_err());
    }

    fn random_mixture(rng: &mut crate::rng::SimRng, k: usize) -> MixtureMarginal {
        let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let m: Vec<f64> = (0..k).map(|_| 5.0 * std_normal(rng)).collect();
        let s: Vec<f64> = (0..k).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
        MixtureMarginal::new(w, m, s).unwrap()
    }

    #[test]
    fn mixture_cdf_matches_quadrature() {
        // Composite Simpson on the density from far left.
        let mut rng = seeded(5);
        let mix = random_mixture(&mut rng, 5);
        let lo = -60.0;
        for &d in &[-4.0, -1.0, 0.0, 2.5, 7.0] {
            let n = 200_000;
            let h = (d - lo) / n as f64;
            let mut acc = mix.pdf(lo) + mix.pdf(d);
            for i in 1..n {
                let x = lo + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * mix.pdf(x);
            }
            let quad = acc * h / 3.0;
            assert!((quad - mix.cdf(d)).abs() < 1e-8, "{d}: {quad} vs {}", mix.cdf(d));
        }
    }

    #[test]
    fn inversion_round_trip_and_monotone() {
        let mut rng = seeded(6);
        let mix = random_mixture(&mut rng, 5);
        let mut us: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        us.extend([1e-12, 1e-9, 1.0 - 1e-9, 1.0 - 1e-12]);
        us.sort_by(f64::total_cmp);
        let mut prev = f64::NEG_INFINITY;
        for u in us {
            let d = mix.invert(u, 1e-8).unwrap();
            assert!((mix.cdf(d) - u).abs() <= 1e-8);
            assert!(d >= prev);
            prev = d;
        }
        // Relative accuracy deep in the lower tail.
        let d = mix.invert(1e-12, 1e-8).unwrap();
        assert!((mix.cdf(d) / 1e-12 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn singleton_clusters_leave_gamma_at_prior() {
        let mut rng = seeded(7);
        let stats: Vec<EquiStats> = (0..30).map(|_| EquiStats::from_z(&[std_normal(&mut rng)])).collect();
        let chain = mh_update_gammas(&stats, &stats, 5500, 500, &mut rng);
        assert_eq!(chain.acceptance_rate, 1.0);
        let mut g1: Vec<f64> = chain.draws.iter().map(|d| d.0).collect();
        g1.sort_by(f64::total_cmp);
        // KS distance to Unif(0,1).
        let n = g1.len() as f64;
        let ks = g1
            .iter()
            .enumerate()
            .map(|(i, v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / n.sqrt(), "ks {ks}");
    }

    #[test]
    fn gamma_posterior_recovers_truth() {
        let mut rng = seeded(8);
        let truth = 0.5;
        let corr = Equi::corr(truth, 20);
        let treated: Vec<EquiStats> = (0..50).map(|_| EquiStats::from_z(&corr.sample(&mut rng).unwrap())).collect();
        let control: Vec<EquiStats> = (0..50)
            .map(|_| EquiStats::from_z(&Equi::corr(0.1, 20).sample(&mut rng).unwrap()))
            .collect();
        let chain = mh_update_gammas(&treated, &control, 20_000, 2000, &mut rng);
        let m1 = chain.draws.iter().map(|d| d.0).sum::<f64>() / chain.draws.len() as f64;
        assert!((m1 - truth).abs() < 0.1, "{m1}");
        assert!((0.0..=1.0).contains(&chain.acceptance_rate));
    }

    #[test]
    fn independent_copula_reproduces_control_marginal() {
        // rho = 0: Z(0) is independent N(0, C00); mapping through Phi and the
        // inverse mixture CDF must give draws from the mixture itself.
        let mut rng = seeded(9);
        let mix = random_mixture(&mut rng, 3);
        let p = CopulaParams::new(0.3, 0.0, 0.0, 1).unwrap();
        let n = 10_000;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| {
                let z1 = [std_normal(&mut rng)];
                let (m, c) = conditional_cross_world(&z1, &p).unwrap();
                let z0 = m[0] + c.sample(&mut rng).unwrap()[0];
                mix.invert(crate::dist::norm_cdf(z0).clamp(1e-12, 1.0 - 1e-12), 1e-8).unwrap()
            })
            .collect();
        draws.sort_by(f64::total_cmp);
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let f = mix.cdf(*d);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / (n as f64).sqrt(), "ks {ks}");
    }
}
