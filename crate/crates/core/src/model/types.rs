//! Value types of the truncated model. Class indices are 0-based.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::consts::{DEFAULT_TRUNCATION, SIMPLEX_TOL};
use crate::dataset::DKind;
use crate::design::{dot, DesignSpec};
use crate::dist::{self, categorical, ln_normal_pdf, ln_poisson_pmf, NormalInverseGamma};
use crate::error::{Error, Result};
use crate::linreg::RegressionPrior;

/// Truncation levels: `k` cluster-level classes, `l` outcome classes per
/// cluster class, `m` covariate classes per outcome class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationLevels {
    pub k: usize,
    pub l: usize,
    pub m: usize,
}

impl TruncationLevels {
    pub fn new(k: usize, l: usize, m: usize) -> Result<Self> {
        if k == 0 || l == 0 || m == 0 {
            return Err(Error::InvalidConfig(format!(
                "truncation levels must be at least 1, got K={k} L={l} M={m}"
            )));
        }
        Ok(TruncationLevels { k, l, m })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }
}

impl Default for TruncationLevels {
    fn default() -> Self {
        TruncationLevels {
            k: DEFAULT_TRUNCATION,
            l: DEFAULT_TRUNCATION,
            m: DEFAULT_TRUNCATION,
        }
    }
}

/// `Gamma(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::Domain(format!(
                "gamma prior needs positive shape and rate, got ({shape}, {rate})"
            )));
        }
        Ok(GammaPrior { shape, rate })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        dist::gamma(rng, self.shape, self.rate)
    }
}

impl Default for GammaPrior {
    fn default() -> Self {
        GammaPrior { shape: 1.0, rate: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationParams {
    pub alpha_star: f64,
    pub alpha_theta: f64,
    pub alpha_phi: f64,
    pub prior_star: GammaPrior,
    pub prior_theta: GammaPrior,
    pub prior_phi: GammaPrior,
}

impl ConcentrationParams {
    /// Fixed values under default `Gamma(1, 1)` priors.
    pub fn new(alpha_star: f64, alpha_theta: f64, alpha_phi: f64) -> Result<Self> {
        for (name, a) in [("alpha_star", alpha_star), ("alpha_theta", alpha_theta), ("alpha_phi", alpha_phi)] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Domain(format!("{name} must be positive, got {a}")));
            }
        }
        Ok(ConcentrationParams {
            alpha_star,
            alpha_theta,
            alpha_phi,
            prior_star: GammaPrior::default(),
            prior_theta: GammaPrior::default(),
            prior_phi: GammaPrior::default(),
        })
    }

    pub fn with_priors(mut self, star: GammaPrior, theta: GammaPrior, phi: GammaPrior) -> Self {
        self.prior_star = star;
        self.prior_theta = theta;
        self.prior_phi = phi;
        self
    }

    /// Replace the current values with a draw from the priors.
    pub fn redraw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.alpha_star = self.prior_star.draw(rng);
        self.alpha_theta = self.prior_theta.draw(rng);
        self.alpha_phi = self.prior_phi.draw(rng);
    }
}

/// Map stick fractions to weights: `w_k = s_k prod_{j<k} (1 - s_j)`.
pub fn stick_break(fractions: &[f64], out: &mut [f64]) {
    let mut rest = 1.0;
    for (s, w) in fractions.iter().zip(out.iter_mut()) {
        *w = s * rest;
        rest *= 1.0 - s;
    }
}

/// Three-level stick-breaking weights. Last fraction at every level is 1.
///
/// Layout: `v_theta`/`w_theta` are `K x L` row-major; `v_phi`/`w_phi` are
/// `K x L x M` with `m` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct StickWeights {
    pub levels: TruncationLevels,
    pub s_star: Vec<f64>,
    pub pi_star: Vec<f64>,
    pub v_theta: Vec<f64>,
    pub w_theta: Vec<f64>,
    pub v_phi: Vec<f64>,
    pub w_phi: Vec<f64>,
    /// `ln(1 - v)` per fraction, in the layout of the fractions; `-inf` for
    /// every final fraction. Exact for sampled fractions, whose `v` may round
    /// to 1.
    pub ln_rest_star: Vec<f64>,
    pub ln_rest_theta: Vec<f64>,
    pub ln_rest_phi: Vec<f64>,
}

impl StickWeights {
    /// Builds weights from fractions, forcing every final fraction to 1.
    pub fn from_fractions(levels: TruncationLevels, mut s_star: Vec<f64>, mut v_theta: Vec<f64>, mut v_phi: Vec<f64>) -> Result<Self> {
        let TruncationLevels { k, l, m } = levels;
        if s_star.len() != k || v_theta.len() != k * l || v_phi.len() != k * l * m {
            return Err(Error::Mismatch(format!(
                "stick fractions have lengths ({}, {}, {}) for K={k} L={l} M={m}",
                s_star.len(),
                v_theta.len(),
                v_phi.len()
            )));
        }
        if s_star.iter().chain(&v_theta).chain(&v_phi).any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Domain("stick fractions must lie in [0, 1]".to_string()));
        }
        s_star[k - 1] = 1.0;
        for row in v_theta.chunks_exact_mut(l) {
            row[l - 1] = 1.0;
        }
        for slice in v_phi.chunks_exact_mut(m) {
            slice[m - 1] = 1.0;
        }
        let ln_rest = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| (-x).ln_1p()).collect() };
        let mut w = StickWeights {
            levels,
            pi_star: vec![0.0; k],
            w_theta: vec![0.0; k * l],
            w_phi: vec![0.0; k * l * m],
            ln_rest_star: ln_rest(&s_star),
            ln_rest_theta: ln_rest(&v_theta),
            ln_rest_phi: ln_rest(&v_phi),
            s_star,
            v_theta,
            v_phi,
        };
        w.recompute();
        Ok(w)
    }

    /// Replaces the derived `ln(1 - v)` of every non-final fraction with an
    /// exact value from the sampler.
    pub fn with_ln_rest(mut self, star: &[f64], theta: &[f64], phi: &[f64]) -> Result<Self> {
        let TruncationLevels { k, l, m } = self.levels;
        if star.len() != k || theta.len() != k * l || phi.len() != k * l * m {
            return Err(Error::Mismatch("log complements do not match the stick layout".to_string()));
        }
        for (dst, src, group) in [
            (&mut self.ln_rest_star, star, k),
            (&mut self.ln_rest_theta, theta, l),
            (&mut self.ln_rest_phi, phi, m),
        ] {
            for (d, s) in dst.chunks_exact_mut(group).zip(src.chunks_exact(group)) {
                d[..group - 1].copy_from_slice(&s[..group - 1]);
            }
        }
        Ok(self)
    }

    /// Recompute weights from the current fractions.
    pub fn recompute(&mut self) {
        let TruncationLevels { l, m, .. } = self.levels;
        stick_break(&self.s_star, &mut self.pi_star);
        for (v, w) in self.v_theta.chunks_exact(l).zip(self.w_theta.chunks_exact_mut(l)) {
            stick_break(v, w);
        }
        for (v, w) in self.v_phi.chunks_exact(m).zip(self.w_phi.chunks_exact_mut(m)) {
            stick_break(v, w);
        }
    }

    pub fn w_theta_row(&self, k: usize) -> &[f64] {
        let l = self.levels.l;
        &self.w_theta[k * l..(k + 1) * l]
    }

    pub fn w_phi_slice(&self, k: usize, l: usize) -> &[f64] {
        let (ll, m) = (self.levels.l, self.levels.m);
        let start = (k * ll + l) * m;
        &self.w_phi[start..start + m]
    }

    /// Outcome-class weights marginalized over cluster classes: `sum_k pi_k w_kl`.
    pub fn marginal_theta_weights(&self) -> Vec<f64> {
        let l = self.levels.l;
        let mut out = vec![0.0; l];
        for (k, p) in self.pi_star.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.w_theta_row(k)) {
                *o += p * w;
            }
        }
        out
    }

    pub fn draw_k<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        categorical(rng, &self.pi_star)
    }

    pub fn draw_l<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        categorical(rng, self.w_theta_row(k))
    }

    pub fn draw_m<R: Rng + ?Sized>(&self, k: usize, l: usize, rng: &mut R) -> usize {
        categorical(rng, self.w_phi_slice(k, l))
    }

    /// Checks every weight vector sums to one within the simplex tolerance.
    pub fn check(&self) -> Result<()> {
        let TruncationLevels { l, m, .. } = self.levels;
        let bad = |w: &[f64]| (w.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL || w.iter().any(|x| *x < 0.0);
        if bad(&self.pi_star) || self.w_theta.chunks_exact(l).any(bad) || self.w_phi.chunks_exact(m).any(bad) {
            return Err(Error::Domain("stick-breaking weights left the simplex".to_string()));
        }
        Ok(())
    }
}

/// One Gaussian linear regression: coefficients and residual variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionAtom {
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

impl RegressionAtom {
    pub fn mean(&self, row: &[f64]) -> f64 {
        dot(self.beta.as_slice(), row)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn ln_pdf(&self, row: &[f64], value: f64) -> f64 {
        ln_normal_pdf(value, self.mean(row), self.sigma2)
    }
}

/// Outcome, mediator and confounder regressions of one outcome class.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaAtom {
    pub y: RegressionAtom,
    pub m: RegressionAtom,
    pub d: RegressionAtom,
}

impl ThetaAtom {
    /// `ln p(D, M, Y | theta)` for one individual. Binary D uses the probit
    /// likelihood `Phi(c beta)^D (1 - Phi(c beta))^(1 - D)`.
    #[allow(clippy::too_many_arguments)]
    pub fn ln_dmy(&self, d_kind: DKind, d_row: &[f64], m_row: &[f64], y_row: &[f64], d: f64, m: f64, y: f64) -> f64 {
        self.ln_d(d_kind, d_row, d) + self.m.ln_pdf(m_row, m) + self.y.ln_pdf(y_row, y)
    }

    pub fn ln_d(&self, d_kind: DKind, d_row: &[f64], d: f64) -> f64 {
        match d_kind {
            DKind::Continuous => self.d.ln_pdf(d_row, d),
            DKind::Binary => {
                let eta = self.d.mean(d_row);
                if d > 0.5 {
                    dist::ln_norm_cdf(eta)
                } else {
                    dist::ln_norm_cdf(-eta)
                }
            }
        }
    }
}

/// Diagonal Gaussian for the individual covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiAtom {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl PhiAtom {
    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, mu), v)| ln_normal_pdf(*x, *mu, *v))
            .sum()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(mu, v)| mu + v.sqrt() * dist::std_normal(rng))
            .collect()
    }
}

/// Cluster-level atom: Poisson rate for the size and diagonal Gaussian for V.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaAtom {
    pub lambda_n: f64,
    pub v_mean: Vec<f64>,
    pub v_var: Vec<f64>,
}

impl EtaAtom {
    pub fn ln_pdf(&self, n: usize, v: &[f64]) -> f64 {
        let lv: f64 = v
            .iter()
            .zip(&self.v_mean)
            .zip(&self.v_var)
            .map(|((x, mu), s)| ln_normal_pdf(*x, *mu, *s))
            .sum();
        ln_poisson_pmf(n as u64, self.lambda_n) + lv
    }

    pub fn draw_v<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.v_mean
            .iter()
            .zip(&self.v_var)
            .map(|(mu, v)| mu + v.sqrt() * dist::std_normal(rng))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndicators {
    /// Per cluster, in `0..K`.
    pub zeta_n: Vec<usize>,
    /// Per individual (global index), in `0..L`.
    pub zeta_y: Vec<usize>,
    /// Per individual (global index), in `0..M`.
    pub zeta_x: Vec<usize>,
}

impl ClassIndicators {
    pub fn check(&self, levels: TruncationLevels, n_clusters: usize, n_total: usize) -> Result<()> {
        if self.zeta_n.len() != n_clusters || self.zeta_y.len() != n_total || self.zeta_x.len() != n_total {
            return Err(Error::Mismatch("class indicators do not match dataset dimensions".to_string()));
        }
        if self.zeta_n.iter().any(|k| *k >= levels.k)
            || self.zeta_y.iter().any(|l| *l >= levels.l)
            || self.zeta_x.iter().any(|m| *m >= levels.m)
        {
            return Err(Error::Domain("class indicator outside truncation range".to_string()));
        }
        Ok(())
    }
}

/// Base-measure hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasureHyper {
    pub design: DesignSpec,
    pub d_kind: DKind,
    pub y: RegressionPrior,
    pub m: RegressionPrior,
    /// For binary D only the coefficient prior is used; `sigma_d` is fixed at 1.
    pub d: RegressionPrior,
    pub x: Vec<NormalInverseGamma>,
    pub v: Vec<NormalInverseGamma>,
    pub n: GammaPrior,
}

impl BaseMeasureHyper {
    /// Data-free hyperparameters: `beta ~ N(0, s2 I)`, `sigma^2 ~ IG(2, 1)`,
    /// covariates `NIG(0, 0.1, 2, 1)` and `lambda ~ Gamma(2, 2 / mean_n)`.
    pub fn vague(design: DesignSpec, d_kind: DKind, coef_var: f64, mean_n: f64) -> Result<Self> {
        let reg = |dim: usize| {
            RegressionPrior::new(DVector::zeros(dim), DMatrix::identity(dim, dim) * coef_var, 2.0, 1.0)
        };
        let nig = NormalInverseGamma {
            mean: 0.0,
            kappa: 0.1,
            shape: 2.0,
            scale: 1.0,
        };
        Ok(BaseMeasureHyper {
            design,
            d_kind,
            y: reg(design.y_dim())?,
            m: reg(design.m_dim())?,
            d: reg(design.d_dim())?,
            x: vec![nig; design.p],
            v: vec![nig; design.q],
            n: GammaPrior::new(2.0, 2.0 / mean_n)?,
        })
    }

    pub fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> ThetaAtom {
        let sigma2_d = match self.d_kind {
            DKind::Continuous => self.d.draw_sigma2(rng),
            DKind::Binary => 1.0,
        };
        let d = RegressionAtom {
            beta: self.d.draw_beta(rng),
            sigma2: sigma2_d,
        };
        let m = RegressionAtom {
            beta: self.m.draw_beta(rng),
            sigma2: self.m.draw_sigma2(rng),
        };
        let y = RegressionAtom {
            beta: self.y.draw_beta(rng),
            sigma2: self.y.draw_sigma2(rng),
        };
        ThetaAtom { y, m, d }
    }

    pub fn draw_phi<R: Rng + ?Sized>(&self, rng: &mut R) -> PhiAtom {
        let (mean, var) = self.x.iter().map(|h| h.draw(rng)).unzip();
        PhiAtom { mean, var }
    }

    pub fn draw_eta<R: Rng + ?Sized>(&self, rng: &mut R) -> EtaAtom {
        let lambda_n = self.n.draw(rng);
        let (v_mean, v_var) = self.v.iter().map(|h| h.draw(rng)).unzip();
        EtaAtom {
            lambda_n,
            v_mean,
            v_var,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn final_fractions_are_closed() {
        let lv = TruncationLevels::new(3, 2, 2).unwrap();
        let w = StickWeights::from_fractions(lv, vec![0.5, 0.5, 0.2], vec![0.3; 6], vec![0.9; 12]).unwrap();
        assert_eq!(w.s_star[2], 1.0);
        assert_eq!(w.pi_star, vec![0.5, 0.25, 0.25]);
        assert_eq!(w.w_theta_row(1), &[0.3, 0.7]);
        assert!((w.w_phi_slice(2, 1)[1] - 0.1).abs() < 1e-15);
        w.check().unwrap();
    }

    #[test]
    fn zero_levels_rejected() {
        assert!(TruncationLevels::new(0, 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn stick_breaking_stays_on_simplex(
            s in proptest::collection::vec(0.0f64..1.0, 2..6),
            v in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let k = s.len();
            let lv = TruncationLevels::new(k, 2, 3).unwrap();
            let vt: Vec<f64> = (0..k * 2).map(|i| v[i % v.len()]).collect();
            let vp: Vec<f64> = (0..k * 6).map(|i| v[(i + 1) % v.len()]).collect();
            let w = StickWeights::from_fractions(lv, s.clone(), vt, vp).unwrap();
            prop_assert!(w.check().is_ok());
            // Product identity at every index.
            let mut rest = 1.0;
            for j in 0..k {
                prop_assert!((w.pi_star[j] - w.s_star[j] * rest).abs() < 1e-15);
                rest *= 1.0 - w.s_star[j];
            }
        }
    }
}
