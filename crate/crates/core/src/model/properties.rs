//! Closed-form prior properties: tie probabilities between units of different
//! clusters, cross-cluster correlations and truncation error bounds.

use crate::error::{domain, Result};
use crate::model::types::{ConcentrationParams, TruncationLevels};

fn check_nonneg(values: &[f64]) -> Result<()> {
    for v in values {
        if !(*v >= 0.0) || !v.is_finite() {
            return domain(format!("concentration must be finite and nonnegative, got {v}"));
        }
    }
    Ok(())
}

/// `P(theta_ij = theta_i'j')` for `i != i'`.
pub fn tie_prob_theta(alpha_star: f64, alpha_theta: f64) -> Result<f64> {
    check_nonneg(&[alpha_star, alpha_theta])?;
    Ok((1.0 / (1.0 + alpha_star)) * (1.0 / (1.0 + alpha_theta) + alpha_star / (1.0 + 2.0 * alpha_theta)))
}

/// `P(phi_ij = phi_i'j')` for `i != i'`.
pub fn tie_prob_phi(alpha_star: f64, alpha_theta: f64, alpha_phi: f64) -> Result<f64> {
    check_nonneg(&[alpha_star, alpha_theta, alpha_phi])?;
    let (a, t, p) = (alpha_star, alpha_theta, alpha_phi);
    Ok(1.0 / ((1.0 + a) * (1.0 + t)) * (1.0 / (1.0 + p) + (a + t + a * t) / (1.0 + 2.0 * p)))
}

/// `P(theta_ij = theta_i'j', phi_ij = phi_i'j')` for `i != i'`.
pub fn tie_prob_joint(alpha_star: f64, alpha_theta: f64, alpha_phi: f64) -> Result<f64> {
    check_nonneg(&[alpha_star, alpha_theta, alpha_phi])?;
    let (a, t, p) = (alpha_star, alpha_theta, alpha_phi);
    Ok((1.0 / (1.0 + a)) * (1.0 / ((1.0 + t) * (1.0 + p)) + a / ((1.0 + 2.0 * t) * (1.0 + 2.0 * p))))
}

/// `Cor(F_i(A, Phi), F_i'(A, Phi))`; lies in `(1/2, 1]`.
pub fn corr_theta(alpha_star: f64, alpha_theta: f64) -> Result<f64> {
    check_nonneg(&[alpha_star, alpha_theta])?;
    let (a, t) = (alpha_star, alpha_theta);
    Ok(1.0 - a / (1.0 + a) * t / (1.0 + 2.0 * t))
}

/// `Cor(F_i(Theta, A), F_i'(Theta, A))`; lies in `(1/2, 1]`.
pub fn corr_phi(alpha_star: f64, alpha_theta: f64, alpha_phi: f64) -> Result<f64> {
    check_nonneg(&[alpha_star, alpha_theta, alpha_phi])?;
    let (a, t, p) = (alpha_star, alpha_theta, alpha_phi);
    Ok(1.0 - a / (1.0 + a) * p / (1.0 + t + t * p + 2.0 * p))
}

/// `Cov(F_i(A_theta, A_phi), F_i'(B_theta, B_phi))`.
///
/// `g_theta = (G_theta(A_theta), G_theta(B_theta))`, likewise `g_phi`;
/// `delta_*` is `G(A n B) - G(A) G(B)`.
pub fn cross_measure_covariance(
    q_theta: f64,
    q_phi: f64,
    q_joint: f64,
    g_theta: (f64, f64),
    g_phi: (f64, f64),
    delta_theta: f64,
    delta_phi: f64,
) -> Result<f64> {
    for p in [q_theta, q_phi, q_joint, g_theta.0, g_theta.1, g_phi.0, g_phi.1] {
        if !(0.0..=1.0).contains(&p) {
            return domain(format!("probability argument outside [0, 1]: {p}"));
        }
    }
    if !delta_theta.is_finite() || !delta_phi.is_finite() {
        return domain("covariance deltas must be finite");
    }
    Ok(q_theta * g_phi.0 * g_phi.1 * delta_theta
        + q_phi * g_theta.0 * g_theta.1 * delta_phi
        + q_joint * delta_theta * delta_phi)
}

/// Bound on the expected total-variation distance between the truncated and
/// untruncated random measures.
pub fn truncation_bound(levels: TruncationLevels, conc: &ConcentrationParams) -> f64 {
    let term = |a: f64, n: usize| (a / (1.0 + a)).powi(n as i32);
    term(conc.alpha_star, levels.k) + term(conc.alpha_theta, levels.l) + term(conc.alpha_phi, levels.m)
}

/// Bound on the total-variation distance between marginal data densities.
pub fn marginal_truncation_bound(levels: TruncationLevels, conc: &ConcentrationParams, total_n: usize) -> f64 {
    total_n as f64 * truncation_bound(levels, conc)
}
