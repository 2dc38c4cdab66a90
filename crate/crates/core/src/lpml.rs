//! Log pseudo-marginal likelihood from per-draw pointwise log-likelihoods.
//!
//! `CPO_g` is the harmonic mean of `p(obs_g | state_t)` over draws, computed
//! in log space: `ln CPO_g = ln T - logsumexp_t(-loglik[t][g])`.

use crate::error::{Error, Result};
use crate::gibbs::PosteriorSample;

/// `ln CPO_g` for every observation of a `draws x observations` matrix.
pub fn log_cpo(loglik: &[Vec<f64>]) -> Result<Vec<f64>> {
    let t = loglik.len();
    let n = loglik.first().ok_or(Error::Empty("log-likelihood draws".to_string()))?.len();
    if loglik.iter().any(|row| row.len() != n) {
        return Err(Error::Mismatch("log-likelihood rows differ in length".to_string()));
    }
    (0..n)
        .map(|g| {
            let mut max = f64::NEG_INFINITY;
            for row in loglik {
                let v = row[g];
                if v.is_nan() || v == f64::NEG_INFINITY {
                    return Err(Error::ZeroLikelihood(g));
                }
                max = max.max(-v);
            }
            let s: f64 = loglik.iter().map(|row| (-row[g] - max).exp()).sum();
            Ok((t as f64).ln() - (max + s.ln()))
        })
        .collect()
}

pub fn lpml_from_loglik(loglik: &[Vec<f64>]) -> Result<f64> {
    Ok(log_cpo(loglik)?.iter().sum())
}

pub fn compute_lpml(posterior: &PosteriorSample) -> Result<f64> {
    lpml_from_loglik(&posterior.loglik)
}
