//! Sweeps and chains.

use log::debug;
use rand::Rng;
use rayon::prelude::*;

use crate::consts::{DESK_BURN_IN, DESK_KEEP};
use crate::dataset::{ClusterDataset, DKind};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::gibbs::state::{CaEdpState, GibbsContext};
use crate::gibbs::updates::{
    class_counts, pointwise_loglik, update_binary_d_latent, update_cluster_indicators, update_concentrations,
    update_eta_atoms, update_phi_atoms, update_stick_weights, update_theta_atoms, update_x_indicators,
    update_y_indicators, LikelihoodCache,
};
use crate::model::types::{BaseMeasureHyper, ConcentrationParams, GammaPrior, TruncationLevels};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub keep: usize,
    pub thin: usize,
    pub seed: u64,
    pub truncation: TruncationLevels,
    /// Gamma priors on `(alpha_star, alpha_theta, alpha_phi)`.
    pub conc_priors: [GammaPrior; 3],
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            burn_in: DESK_BURN_IN,
            keep: DESK_KEEP,
            thin: 1,
            seed: 1,
            truncation: TruncationLevels::default(),
            conc_priors: [GammaPrior::default(); 3],
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".to_string()));
        }
        if self.keep == 0 {
            return Err(Error::InvalidConfig("keep must be at least 1".to_string()));
        }
        TruncationLevels::new(self.truncation.k, self.truncation.l, self.truncation.m)?;
        for p in &self.conc_priors {
            GammaPrior::new(p.shape, p.rate)?;
        }
        Ok(())
    }

    fn initial_conc(&self) -> ConcentrationParams {
        let [a, b, c] = self.conc_priors;
        ConcentrationParams {
            alpha_star: a.shape / a.rate,
            alpha_theta: b.shape / b.rate,
            alpha_phi: c.shape / c.rate,
            prior_star: a,
            prior_theta: b,
            prior_phi: c,
        }
    }
}

/// Kept states and the matching per-individual log-likelihoods.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub design: DesignSpec,
    pub d_kind: DKind,
    pub states: Vec<CaEdpState>,
    /// `loglik[t][g]`: log-likelihood of individual `g` at kept draw `t`.
    pub loglik: Vec<Vec<f64>>,
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Concatenates samples from chains fitted to the same dataset.
    pub fn concat(mut parts: Vec<PosteriorSample>) -> Result<PosteriorSample> {
        let mut out = parts.drain(..1).next().ok_or(Error::Empty("no chains".to_string()))?;
        for p in parts {
            if p.design != out.design || p.d_kind != out.d_kind {
                return Err(Error::Mismatch("chains fitted to different designs".to_string()));
            }
            out.states.extend(p.states);
            out.loglik.extend(p.loglik);
        }
        Ok(out)
    }
}

/// One full sweep in the fixed order: cluster, outcome and covariate
/// indicators; sticks; concentrations; cluster atoms; probit latents;
/// outcome atoms; covariate atoms.
pub fn sweep<R: Rng + ?Sized>(ctx: &GibbsContext, state: &mut CaEdpState, rng: &mut R) -> Result<()> {
    let cache = LikelihoodCache::compute(ctx, state);
    update_cluster_indicators(ctx, state, &cache, rng)?;
    update_y_indicators(ctx, state, &cache, rng)?;
    update_x_indicators(ctx, state, &cache, rng)?;
    let counts = class_counts(ctx, state);
    update_stick_weights(state, &counts, rng);
    update_concentrations(state, rng);
    update_eta_atoms(ctx, state, rng);
    update_binary_d_latent(ctx, state, rng);
    update_theta_atoms(ctx, state, rng)?;
    update_phi_atoms(ctx, state, rng);
    Ok(())
}

/// Runs one chain from a prior-drawn start. The RNG is stream
/// `(seed, CHAIN, chain_index)`.
pub fn run_chain_indexed(
    dataset: &ClusterDataset,
    config: &McmcConfig,
    hyper: &BaseMeasureHyper,
    chain_index: u64,
) -> Result<PosteriorSample> {
    config.validate()?;
    let ctx = GibbsContext::new(dataset, hyper)?;
    let mut rng = stream(config.seed, tag::CHAIN, chain_index);
    let mut state = CaEdpState::from_prior(dataset, hyper, config.truncation, config.initial_conc(), &mut rng);
    let total = config.burn_in + config.keep * config.thin;
    let mut states = Vec::with_capacity(config.keep);
    let mut loglik = Vec::with_capacity(config.keep);
    for it in 0..total {
        sweep(&ctx, &mut state, &mut rng).map_err(|e| Error::AtIteration {
            iteration: it,
            source: Box::new(e),
        })?;
        #[cfg(debug_assertions)]
        state.check(dataset, ctx.design.spec).map_err(|e| Error::AtIteration {
            iteration: it,
            source: Box::new(e),
        })?;
        if it >= config.burn_in && (it - config.burn_in + 1) % config.thin == 0 {
            let ll = pointwise_loglik(&ctx, &state);
            if let Some(g) = ll.iter().position(|v| !v.is_finite()) {
                return Err(Error::AtIteration {
                    iteration: it,
                    source: Box::new(Error::ZeroLikelihood(g)),
                });
            }
            loglik.push(ll);
            states.push(state.clone());
        }
        if it % 500 == 0 {
            debug!("chain {chain_index}: sweep {it}/{total}");
        }
    }
    Ok(PosteriorSample {
        design: ctx.design.spec,
        d_kind: dataset.d_kind(),
        states,
        loglik,
    })
}

pub fn run_chain(dataset: &ClusterDataset, config: &McmcConfig, hyper: &BaseMeasureHyper) -> Result<PosteriorSample> {
    run_chain_indexed(dataset, config, hyper, 0)
}

/// Independent chains in parallel; chain `c` uses stream `(seed, CHAIN, c)`.
pub fn run_chains(
    dataset: &ClusterDataset,
    config: &McmcConfig,
    hyper: &BaseMeasureHyper,
    n_chains: usize,
) -> Result<Vec<PosteriorSample>> {
    (0..n_chains as u64)
        .into_par_iter()
        .map(|c| run_chain_indexed(dataset, config, hyper, c))
        .collect()
}
