//! Full-conditional updates of the blocked Gibbs sampler.
//!
//! Mixture sums over classes run in linear space on per-individual
//! max-scaled likelihoods; the scale factors are added back in log space.

use rand::Rng;

use crate::consts::STICK_CLAMP;
use crate::dataset::DKind;
use crate::dist::{self, beta_with_ln_complement, categorical, normalize_log_weights, MomentStats};
use crate::error::{Error, Result};
use crate::gibbs::state::{CaEdpState, GibbsContext};
use crate::linreg::{RegressionPrior, SuffStats};
use crate::model::types::{GammaPrior, RegressionAtom, TruncationLevels};

/// Per-individual component likelihoods at the current atoms.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    pub l: usize,
    pub m: usize,
    /// `ln p(D, M, Y | theta_l)`, row-major `n x L`.
    pub ln_theta: Vec<f64>,
    /// `ln p(X | phi_m)`, row-major `n x M`.
    pub ln_phi: Vec<f64>,
    /// `exp(ln_theta - max_theta)` per row.
    pub scaled_theta: Vec<f64>,
    pub max_theta: Vec<f64>,
    pub scaled_phi: Vec<f64>,
    pub max_phi: Vec<f64>,
}

fn scale_rows(ln: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut scaled = vec![0.0; ln.len()];
    let mut maxes = Vec::with_capacity(ln.len() / width.max(1));
    for (row, out) in ln.chunks_exact(width).zip(scaled.chunks_exact_mut(width)) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (o, v) in out.iter_mut().zip(row) {
            *o = if mx.is_finite() { (v - mx).exp() } else { 0.0 };
        }
        maxes.push(mx);
    }
    (scaled, maxes)
}

impl LikelihoodCache {
    pub fn compute(ctx: &GibbsContext, state: &CaEdpState) -> Self {
        let lv = state.levels();
        let n = ctx.dataset.n_total();
        let d_kind = ctx.dataset.d_kind();
        let mut ln_theta = vec![0.0; n * lv.l];
        let mut ln_phi = vec![0.0; n * lv.m];
        for (g, _, ind) in ctx.dataset.individuals() {
            let (dr, mr, yr) = (ctx.design.d_row(g), ctx.design.m_row(g), ctx.design.y_row(g));
            for (l, atom) in state.theta.iter().enumerate() {
                ln_theta[g * lv.l + l] = atom.ln_dmy(d_kind, dr, mr, yr, ind.d, ind.m, ind.y);
            }
            for (m, atom) in state.phi.iter().enumerate() {
                ln_phi[g * lv.m + m] = atom.ln_pdf(&ind.x);
            }
        }
        let (scaled_theta, max_theta) = scale_rows(&ln_theta, lv.l);
        let (scaled_phi, max_phi) = scale_rows(&ln_phi, lv.m);
        LikelihoodCache {
            l: lv.l,
            m: lv.m,
            ln_theta,
            ln_phi,
            scaled_theta,
            max_theta,
            scaled_phi,
            max_phi,
        }
    }

    fn theta_row(&self, g: usize) -> &[f64] {
        &self.scaled_theta[g * self.l..(g + 1) * self.l]
    }

    fn phi_row(&self, g: usize) -> &[f64] {
        &self.scaled_phi[g * self.m..(g + 1) * self.m]
    }
}

/// `sum_m w_klm p(X_g | phi_m)` up to the factor `exp(max_phi[g])`.
fn phi_mix(state: &CaEdpState, cache: &LikelihoodCache, g: usize, k: usize, l: usize) -> f64 {
    state
        .weights
        .w_phi_slice(k, l)
        .iter()
        .zip(cache.phi_row(g))
        .map(|(w, b)| w * b)
        .sum()
}

/// `ln sum_l w_kl p(D,M,Y | theta_l) sum_m w_klm p(X | phi_m)` for individual `g`.
pub fn ln_unit_mixture(state: &CaEdpState, cache: &LikelihoodCache, g: usize, k: usize) -> f64 {
    let a = cache.theta_row(g);
    let s: f64 = state
        .weights
        .w_theta_row(k)
        .iter()
        .enumerate()
        .map(|(l, w)| if *w > 0.0 && a[l] > 0.0 { w * a[l] * phi_mix(state, cache, g, k, l) } else { 0.0 })
        .sum();
    s.ln() + cache.max_theta[g] + cache.max_phi[g]
}

/// Unnormalized log-probabilities of the cluster classes of cluster `i`.
pub fn cluster_class_log_weights(ctx: &GibbsContext, state: &CaEdpState, cache: &LikelihoodCache, i: usize) -> Vec<f64> {
    let c = &ctx.dataset.clusters()[i];
    let range = ctx.dataset.range(i);
    (0..state.levels().k)
        .map(|k| {
            let pi = state.weights.pi_star[k];
            if pi <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let mut lw = pi.ln() + state.eta[k].ln_pdf(c.size(), &c.v);
            for g in range.clone() {
                lw += ln_unit_mixture(state, cache, g, k);
                if lw == f64::NEG_INFINITY {
                    break;
                }
            }
            lw
        })
        .collect()
}

pub fn update_cluster_indicators<R: Rng + ?Sized>(
    ctx: &GibbsContext,
    state: &mut CaEdpState,
    cache: &LikelihoodCache,
    rng: &mut R,
) -> Result<()> {
    for i in 0..ctx.dataset.n_clusters() {
        let mut lw = cluster_class_log_weights(ctx, state, cache, i);
        normalize_log_weights(&mut lw).ok_or_else(|| Error::WeightUnderflow {
            cluster: ctx.dataset.clusters()[i].id.clone(),
        })?;
        state.indicators.zeta_n[i] = categorical(rng, &lw);
    }
    Ok(())
}

pub fn update_y_indicators<R: Rng + ?Sized>(
    ctx: &GibbsContext,
    state: &mut CaEdpState,
    cache: &LikelihoodCache,
    rng: &mut R,
) -> Result<()> {
    let l_max = state.levels().l;
    let mut w = vec![0.0; l_max];
    for i in 0..ctx.dataset.n_clusters() {
        let k = state.indicators.zeta_n[i];
        for g in ctx.dataset.range(i) {
            let a = cache.theta_row(g);
            for (l, (wl, out)) in state.weights.w_theta_row(k).iter().zip(w.iter_mut()).enumerate() {
                *out = wl * a[l] * phi_mix(state, cache, g, k, l);
            }
            if !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::WeightUnderflow {
                    cluster: ctx.dataset.clusters()[i].id.clone(),
                });
            }
            state.indicators.zeta_y[g] = categorical(rng, &w);
        }
    }
    Ok(())
}

pub fn update_x_indicators<R: Rng + ?Sized>(
    ctx: &GibbsContext,
    state: &mut CaEdpState,
    cache: &LikelihoodCache,
    rng: &mut R,
) -> Result<()> {
    let m_max = state.levels().m;
    let mut w = vec![0.0; m_max];
    for i in 0..ctx.dataset.n_clusters() {
        let k = state.indicators.zeta_n[i];
        for g in ctx.dataset.range(i) {
            let l = state.indicators.zeta_y[g];
            for ((out, wm), b) in w.iter_mut().zip(state.weights.w_phi_slice(k, l)).zip(cache.phi_row(g)) {
                *out = wm * b;
            }
            if !(w.iter().sum::<f64>() > 0.0) {
                return Err(Error::WeightUnderflow {
                    cluster: ctx.dataset.clusters()[i].id.clone(),
                });
            }
            state.indicators.zeta_x[g] = categorical(rng, &w);
        }
    }
    Ok(())
}

/// Class occupation counts: `n_k` over clusters, `n_kl` and `n_klm` over individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCounts {
    pub n_k: Vec<usize>,
    pub n_kl: Vec<usize>,
    pub n_klm: Vec<usize>,
}

pub fn class_counts(ctx: &GibbsContext, state: &CaEdpState) -> ClassCounts {
    let TruncationLevels { k, l, m } = state.levels();
    let mut c = ClassCounts {
        n_k: vec![0; k],
        n_kl: vec![0; k * l],
        n_klm: vec![0; k * l * m],
    };
    let ind = &state.indicators;
    for i in 0..ctx.dataset.n_clusters() {
        let kk = ind.zeta_n[i];
        c.n_k[kk] += 1;
        for g in ctx.dataset.range(i) {
            let ll = ind.zeta_y[g];
            c.n_kl[kk * l + ll] += 1;
            c.n_klm[(kk * l + ll) * m + ind.zeta_x[g]] += 1;
        }
    }
    c
}

/// Draws fractions `v_j ~ Beta(1 + n_j, alpha + sum_{j' > j} n_j')` and
/// their exact `ln(1 - v_j)` for all but the last index, which stays 1.
fn draw_fractions<R: Rng + ?Sized>(counts: &[usize], alpha: f64, out: &mut [f64], ln_rest: &mut [f64], rng: &mut R) {
    let mut above: usize = counts.iter().sum();
    let last = out.len() - 1;
    for j in 0..last {
        above -= counts[j];
        (out[j], ln_rest[j]) = beta_with_ln_complement(rng, 1.0 + counts[j] as f64, alpha + above as f64);
    }
    out[last] = 1.0;
    ln_rest[last] = f64::NEG_INFINITY;
}

/// Conjugate update of all stick fractions given the class counts.
pub fn update_stick_weights<R: Rng + ?Sized>(state: &mut CaEdpState, counts: &ClassCounts, rng: &mut R) {
    let TruncationLevels { l, m, .. } = state.levels();
    let conc = state.conc;
    let w = &mut state.weights;
    draw_fractions(&counts.n_k, conc.alpha_star, &mut w.s_star, &mut w.ln_rest_star, rng);
    let rows = w.v_theta.chunks_exact_mut(l).zip(w.ln_rest_theta.chunks_exact_mut(l));
    for (c, (v, lr)) in counts.n_kl.chunks_exact(l).zip(rows) {
        draw_fractions(c, conc.alpha_theta, v, lr, rng);
    }
    let slices = w.v_phi.chunks_exact_mut(m).zip(w.ln_rest_phi.chunks_exact_mut(m));
    for (c, (v, lr)) in counts.n_klm.chunks_exact(m).zip(slices) {
        draw_fractions(c, conc.alpha_phi, v, lr, rng);
    }
    w.recompute();
}

/// `Gamma(a + count, b - sum ln(1 - v))` over the non-final fractions, given
/// their `ln(1 - v)`. A fraction of exactly 1 has no finite log and counts as
/// `1 - STICK_CLAMP`.
pub fn concentration_posterior(prior: GammaPrior, ln_rest: &[f64], group: usize) -> GammaPrior {
    let mut count = 0usize;
    let mut log_sum = 0.0;
    for chunk in ln_rest.chunks_exact(group) {
        for lr in &chunk[..group - 1] {
            log_sum += if lr.is_finite() { *lr } else { STICK_CLAMP.ln() };
            count += 1;
        }
    }
    GammaPrior {
        shape: prior.shape + count as f64,
        rate: prior.rate - log_sum,
    }
}

pub fn update_concentrations<R: Rng + ?Sized>(state: &mut CaEdpState, rng: &mut R) {
    let TruncationLevels { k, l, m } = state.levels();
    let w = &state.weights;
    let c = &mut state.conc;
    c.alpha_star = concentration_posterior(c.prior_star, &w.ln_rest_star, k).draw(rng);
    c.alpha_theta = concentration_posterior(c.prior_theta, &w.ln_rest_theta, l).draw(rng);
    c.alpha_phi = concentration_posterior(c.prior_phi, &w.ln_rest_phi, m).draw(rng);
}

/// Poisson-gamma update of the size rates and NIG update of the V moments.
pub fn update_eta_atoms<R: Rng + ?Sized>(ctx: &GibbsContext, state: &mut CaEdpState, rng: &mut R) {
    let k_max = state.levels().k;
    let q = ctx.dataset.q();
    let mut n_k = vec![0usize; k_max];
    let mut size_sum = vec![0usize; k_max];
    let mut v_stats = vec![MomentStats::default(); k_max * q];
    for (i, c) in ctx.dataset.clusters().iter().enumerate() {
        let k = state.indicators.zeta_n[i];
        n_k[k] += 1;
        size_sum[k] += c.size();
        for (s, v) in v_stats[k * q..(k + 1) * q].iter_mut().zip(&c.v) {
            s.push(*v);
        }
    }
    let prior_n = ctx.hyper.n;
    for (k, eta) in state.eta.iter_mut().enumerate() {
        eta.lambda_n = dist::gamma(
            rng,
            prior_n.shape + size_sum[k] as f64,
            prior_n.rate + n_k[k] as f64,
        );
        for c in 0..q {
            let (mu, var) = ctx.hyper.v[c].posterior(&v_stats[k * q + c]).draw(rng);
            eta.v_mean[c] = mu;
            eta.v_var[c] = var;
        }
    }
}

/// Probit augmentation: `Z ~ N(C_d beta_d, 1)` truncated to the side given by D.
pub fn update_binary_d_latent<R: Rng + ?Sized>(ctx: &GibbsContext, state: &mut CaEdpState, rng: &mut R) {
    if ctx.dataset.d_kind() != DKind::Binary {
        return;
    }
    for (g, _, ind) in ctx.dataset.individuals() {
        let atom = &state.theta[state.indicators.zeta_y[g]].d;
        let mean = atom.mean(ctx.design.d_row(g));
        state.latent_z[g] = dist::probit_latent(rng, mean, ind.d > 0.5);
    }
}

/// `sigma^2 | beta` then `beta | sigma^2` for one regression. An empty class
/// draws both from the base measure.
fn update_regression<R: Rng + ?Sized>(
    atom: &mut RegressionAtom,
    prior: &RegressionPrior,
    stats: &SuffStats,
    fixed_unit_variance: bool,
    rng: &mut R,
) -> Result<()> {
    if stats.n == 0 {
        atom.sigma2 = if fixed_unit_variance { 1.0 } else { prior.draw_sigma2(rng) };
        atom.beta = prior.draw_beta(rng);
        return Ok(());
    }
    if !fixed_unit_variance {
        atom.sigma2 = prior.draw_sigma2_posterior(stats, &atom.beta, rng);
    }
    atom.beta = prior.draw_beta_posterior(stats, atom.sigma2, rng)?;
    Ok(())
}

pub fn update_theta_atoms<R: Rng + ?Sized>(ctx: &GibbsContext, state: &mut CaEdpState, rng: &mut R) -> Result<()> {
    let spec = ctx.design.spec;
    let l_max = state.levels().l;
    let binary = ctx.dataset.d_kind() == DKind::Binary;
    let mut sy = vec![SuffStats::zeros(spec.y_dim()); l_max];
    let mut sm = vec![SuffStats::zeros(spec.m_dim()); l_max];
    let mut sd = vec![SuffStats::zeros(spec.d_dim()); l_max];
    for (g, _, ind) in ctx.dataset.individuals() {
        let l = state.indicators.zeta_y[g];
        sy[l].push(ctx.design.y_row(g), ind.y);
        sm[l].push(ctx.design.m_row(g), ind.m);
        let d = if binary { state.latent_z[g] } else { ind.d };
        sd[l].push(ctx.design.d_row(g), d);
    }
    let hyper = ctx.hyper;
    for (l, atom) in state.theta.iter_mut().enumerate() {
        for s in [&mut sy[l], &mut sm[l], &mut sd[l]] {
            s.symmetrize();
        }
        update_regression(&mut atom.y, &hyper.y, &sy[l], false, rng)?;
        update_regression(&mut atom.m, &hyper.m, &sm[l], false, rng)?;
        update_regression(&mut atom.d, &hyper.d, &sd[l], binary, rng)?;
    }
    Ok(())
}

pub fn update_phi_atoms<R: Rng + ?Sized>(ctx: &GibbsContext, state: &mut CaEdpState, rng: &mut R) {
    let p = ctx.dataset.p();
    let m_max = state.levels().m;
    let mut stats = vec![MomentStats::default(); m_max * p];
    for (g, _, ind) in ctx.dataset.individuals() {
        let m = state.indicators.zeta_x[g];
        for (s, x) in stats[m * p..(m + 1) * p].iter_mut().zip(&ind.x) {
            s.push(*x);
        }
    }
    for (m, atom) in state.phi.iter_mut().enumerate() {
        for c in 0..p {
            let (mu, var) = ctx.hyper.x[c].posterior(&stats[m * p + c]).draw(rng);
            atom.mean[c] = mu;
            atom.var[c] = var;
        }
    }
}

/// Per-individual `ln p(D, M, Y | X, V, N, state)` given the cluster's class:
/// `ln sum_l w_kl p(DMY|theta_l) sum_m w_klm p(X|phi_m) - ln sum_l w_kl sum_m w_klm p(X|phi_m)`.
pub fn pointwise_loglik(ctx: &GibbsContext, state: &CaEdpState) -> Vec<f64> {
    let cache = LikelihoodCache::compute(ctx, state);
    let mut out = vec![0.0; ctx.dataset.n_total()];
    for i in 0..ctx.dataset.n_clusters() {
        let k = state.indicators.zeta_n[i];
        for g in ctx.dataset.range(i) {
            let joint = ln_unit_mixture(state, &cache, g, k);
            let marg: f64 = state
                .weights
                .w_theta_row(k)
                .iter()
                .enumerate()
                .map(|(l, w)| w * phi_mix(state, &cache, g, k, l))
                .sum();
            out[g] = joint - (marg.ln() + cache.max_phi[g]);
        }
    }
    out
}
