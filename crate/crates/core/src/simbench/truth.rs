//! Ground-truth estimands of a scenario.
//!
//! Regime `(a, own, peers)` evaluates the expected outcome under arm `a`
//! with `D(a)`, the unit's own `M(own)` and peers' `M(peers)`; the cluster
//! mean of M mixes the two worlds accordingly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gcomp::{estimands_from_regimes, REGIMES};
use crate::rng::{stream, tag};
use crate::simbench::scenario::{OutcomeFamily, PotentialCluster, Sampler, ScenarioSpec, SizeLaw};

const CHUNK: usize = 1000;

/// Monte-Carlo truths `[TE, NIE, NDE, SME, IME]` and their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthEstimate {
    pub values: [f64; 5],
    pub se: [f64; 5],
    pub n_clusters: usize,
}

/// Regime means of one potential cluster.
pub fn cluster_regimes(spec: &ScenarioSpec, pc: &PotentialCluster) -> [f64; 4] {
    let n = pc.n as f64;
    std::array::from_fn(|r| {
        let (a, own, peers) = REGIMES[r];
        let d = pc.world(0, a);
        let d_bar = d.iter().sum::<f64>() / n;
        let m_own = pc.world(1, own);
        let m_peer = pc.world(1, peers);
        let peer_total: f64 = m_peer.iter().sum();
        (0..pc.n)
            .map(|j| {
                let m_bar = (m_own[j] + peer_total - m_peer[j]) / n;
                spec.outcome_mean(None, a as f64, n, pc.v, &pc.x[j], d[j], d_bar, m_own[j], m_bar)
            })
            .sum::<f64>()
            / n
    })
}

/// Brute-force truth from `n_clusters` simulated clusters. Chunk `c` of
/// 1000 clusters uses stream `(seed, TRUTH, c)`.
pub fn truth_oracle(spec: &ScenarioSpec, n_clusters: usize, seed: u64) -> Result<TruthEstimate> {
    if n_clusters < 2 {
        return Err(Error::InvalidConfig("truth oracle needs at least two clusters".to_string()));
    }
    let sampler = Sampler::new(spec)?;
    let chunks = n_clusters.div_ceil(CHUNK);
    let partial: Vec<([f64; 5], [f64; 5])> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, tag::TRUTH, c as u64);
            let len = CHUNK.min(n_clusters - c * CHUNK);
            let mut sum = [0.0; 5];
            let mut sum_sq = [0.0; 5];
            for _ in 0..len {
                let pc = sampler.cluster(spec, &mut rng);
                let e = estimands_from_regimes(&cluster_regimes(spec, &pc));
                for k in 0..5 {
                    sum[k] += e[k];
                    sum_sq[k] += e[k] * e[k];
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let n = n_clusters as f64;
    let mut values = [0.0; 5];
    let mut se = [0.0; 5];
    for k in 0..5 {
        let s: f64 = partial.iter().map(|p| p.0[k]).sum();
        let ss: f64 = partial.iter().map(|p| p.1[k]).sum();
        values[k] = s / n;
        se[k] = ((ss - s * s / n).max(0.0) / (n - 1.0) / n).sqrt();
    }
    Ok(TruthEstimate {
        values,
        se,
        n_clusters,
    })
}

/// Exact truths of the linear outcome under a uniform size law. With
/// `dD(N) = 1.5 s (2 + 0.01 N)` for treatment scale `s` and confounder
/// outcome scale `k`: NIE = E[dD], NDE = s + k E[dD],
/// SME = E[(N-1)/(2N) dD], IME = E[(N+1)/(2N) dD].
pub fn linear_analytic_truth(spec: &ScenarioSpec) -> Result<[f64; 5]> {
    let SizeLaw::Uniform { lo, hi } = spec.size else {
        return Err(Error::InvalidConfig("analytic truth needs a uniform size law".to_string()));
    };
    if spec.outcome != OutcomeFamily::Linear {
        return Err(Error::InvalidConfig("analytic truth needs the linear outcome".to_string()));
    }
    let s = spec.treatment_scale;
    let count = (hi - lo + 1) as f64;
    let (mut e_dd, mut sme, mut ime) = (0.0, 0.0, 0.0);
    for n in lo..=hi {
        let nf = n as f64;
        let dd = 1.5 * s * (2.0 + 0.01 * nf);
        e_dd += dd / count;
        sme += 0.5 * (nf - 1.0) / nf * dd / count;
        ime += 0.5 * (nf + 1.0) / nf * dd / count;
    }
    let nie = e_dd;
    let nde = s + spec.d_outcome_scale * e_dd;
    Ok([nde + nie, nie, nde, sme, ime])
}
