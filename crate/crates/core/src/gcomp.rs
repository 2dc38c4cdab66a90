//! Posterior g-computation of the cluster-average mediation estimands.
//!
//! Per retained state: estimate the same-world correlations from rank
//! uniforms of the observed confounder, then roll out `T` synthetic clusters.
//! Regime `(a, own, peers)` evaluates the outcome mean under arm `a` with the
//! confounder of world `a`, the individual's own mediator from world `own`
//! and the peers' mediators from world `peers`. Mediators of world `a'` are
//! drawn given the confounder of world `a'`.

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::consts::{
    CDF_INVERSION_TOL, DEFAULT_SYNTHETIC_CLUSTERS, GAMMA_MH_BURN, GAMMA_MH_STEPS, MIN_SYNTHETIC_SUCCESS, U_CLAMP,
};
use crate::copula::{conditional_cross_world, mh_update_gammas, sample_rho, CopulaParams, EquiStats, MixtureMarginal};
use crate::dataset::{ClusterDataset, DKind};
use crate::design::{loo_means, DesignSpec, ObservedDesign};
use crate::dist::{norm_cdf, norm_quantile, poisson_positive, std_normal};
use crate::error::{Error, Result};
use crate::gibbs::{CaEdpState, PosteriorSample};
use crate::rng::{stream, tag};

/// Estimands in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimand {
    Te,
    Nie,
    Nde,
    Sme,
    Ime,
}

impl Estimand {
    pub const ALL: [Estimand; 5] = [Estimand::Te, Estimand::Nie, Estimand::Nde, Estimand::Sme, Estimand::Ime];

    pub fn name(self) -> &'static str {
        match self {
            Estimand::Te => "TE",
            Estimand::Nie => "NIE",
            Estimand::Nde => "NDE",
            Estimand::Sme => "SME",
            Estimand::Ime => "IME",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Regimes `(1,1,1)`, `(1,1,0)`, `(1,0,0)`, `(0,0,0)`.
pub const REGIMES: [(u8, u8, u8); 4] = [(1, 1, 1), (1, 1, 0), (1, 0, 0), (0, 0, 0)];

/// `[TE, NIE, NDE, SME, IME]` from regime means in [`REGIMES`] order.
pub fn estimands_from_regimes(r: &[f64; 4]) -> [f64; 5] {
    [r[0] - r[3], r[0] - r[2], r[2] - r[3], r[0] - r[1], r[1] - r[2]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    Fixed(f64),
    /// `rho ~ Unif(0, upper(gamma1, gamma0, N))` per synthetic cluster.
    Prior,
}

impl RhoMode {
    pub fn label(&self) -> String {
        match self {
            RhoMode::Fixed(r) => format!("rho={r}"),
            RhoMode::Prior => "rho~prior".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    /// Independence MH from rank uniforms; the final state is used.
    Estimate { steps: usize, burn: usize },
    Fixed { gamma1: f64, gamma0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcompConfig {
    pub synthetic_clusters: usize,
    pub rho: RhoMode,
    pub gamma: GammaMode,
    pub seed: u64,
    pub inversion_tol: f64,
}

impl Default for GcompConfig {
    fn default() -> Self {
        GcompConfig {
            synthetic_clusters: DEFAULT_SYNTHETIC_CLUSTERS,
            rho: RhoMode::Prior,
            gamma: GammaMode::Estimate {
                steps: GAMMA_MH_STEPS,
                burn: GAMMA_MH_BURN,
            },
            seed: 1,
            inversion_tol: CDF_INVERSION_TOL,
        }
    }
}

impl GcompConfig {
    pub fn validate(&self) -> Result<()> {
        if self.synthetic_clusters == 0 {
            return Err(Error::InvalidConfig("synthetic cluster count must be positive".to_string()));
        }
        if let RhoMode::Fixed(r) = self.rho {
            if !(r.abs() < 1.0) {
                return Err(Error::InvalidConfig(format!("fixed rho {r} outside (-1, 1)")));
            }
        }
        match self.gamma {
            GammaMode::Estimate { steps, burn } if burn >= steps => Err(Error::InvalidConfig(format!(
                "gamma MH burn-in {burn} must be below the step count {steps}"
            ))),
            GammaMode::Fixed { gamma1, gamma0 } if !((0.0..1.0).contains(&gamma1) && (0.0..1.0).contains(&gamma0)) => {
                Err(Error::InvalidConfig("fixed gammas must lie in [0, 1)".to_string()))
            }
            _ if !(self.inversion_tol > 0.0) => Err(Error::InvalidConfig("inversion tolerance must be positive".to_string())),
            _ => Ok(()),
        }
    }
}

/// One synthetic cluster rolled out under all worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCluster {
    pub n: usize,
    pub v: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Confounder values in each world; binary D holds the 0/1 indicators.
    pub d1: Vec<f64>,
    pub d0: Vec<f64>,
    pub m1: Vec<f64>,
    pub m0: Vec<f64>,
    /// Expected outcome per individual for each of [`REGIMES`].
    pub y: [Vec<f64>; 4],
    pub rho: f64,
}

impl SyntheticCluster {
    pub fn regime_means(&self) -> [f64; 4] {
        let n = self.n as f64;
        std::array::from_fn(|r| self.y[r].iter().sum::<f64>() / n)
    }
}

/// Estimands of one retained state.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimandDraw {
    /// Regime means over successful synthetic clusters.
    pub regimes: [f64; 4],
    /// `[TE, NIE, NDE, SME, IME]`.
    pub values: [f64; 5],
    /// Monte-Carlo standard error of each estimand across synthetic clusters.
    pub mc_se: [f64; 5],
    pub gamma1: f64,
    pub gamma0: f64,
    pub failed_clusters: usize,
}

impl EstimandDraw {
    pub fn get(&self, e: Estimand) -> f64 {
        self.values[e.index()]
    }
}

/// Mixture marginal `sum_l W_l N(c beta_l, sigma_l^2)` of the confounder for
/// one unit with design row `row`; binary D uses the probit latent with unit
/// variance.
pub fn unit_marginal(state: &CaEdpState, weights: &[f64], d_kind: DKind, row: &[f64]) -> Result<MixtureMarginal> {
    let means = state.theta.iter().map(|t| t.d.mean(row)).collect();
    let sds = state
        .theta
        .iter()
        .map(|t| match d_kind {
            DKind::Continuous => t.d.sigma(),
            DKind::Binary => 1.0,
        })
        .collect();
    MixtureMarginal::new(weights.to_vec(), means, sds)
}

/// `F^(a)(d)` at one unit's covariates under the current state.
pub fn mixture_marginal_cdf(d: f64, state: &CaEdpState, d_kind: DKind, row: &[f64]) -> Result<f64> {
    Ok(unit_marginal(state, &state.weights.marginal_theta_weights(), d_kind, row)?.cdf(d))
}

/// `(F^(a))^{-1}(u)` at one unit's covariates under the current state.
pub fn invert_marginal_cdf(u: f64, state: &CaEdpState, d_kind: DKind, row: &[f64], tol: f64) -> Result<f64> {
    unit_marginal(state, &state.weights.marginal_theta_weights(), d_kind, row)?.invert(u, tol)
}

fn clamp_u(u: f64) -> f64 {
    u.clamp(U_CLAMP, 1.0 - U_CLAMP)
}

/// Per-cluster statistics of the latent normals `Phi^{-1}(F^(A_i)(D_ij))`,
/// split into treated and control arms. Binary D uses the state's probit
/// latents in place of the observed indicators.
pub fn rank_statistics(
    dataset: &ClusterDataset,
    observed: &ObservedDesign,
    state: &CaEdpState,
) -> Result<(Vec<EquiStats>, Vec<EquiStats>)> {
    let weights = state.weights.marginal_theta_weights();
    let d_kind = dataset.d_kind();
    if d_kind == DKind::Binary && state.latent_z.len() != dataset.n_total() {
        return Err(Error::Mismatch("binary confounder needs one probit latent per individual".to_string()));
    }
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for (i, c) in dataset.clusters().iter().enumerate() {
        let z = dataset
            .range(i)
            .zip(&c.individuals)
            .map(|(g, ind)| {
                let d = match d_kind {
                    DKind::Continuous => ind.d,
                    DKind::Binary => state.latent_z[g],
                };
                let u = unit_marginal(state, &weights, d_kind, observed.d_row(g))?.cdf(d);
                Ok(norm_quantile(clamp_u(u)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let stats = EquiStats::from_z(&z);
        if c.treated {
            treated.push(stats);
        } else {
            control.push(stats);
        }
    }
    Ok((treated, control))
}

/// `(gamma1, gamma0)` for one retained state.
pub fn estimate_gammas<R: Rng + ?Sized>(
    dataset: &ClusterDataset,
    observed: &ObservedDesign,
    state: &CaEdpState,
    mode: GammaMode,
    rng: &mut R,
) -> Result<(f64, f64)> {
    match mode {
        GammaMode::Fixed { gamma1, gamma0 } => Ok((gamma1, gamma0)),
        GammaMode::Estimate { steps, burn } => {
            let (t, c) = rank_statistics(dataset, observed, state)?;
            Ok(mh_update_gammas(&t, &c, steps, burn, rng).last())
        }
    }
}

/// Rolls out one synthetic cluster. `rng` drives every draw except `rho`,
/// which comes from `rho_rng` so that the two sensitivity modes share all
/// other randomness.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_cluster<R: Rng + ?Sized, Q: Rng + ?Sized>(
    state: &CaEdpState,
    design: DesignSpec,
    d_kind: DKind,
    gammas: (f64, f64),
    rho_mode: RhoMode,
    tol: f64,
    rng: &mut R,
    rho_rng: &mut Q,
) -> Result<SyntheticCluster> {
    let w = &state.weights;
    let k = w.draw_k(rng);
    let eta = &state.eta[k];
    let n = poisson_positive(rng, eta.lambda_n) as usize;
    let size = n as f64;
    let v = eta.draw_v(rng);
    let mut ls = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let l = w.draw_l(k, rng);
        let m = w.draw_m(k, l, rng);
        ls.push(l);
        x.push(state.phi[m].draw(rng));
    }
    // Latent confounders; for continuous D these are D itself.
    let mut z_lat1 = Vec::with_capacity(n);
    for j in 0..n {
        let atom = &state.theta[ls[j]].d;
        let sd = match d_kind {
            DKind::Continuous => atom.sigma(),
            DKind::Binary => 1.0,
        };
        z_lat1.push(atom.mean(&design.d_row(1.0, size, &v, &x[j])) + sd * std_normal(rng));
    }
    let weights = w.marginal_theta_weights();
    let marg1 = (0..n)
        .map(|j| unit_marginal(state, &weights, d_kind, &design.d_row(1.0, size, &v, &x[j])))
        .collect::<Result<Vec<_>>>()?;
    let marg0 = (0..n)
        .map(|j| unit_marginal(state, &weights, d_kind, &design.d_row(0.0, size, &v, &x[j])))
        .collect::<Result<Vec<_>>>()?;
    let z1: Vec<f64> = (0..n).map(|j| norm_quantile(clamp_u(marg1[j].cdf(z_lat1[j])))).collect();
    let (g1, g0) = gammas;
    let rho = match rho_mode {
        RhoMode::Fixed(r) => r,
        RhoMode::Prior => sample_rho(g1, g0, n, rho_rng)?,
    };
    let params = CopulaParams::new(g1, g0, rho, n)?;
    let (mu, cov) = conditional_cross_world(&z1, &params)?;
    let eps = cov.sample(rng)?;
    let z_lat0 = (0..n)
        .map(|j| marg0[j].invert(clamp_u(norm_cdf(mu[j] + eps[j])), tol))
        .collect::<Result<Vec<f64>>>()?;
    let observe = |z: &[f64]| -> Vec<f64> {
        match d_kind {
            DKind::Continuous => z.to_vec(),
            DKind::Binary => z.iter().map(|v| if *v >= 0.0 { 1.0 } else { 0.0 }).collect(),
        }
    };
    let d1 = observe(&z_lat1);
    let d0 = observe(&z_lat0);
    let (d1_loo, d0_loo) = (loo_means(&d1), loo_means(&d0));
    let mut m1 = Vec::with_capacity(n);
    let mut m0 = Vec::with_capacity(n);
    for j in 0..n {
        let atom = &state.theta[ls[j]].m;
        m1.push(atom.mean(&design.m_row(1.0, size, &v, &x[j], d1[j], d1_loo[j])) + atom.sigma() * std_normal(rng));
        m0.push(atom.mean(&design.m_row(0.0, size, &v, &x[j], d0[j], d0_loo[j])) + atom.sigma() * std_normal(rng));
    }
    let (m1_loo, m0_loo) = (loo_means(&m1), loo_means(&m0));
    let y: [Vec<f64>; 4] = std::array::from_fn(|r| {
        let (a, own, peers) = REGIMES[r];
        let (d, d_loo) = if a == 1 { (&d1, &d1_loo) } else { (&d0, &d0_loo) };
        let m_own = if own == 1 { &m1 } else { &m0 };
        let m_peer = if peers == 1 { &m1_loo } else { &m0_loo };
        (0..n)
            .map(|j| {
                let row = design.y_row(a as f64, size, &v, &x[j], d[j], d_loo[j], m_own[j], m_peer[j]);
                state.theta[ls[j]].y.mean(&row)
            })
            .collect()
    });
    Ok(SyntheticCluster {
        n,
        v,
        x,
        d1,
        d0,
        m1,
        m0,
        y,
        rho,
    })
}

/// Averages `T` synthetic clusters for fixed same-world correlations.
/// Clusters failing in the copula step are skipped; fewer than `0.9 T`
/// successes is an error.
#[allow(clippy::too_many_arguments)]
pub fn gcompute_draw<R: Rng + ?Sized, Q: Rng + ?Sized>(
    state: &CaEdpState,
    design: DesignSpec,
    d_kind: DKind,
    gammas: (f64, f64),
    config: &GcompConfig,
    rng: &mut R,
    rho_rng: &mut Q,
) -> Result<EstimandDraw> {
    let t = config.synthetic_clusters;
    let mut per_cluster: Vec<[f64; 5]> = Vec::with_capacity(t);
    let mut sums = [0.0; 4];
    let mut failed = 0usize;
    for _ in 0..t {
        match synthetic_cluster(state, design, d_kind, gammas, config.rho, config.inversion_tol, rng, rho_rng) {
            Ok(c) => {
                let r = c.regime_means();
                for (s, v) in sums.iter_mut().zip(r) {
                    *s += v;
                }
                per_cluster.push(estimands_from_regimes(&r));
            }
            Err(e @ (Error::Inversion(_) | Error::NotPositiveDefinite(_))) => {
                warn!("synthetic cluster skipped: {e}");
                failed += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let ok = per_cluster.len();
    if (ok as f64) < MIN_SYNTHETIC_SUCCESS * t as f64 {
        return Err(Error::TooFewSyntheticClusters {
            succeeded: ok,
            requested: t,
        });
    }
    let regimes = sums.map(|s| s / ok as f64);
    let values = estimands_from_regimes(&regimes);
    let mc_se = std::array::from_fn(|e| {
        if ok < 2 {
            return f64::NAN;
        }
        let ss: f64 = per_cluster.iter().map(|c| (c[e] - values[e]).powi(2)).sum();
        (ss / (ok - 1) as f64 / ok as f64).sqrt()
    });
    Ok(EstimandDraw {
        regimes,
        values,
        mc_se,
        gamma1: gammas.0,
        gamma0: gammas.1,
        failed_clusters: failed,
    })
}

/// g-computation over every retained state. State `t` uses streams
/// `(seed, GCOMP, t)` and `(seed, RHO, t)`; results keep iteration order.
pub fn gcompute_posterior(
    posterior: &PosteriorSample,
    dataset: &ClusterDataset,
    config: &GcompConfig,
) -> Result<Vec<EstimandDraw>> {
    config.validate()?;
    if posterior.is_empty() {
        return Err(Error::Empty("posterior sample".to_string()));
    }
    if posterior.design != DesignSpec::for_dataset(dataset) || posterior.d_kind != dataset.d_kind() {
        return Err(Error::Mismatch("posterior was fitted to a different design".to_string()));
    }
    let observed = ObservedDesign::build(dataset, posterior.design);
    posterior
        .states
        .par_iter()
        .enumerate()
        .map(|(t, state)| {
            let mut rng = stream(config.seed, tag::GCOMP, t as u64);
            let mut rho_rng = stream(config.seed, tag::RHO, t as u64);
            let gammas = estimate_gammas(dataset, &observed, state, config.gamma, &mut rng)?;
            gcompute_draw(state, posterior.design, posterior.d_kind, gammas, config, &mut rng, &mut rho_rng).map_err(
                |e| Error::AtIteration {
                    iteration: t,
                    source: Box::new(e),
                },
            )
        })
        .collect()
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0 && (0.0..=1.0).contains(&p));
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Posterior mean, equal-tail 95% interval and `P(estimand > 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimandSummary {
    pub estimand: Estimand,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub prob_positive: f64,
}

pub fn summarize(estimand: Estimand, values: &[f64]) -> Result<EstimandSummary> {
    if values.is_empty() {
        return Err(Error::Empty(format!("{} draws", estimand.name())));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Ok(EstimandSummary {
        estimand,
        mean: values.iter().sum::<f64>() / n,
        lower: quantile_sorted(&sorted, 0.025),
        upper: quantile_sorted(&sorted, 0.975),
        prob_positive: values.iter().filter(|v| **v > 0.0).count() as f64 / n,
    })
}

pub fn aggregate_posterior(draws: &[EstimandDraw]) -> Result<[EstimandSummary; 5]> {
    if draws.is_empty() {
        return Err(Error::Empty("estimand draws".to_string()));
    }
    let mut out = Vec::with_capacity(5);
    for e in Estimand::ALL {
        let v: Vec<f64> = draws.iter().map(|d| d.get(e)).collect();
        out.push(summarize(e, &v)?);
    }
    Ok(out.try_into().expect("five estimands"))
}

/// Draws and summaries of one sensitivity mode.
#[derive(Debug, Clone)]
pub struct SensitivityRun {
    pub mode: RhoMode,
    pub draws: Vec<EstimandDraw>,
    pub summary: [EstimandSummary; 5],
}

/// Runs [`gcompute_posterior`] once per `rho` mode with the same seed, so
/// every draw apart from `rho` is shared.
pub fn run_sensitivity(
    posterior: &PosteriorSample,
    dataset: &ClusterDataset,
    config: &GcompConfig,
    modes: &[RhoMode],
) -> Result<Vec<SensitivityRun>> {
    modes
        .iter()
        .map(|&mode| {
            let cfg = GcompConfig { rho: mode, ..*config };
            let draws = gcompute_posterior(posterior, dataset, &cfg)?;
            let summary = aggregate_posterior(&draws)?;
            Ok(SensitivityRun { mode, draws, summary })
        })
        .collect()
}
