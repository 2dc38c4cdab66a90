//! Sampler state and its forward data simulator.

use rand::Rng;

use crate::dataset::{ClusterDataset, ClusterRecord, DKind, Individual};
use crate::design::{loo_means, DesignSpec, ObservedDesign};
use crate::dist::{self, std_normal};
use crate::error::{Error, Result};
use crate::model::prior::draw_sticks;
use crate::model::types::{
    BaseMeasureHyper, ClassIndicators, ConcentrationParams, EtaAtom, PhiAtom, StickWeights, ThetaAtom,
    TruncationLevels,
};

/// Full truncated model state.
#[derive(Debug, Clone, PartialEq)]
pub struct CaEdpState {
    pub weights: StickWeights,
    /// Common outcome atoms, length `L`.
    pub theta: Vec<ThetaAtom>,
    /// Common covariate atoms, length `M`.
    pub phi: Vec<PhiAtom>,
    /// Cluster-level atoms, length `K`.
    pub eta: Vec<EtaAtom>,
    pub indicators: ClassIndicators,
    pub conc: ConcentrationParams,
    /// Probit latent confounder per individual; empty for continuous D.
    pub latent_z: Vec<f64>,
}

impl CaEdpState {
    pub fn levels(&self) -> TruncationLevels {
        self.weights.levels
    }

    /// Random start: concentrations and sticks from their priors, atoms from
    /// the base measures, indicators uniform.
    pub fn from_prior<R: Rng + ?Sized>(
        dataset: &ClusterDataset,
        hyper: &BaseMeasureHyper,
        levels: TruncationLevels,
        mut conc: ConcentrationParams,
        rng: &mut R,
    ) -> Self {
        conc.redraw(rng);
        Self::from_prior_fixed_conc(dataset, hyper, levels, conc, rng)
    }

    /// As [`CaEdpState::from_prior`] with the concentrations held at `conc`.
    pub fn from_prior_fixed_conc<R: Rng + ?Sized>(
        dataset: &ClusterDataset,
        hyper: &BaseMeasureHyper,
        levels: TruncationLevels,
        conc: ConcentrationParams,
        rng: &mut R,
    ) -> Self {
        let weights = draw_sticks(levels, &conc, rng);
        let theta = (0..levels.l).map(|_| hyper.draw_theta(rng)).collect();
        let phi = (0..levels.m).map(|_| hyper.draw_phi(rng)).collect();
        let eta = (0..levels.k).map(|_| hyper.draw_eta(rng)).collect();
        let n = dataset.n_total();
        let indicators = ClassIndicators {
            zeta_n: (0..dataset.n_clusters()).map(|_| rng.random_range(0..levels.k)).collect(),
            zeta_y: (0..n).map(|_| rng.random_range(0..levels.l)).collect(),
            zeta_x: (0..n).map(|_| rng.random_range(0..levels.m)).collect(),
        };
        let latent_z = match dataset.d_kind() {
            DKind::Continuous => Vec::new(),
            DKind::Binary => dataset
                .individuals()
                .map(|(_, _, ind)| if ind.d > 0.5 { 0.5 } else { -0.5 })
                .collect(),
        };
        CaEdpState {
            weights,
            theta,
            phi,
            eta,
            indicators,
            conc,
            latent_z,
        }
    }

    /// Checks all type invariants against the dataset.
    pub fn check(&self, dataset: &ClusterDataset, design: DesignSpec) -> Result<()> {
        let lv = self.levels();
        self.weights.check()?;
        self.indicators.check(lv, dataset.n_clusters(), dataset.n_total())?;
        if self.theta.len() != lv.l || self.phi.len() != lv.m || self.eta.len() != lv.k {
            return Err(Error::Mismatch("atom counts do not match truncation levels".to_string()));
        }
        for t in &self.theta {
            if t.y.beta.len() != design.y_dim() || t.m.beta.len() != design.m_dim() || t.d.beta.len() != design.d_dim() {
                return Err(Error::Mismatch("regression coefficients do not match the design".to_string()));
            }
            if !(t.y.sigma2 > 0.0 && t.m.sigma2 > 0.0 && t.d.sigma2 > 0.0) {
                return Err(Error::Domain("regression variance must be positive".to_string()));
            }
        }
        if self.phi.iter().any(|p| p.var.iter().any(|v| !(*v > 0.0)))
            || self.eta.iter().any(|e| !(e.lambda_n > 0.0) || e.v_var.iter().any(|v| !(*v > 0.0)))
        {
            return Err(Error::Domain("atom variance or rate not positive".to_string()));
        }
        let c = &self.conc;
        if !(c.alpha_star > 0.0 && c.alpha_theta > 0.0 && c.alpha_phi > 0.0) {
            return Err(Error::Domain("concentration parameters must be positive".to_string()));
        }
        Ok(())
    }

    /// Simulates `n_clusters` clusters from the model given the parameters:
    /// fresh class labels, `N ~ Pois(lambda_k)` redrawn until positive,
    /// `A ~ Bern(1/2)`, then X, D, M, Y in order.
    pub fn simulate_dataset<R: Rng + ?Sized>(
        &self,
        design: DesignSpec,
        d_kind: DKind,
        n_clusters: usize,
        rng: &mut R,
    ) -> Result<ClusterDataset> {
        let mut clusters = Vec::with_capacity(n_clusters);
        for i in 0..n_clusters {
            let k = self.weights.draw_k(rng);
            let eta = &self.eta[k];
            let n = dist::poisson_positive(rng, eta.lambda_n) as usize;
            let treated = rng.random::<f64>() < 0.5;
            let arm = if treated { 1.0 } else { 0.0 };
            let v = eta.draw_v(rng);
            let mut ls = Vec::with_capacity(n);
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                let l = self.weights.draw_l(k, rng);
                let m = self.weights.draw_m(k, l, rng);
                ls.push(l);
                xs.push(self.phi[m].draw(rng));
            }
            let size = n as f64;
            let ds: Vec<f64> = (0..n)
                .map(|j| {
                    let atom = &self.theta[ls[j]].d;
                    let mean = atom.mean(&design.d_row(arm, size, &v, &xs[j]));
                    match d_kind {
                        DKind::Continuous => mean + atom.sigma() * std_normal(rng),
                        DKind::Binary => {
                            if mean + std_normal(rng) >= 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    }
                })
                .collect();
            let d_loo = loo_means(&ds);
            let ms: Vec<f64> = (0..n)
                .map(|j| {
                    let atom = &self.theta[ls[j]].m;
                    atom.mean(&design.m_row(arm, size, &v, &xs[j], ds[j], d_loo[j])) + atom.sigma() * std_normal(rng)
                })
                .collect();
            let m_loo = loo_means(&ms);
            let individuals = (0..n)
                .map(|j| {
                    let atom = &self.theta[ls[j]].y;
                    let row = design.y_row(arm, size, &v, &xs[j], ds[j], d_loo[j], ms[j], m_loo[j]);
                    Individual {
                        x: xs[j].clone(),
                        d: ds[j],
                        m: ms[j],
                        y: atom.mean(&row) + atom.sigma() * std_normal(rng),
                    }
                })
                .collect();
            clusters.push(ClusterRecord {
                id: format!("sim{i}"),
                treated,
                v,
                individuals,
            });
        }
        ClusterDataset::new(design.p, design.q, d_kind, clusters)
    }
}

/// Dataset, cached design matrices and hyperparameters shared by all sweeps.
#[derive(Debug, Clone)]
pub struct GibbsContext<'a> {
    pub dataset: &'a ClusterDataset,
    pub design: ObservedDesign,
    pub hyper: &'a BaseMeasureHyper,
}

impl<'a> GibbsContext<'a> {
    pub fn new(dataset: &'a ClusterDataset, hyper: &'a BaseMeasureHyper) -> Result<Self> {
        let spec = DesignSpec::for_dataset(dataset);
        if spec != hyper.design {
            return Err(Error::Mismatch(format!(
                "hyperparameters built for p={} q={}, dataset has p={} q={}",
                hyper.design.p, hyper.design.q, spec.p, spec.q
            )));
        }
        if dataset.d_kind() != hyper.d_kind {
            return Err(Error::Mismatch("confounder type differs between dataset and hyperparameters".to_string()));
        }
        Ok(GibbsContext {
            dataset,
            design: ObservedDesign::build(dataset, spec),
            hyper,
        })
    }
}
