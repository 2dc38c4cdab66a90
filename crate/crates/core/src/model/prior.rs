//! Forward simulation from the truncated prior.

use rand::Rng;

use crate::dist::beta_with_ln_complement;
use crate::model::types::{
    BaseMeasureHyper, ConcentrationParams, EtaAtom, PhiAtom, StickWeights, ThetaAtom, TruncationLevels,
};
use crate::rng::{seeded, SimRng};

/// One realization of the truncated random measure with its atoms, plus the
/// class of one simulated cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDraw {
    pub weights: StickWeights,
    pub theta: Vec<ThetaAtom>,
    pub phi: Vec<PhiAtom>,
    pub eta: Vec<EtaAtom>,
    pub cluster_class: usize,
}

impl PriorDraw {
    /// Outcome and covariate classes `(l, m)` of one individual in cluster class `k`.
    pub fn draw_unit<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> (usize, usize) {
        let l = self.weights.draw_l(k, rng);
        let m = self.weights.draw_m(k, l, rng);
        (l, m)
    }
}

/// Stick fractions from their `Beta(1, alpha)` priors.
pub fn draw_sticks<R: Rng + ?Sized>(levels: TruncationLevels, conc: &ConcentrationParams, rng: &mut R) -> StickWeights {
    let TruncationLevels { k, l, m } = levels;
    let mut draw = |n: usize, alpha: f64| -> (Vec<f64>, Vec<f64>) {
        (0..n).map(|_| beta_with_ln_complement(rng, 1.0, alpha)).unzip()
    };
    let (s, ls) = draw(k, conc.alpha_star);
    let (vt, lt) = draw(k * l, conc.alpha_theta);
    let (vp, lp) = draw(k * l * m, conc.alpha_phi);
    StickWeights::from_fractions(levels, s, vt, vp)
        .and_then(|w| w.with_ln_rest(&ls, &lt, &lp))
        .expect("beta draws lie in [0, 1] and match the layout")
}

pub fn sample_prior_draw_with<R: Rng + ?Sized>(
    levels: TruncationLevels,
    conc: &ConcentrationParams,
    base: &BaseMeasureHyper,
    rng: &mut R,
) -> PriorDraw {
    let weights = draw_sticks(levels, conc, rng);
    let theta = (0..levels.l).map(|_| base.draw_theta(rng)).collect();
    let phi = (0..levels.m).map(|_| base.draw_phi(rng)).collect();
    let eta = (0..levels.k).map(|_| base.draw_eta(rng)).collect();
    let cluster_class = weights.draw_k(rng);
    PriorDraw {
        weights,
        theta,
        phi,
        eta,
        cluster_class,
    }
}

/// Seeded prior draw; identical seeds give identical draws.
pub fn sample_prior_draw(
    levels: TruncationLevels,
    conc: &ConcentrationParams,
    base: &BaseMeasureHyper,
    seed: u64,
) -> PriorDraw {
    let mut rng: SimRng = seeded(seed);
    sample_prior_draw_with(levels, conc, base, &mut rng)
}
