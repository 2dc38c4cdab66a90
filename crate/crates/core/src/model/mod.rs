//! The truncated nested common-atoms enriched Dirichlet process: types,
//! closed-form prior properties, prior simulation and empirical-Bayes
//! hyperparameters.

pub mod hyper;
pub mod prior;
pub mod properties;
pub mod types;

pub use hyper::{empirical_bayes_g, gprior_hyperparameters};
pub use prior::{sample_prior_draw, sample_prior_draw_with, PriorDraw};
pub use properties::{
    corr_phi, corr_theta, cross_measure_covariance, marginal_truncation_bound, tie_prob_joint, tie_prob_phi,
    tie_prob_theta, truncation_bound,
};
pub use types::{
    BaseMeasureHyper, ClassIndicators, ConcentrationParams, EtaAtom, GammaPrior, PhiAtom, RegressionAtom,
    StickWeights, ThetaAtom, TruncationLevels,
};
