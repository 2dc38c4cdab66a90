//! Bayesian nonparametric causal mediation analysis for cluster-randomized
//! trials with a post-treatment confounder and mediator spillover.
//!
//! Layers, bottom up: [`model`] (truncated three-level stick-breaking prior),
//! [`gibbs`] (blocked Gibbs sampler), [`copula`] (cross-world Gaussian
//! copula), [`gcomp`] (g-computation of the mediation estimands), [`lpml`]
//! and [`simbench`] (simulation scenarios and frequentist evaluation).

pub mod consts;
pub mod copula;
pub mod dataset;
pub mod design;
pub mod dist;
pub mod error;
pub mod gcomp;
pub mod gibbs;
pub mod io;
pub mod linreg;
pub mod lpml;
pub mod model;
pub mod rng;
pub mod simbench;

pub use error::{Error, Result};
