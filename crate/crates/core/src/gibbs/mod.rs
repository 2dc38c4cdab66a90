//! Three-level blocked Gibbs sampler for the truncated model.

pub mod chain;
pub mod serialize;
pub mod state;
pub mod updates;

#[cfg(test)]
mod tests;

pub use chain::{run_chain, run_chains, sweep, McmcConfig, PosteriorSample};
pub use state::{CaEdpState, GibbsContext};
