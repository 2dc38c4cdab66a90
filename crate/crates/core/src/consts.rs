//! Repository-wide numerical tolerances and defaults.

/// Stick-breaking weights must sum to one within this tolerance.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Agreement required between the least-squares fit and a normal-equations oracle.
pub const REGRESSION_ORACLE_TOL: f64 = 1e-8;

/// Stick fractions are clamped to `1 - STICK_CLAMP` before taking `ln(1 - v)`.
pub const STICK_CLAMP: f64 = 1e-12;

/// Default absolute tolerance on `|F(d) - u|` when inverting a mixture CDF.
pub const CDF_INVERSION_TOL: f64 = 1e-8;

/// Initial bracket half-width for CDF inversion, in units of the largest component SD.
pub const CDF_BRACKET_SDS: f64 = 10.0;

/// Maximum number of bracket doublings before CDF inversion gives up.
pub const CDF_MAX_DOUBLINGS: usize = 60;

/// Rank uniforms are clamped into `[U_CLAMP, 1 - U_CLAMP]` before `Phi^{-1}`.
pub const U_CLAMP: f64 = 1e-12;

/// Default truncation levels (K, L, M).
pub const DEFAULT_TRUNCATION: usize = 15;

/// Default number of synthetic clusters per posterior draw.
pub const DEFAULT_SYNTHETIC_CLUSTERS: usize = 100;

/// Minimum fraction of synthetic clusters that must survive copula inversion.
pub const MIN_SYNTHETIC_SUCCESS: f64 = 0.9;

/// Metropolis-Hastings settings for the same-world correlations.
pub const GAMMA_MH_STEPS: usize = 2000;
pub const GAMMA_MH_BURN: usize = 500;

/// Estimand decomposition identities hold to this tolerance per draw.
pub const IDENTITY_TOL: f64 = 1e-10;

/// MCMC defaults for full-scale runs and for desk-scale presets.
pub const FULL_BURN_IN: usize = 10_000;
pub const FULL_KEEP: usize = 5_000;
pub const DESK_BURN_IN: usize = 1_000;
pub const DESK_KEEP: usize = 500;

/// Monte-Carlo clusters used by the simulation truth oracle.
pub const DEFAULT_TRUTH_CLUSTERS: usize = 100_000;

/// Shape of the inverse-gamma prior on regression variances (scale is the OLS variance).
pub const SIGMA_PRIOR_SHAPE: f64 = 2.0;

/// Prior sample size of the normal-inverse-gamma base measures for X and V.
pub const NIG_PRIOR_KAPPA: f64 = 0.1;
pub const NIG_PRIOR_SHAPE: f64 = 2.0;

/// Shape of the gamma base measure on Poisson cluster-size rates.
pub const CLUSTER_SIZE_PRIOR_SHAPE: f64 = 2.0;
