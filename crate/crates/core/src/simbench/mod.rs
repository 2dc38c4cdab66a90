//! Simulation benchmark: scenario data-generating processes, ground truth,
//! the single-class parametric baseline and replicate evaluation.

pub mod evaluate;
pub mod scenario;
pub mod truth;


use log::info;
use rayon::prelude::*;

use crate::error::Result;
use crate::gcomp::{aggregate_posterior, gcompute_posterior, EstimandDraw, EstimandSummary, GcompConfig};
use crate::gibbs::{run_chain, McmcConfig, PosteriorSample};
use crate::lpml::compute_lpml;
use crate::dataset::ClusterDataset;
use crate::design::DesignSpec;
use crate::model::{gprior_hyperparameters, TruncationLevels};
use crate::rng::{child_seed, stream, tag};

pub use evaluate::{evaluate, EstimandMetrics, EvalReport};
pub use scenario::{generate_dataset, ScenarioId, ScenarioSpec};
pub use truth::{linear_analytic_truth, truth_oracle, TruthEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    CaEdp,
    /// Single outcome, covariate and cluster class.
    Parametric,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::CaEdp => "ca-edp",
            Method::Parametric => "parametric",
        }
    }
}

/// Fitted posterior with its estimand draws.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub posterior: PosteriorSample,
    pub draws: Vec<EstimandDraw>,
    pub summary: [EstimandSummary; 5],
}

/// Empirical-Bayes fit followed by posterior g-computation.
pub fn fit_and_gcompute(dataset: &ClusterDataset, mcmc: &McmcConfig, gcomp: &GcompConfig) -> Result<FitResult> {
    let hyper = gprior_hyperparameters(dataset, DesignSpec::for_dataset(dataset))?;
    let posterior = run_chain(dataset, mcmc, &hyper)?;
    let draws = gcompute_posterior(&posterior, dataset, gcomp)?;
    let summary = aggregate_posterior(&draws)?;
    Ok(FitResult {
        posterior,
        draws,
        summary,
    })
}

/// The model with `K = L = M = 1`: conjugate linear regressions for Y, M, D
/// under the same priors, then the same g-computation.
pub fn fit_parametric_baseline(dataset: &ClusterDataset, mcmc: &McmcConfig, gcomp: &GcompConfig) -> Result<FitResult> {
    let cfg = McmcConfig {
        truncation: TruncationLevels::new(1, 1, 1)?,
        ..mcmc.clone()
    };
    fit_and_gcompute(dataset, &cfg, gcomp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub spec: ScenarioSpec,
    pub replicates: usize,
    pub mcmc: McmcConfig,
    pub gcomp: GcompConfig,
    pub method: Method,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub index: usize,
    pub summary: [EstimandSummary; 5],
    pub draws: Vec<EstimandDraw>,
    pub lpml: f64,
}

/// Replicate `r`: data from stream `(seed, DATA, r)`, chain and
/// g-computation seeded with `child_seed(seed, REPLICATE, r)`.
pub fn run_replicate(cfg: &BenchmarkConfig, r: usize) -> Result<ReplicateResult> {
    let dataset = generate_dataset(&cfg.spec, &mut stream(cfg.seed, tag::DATA, r as u64))?;
    let seed = child_seed(cfg.seed, tag::REPLICATE, r as u64);
    let mcmc = McmcConfig { seed, ..cfg.mcmc.clone() };
    let gcomp = GcompConfig { seed, ..cfg.gcomp };
    let fit = match cfg.method {
        Method::CaEdp => fit_and_gcompute(&dataset, &mcmc, &gcomp)?,
        Method::Parametric => fit_parametric_baseline(&dataset, &mcmc, &gcomp)?,
    };
    info!("{} replicate {r} done", cfg.spec.id.name());
    Ok(ReplicateResult {
        index: r,
        lpml: compute_lpml(&fit.posterior)?,
        summary: fit.summary,
        draws: fit.draws,
    })
}

/// Runs every replicate in parallel and evaluates SME and NIE against
/// `truth`. Results keep replicate order.
pub fn run_benchmark(cfg: &BenchmarkConfig, truth: [f64; 5]) -> Result<(Vec<ReplicateResult>, EvalReport)> {
    let results = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<[EstimandSummary; 5]> = results.iter().map(|r| r.summary).collect();
    let truths = vec![truth; results.len()];
    let report = evaluate(
        &summaries,
        &truths,
        &[crate::gcomp::Estimand::Sme, crate::gcomp::Estimand::Nie],
    )?;
    Ok((results, report))
}
