//! Orchestration of the five commands.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use caedp::dataset::ClusterDataset;
use caedp::design::DesignSpec;
use caedp::gcomp::{aggregate_posterior, gcompute_posterior, run_sensitivity};
use caedp::gibbs::serialize::{read_loglik, read_posterior, write_loglik, write_posterior};
use caedp::gibbs::{run_chain, run_chains, PosteriorSample};
use caedp::io::ingest_csv;
use caedp::lpml::log_cpo;
use caedp::model::{gprior_hyperparameters, BaseMeasureHyper};
use caedp::rng::{child_seed, tag};
use caedp::simbench::{linear_analytic_truth, run_benchmark, truth_oracle, BenchmarkConfig, ScenarioSpec};
use log::info;

use crate::artifacts::Artifacts;
use crate::config::{Command, PriorChoice, RunConfig};
use crate::error::CliError;
use crate::report;

fn input_path(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.input
        .as_deref()
        .ok_or_else(|| CliError::Validation("no input file configured".to_string()))
}

fn load_dataset(cfg: &RunConfig) -> Result<ClusterDataset, CliError> {
    let path = input_path(cfg)?;
    let text = fs::read_to_string(path)?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').map(str::trim).collect();
    let schema = cfg.schema(&header)?;
    let ds = ingest_csv(path, &schema)?;
    info!(
        "read {} individuals in {} clusters from {}",
        ds.n_total(),
        ds.n_clusters(),
        path.display()
    );
    Ok(ds)
}

fn hyperparameters(cfg: &RunConfig, ds: &ClusterDataset) -> Result<BaseMeasureHyper, CliError> {
    let design = DesignSpec::for_dataset(ds);
    Ok(match cfg.prior {
        PriorChoice::GPrior => gprior_hyperparameters(ds, design)?,
        PriorChoice::Vague { coef_var } => {
            let mean_n = ds.n_total() as f64 / ds.n_clusters() as f64;
            BaseMeasureHyper::vague(design, ds.d_kind(), coef_var, mean_n)?
        }
    })
}

fn load_posterior(cfg: &RunConfig, ds: &ClusterDataset) -> Result<(PosteriorSample, PathBuf), CliError> {
    let path = cfg.posterior_path();
    let f = fs::File::open(&path)?;
    let post = read_posterior(BufReader::new(f), ds.n_clusters(), ds.n_total())?;
    Ok((post, path))
}

fn fit(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let hyper = hyperparameters(cfg, &ds)?;
    let mcmc = cfg.mcmc_config()?;
    let post = if cfg.chains == 1 {
        run_chain(&ds, &mcmc, &hyper)?
    } else {
        PosteriorSample::concat(run_chains(&ds, &mcmc, &hyper, cfg.chains)?)?
    };
    let mut buf = Vec::new();
    write_posterior(&post, &mut buf)?;
    art.write("posterior.csv", &String::from_utf8_lossy(&buf))?;
    buf.clear();
    write_loglik(&post, &mut buf)?;
    art.write("loglik.csv", &String::from_utf8_lossy(&buf))?;
    Ok(())
}

fn gcompute(cfg: &RunConfig, art: &mut Artifacts) -> Result<PathBuf, CliError> {
    let ds = load_dataset(cfg)?;
    let (post, path) = load_posterior(cfg, &ds)?;
    let draws = gcompute_posterior(&post, &ds, &cfg.gcomp_config()?)?;
    let summary = aggregate_posterior(&draws)?;
    art.write("estimand_draws.csv", &report::draws_csv(&draws))?;
    art.write("summary.txt", &report::summary_table(&summary))?;
    Ok(path)
}

fn sensitivity(cfg: &RunConfig, art: &mut Artifacts) -> Result<PathBuf, CliError> {
    let ds = load_dataset(cfg)?;
    let (post, path) = load_posterior(cfg, &ds)?;
    let runs = run_sensitivity(&post, &ds, &cfg.gcomp_config()?, &cfg.sensitivity_rho)?;
    art.write("sensitivity_draws.csv", &report::sensitivity_draws_csv(&runs))?;
    art.write("sensitivity.txt", &report::sensitivity_table(&runs))?;
    Ok(path)
}

fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let mut spec = ScenarioSpec::preset(cfg.scenario);
    if let Some(n) = cfg.n_clusters {
        spec.n_clusters = n;
    }
    let (truth, source) = match linear_analytic_truth(&spec) {
        Ok(t) => (t, "closed form".to_string()),
        Err(_) => {
            let est = truth_oracle(&spec, cfg.truth_clusters, child_seed(cfg.seed, tag::TRUTH, 0))?;
            (est.values, format!("Monte Carlo over {} clusters", est.n_clusters))
        }
    };
    let bench = BenchmarkConfig {
        spec,
        replicates: cfg.replicates,
        mcmc: cfg.mcmc_config()?,
        gcomp: cfg.gcomp_config()?,
        method: cfg.method,
        seed: cfg.seed,
    };
    let (results, eval) = run_benchmark(&bench, truth)?;
    let mut text = format!(
        "scenario {}, method {}, {} replicates, truth by {source}\n",
        cfg.scenario.name(),
        cfg.method.name(),
        cfg.replicates
    );
    text.push_str(&eval.to_string());
    let mut truth_text = String::from("estimand,truth\n");
    for e in caedp::gcomp::Estimand::ALL {
        truth_text.push_str(&format!("{},{}\n", e.name(), truth[e.index()]));
    }
    art.write("truth.csv", &truth_text)?;
    art.write("replicates.csv", &report::replicates_csv(&results))?;
    art.write("eval_report.txt", &text)?;
    Ok(())
}

fn diagnose(cfg: &RunConfig, art: &mut Artifacts) -> Result<PathBuf, CliError> {
    let path = cfg.loglik_path();
    let loglik = read_loglik(BufReader::new(fs::File::open(&path)?))?;
    let cpo = log_cpo(&loglik)?;
    let lpml: f64 = cpo.iter().sum();
    let mut csv = String::from("observation,log_cpo\n");
    for (g, v) in cpo.iter().enumerate() {
        csv.push_str(&format!("{g},{v}\n"));
    }
    art.write("cpo.csv", &csv)?;
    art.write("lpml.txt", &format!("LPML = {lpml}\ndraws = {}\nobservations = {}\n", loglik.len(), cpo.len()))?;
    Ok(path)
}

/// Validates `cfg` for `command`, runs it and writes its artifacts and
/// manifest. Returns the artifact names.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate(command)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let mut art = Artifacts::new(&cfg.out);
    let mut inputs: Vec<(&str, PathBuf)> = Vec::new();
    if let Some(p) = &cfg.input {
        if command != Command::Simulate && command != Command::Diagnose {
            inputs.push(("data", p.clone()));
        }
    }
    match command {
        Command::Fit => fit(cfg, &mut art)?,
        Command::Gcompute => inputs.push(("posterior", gcompute(cfg, &mut art)?)),
        Command::Sensitivity => inputs.push(("posterior", sensitivity(cfg, &mut art)?)),
        Command::Simulate => simulate(cfg, &mut art)?,
        Command::Diagnose => inputs.push(("loglik", diagnose(cfg, &mut art)?)),
    }
    let refs: Vec<(&str, &Path)> = inputs.iter().map(|(r, p)| (*r, p.as_path())).collect();
    art.write_manifest(command, cfg, &refs, started, clock.elapsed())?;
    info!("{} finished in {:.1}s", command.name(), clock.elapsed().as_secs_f64());
    Ok(art.names().into_iter().map(String::from).collect())
}
