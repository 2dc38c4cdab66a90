//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment line and blank lines are
//! skipped. Unknown or repeated keys are rejected. Keys in the `manifest.`
//! namespace are informational and ignored, so a run manifest is itself a
//! valid configuration. [`RunConfig::to_text`] writes every key, and
//! parsing that text restores an equal configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use caedp::consts::{
    CDF_INVERSION_TOL, DEFAULT_SYNTHETIC_CLUSTERS, DEFAULT_TRUNCATION, DEFAULT_TRUTH_CLUSTERS, DESK_BURN_IN,
    DESK_KEEP, GAMMA_MH_BURN, GAMMA_MH_STEPS,
};
use caedp::dataset::DKind;
use caedp::gcomp::{GammaMode, GcompConfig, RhoMode};
use caedp::gibbs::McmcConfig;
use caedp::io::ColumnSchema;
use caedp::model::{GammaPrior, TruncationLevels};
use caedp::simbench::{Method, ScenarioId};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Gcompute,
    Sensitivity,
    Simulate,
    Diagnose,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::Fit,
        Command::Gcompute,
        Command::Sensitivity,
        Command::Simulate,
        Command::Diagnose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Gcompute => "gcompute",
            Command::Sensitivity => "sensitivity",
            Command::Simulate => "simulate",
            Command::Diagnose => "diagnose",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command {s:?}"))
    }
}

/// Base-measure hyperparameters: empirical-Bayes g-priors, or data-free
/// priors with coefficient variance `coef_var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorChoice {
    GPrior,
    Vague { coef_var: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Posterior file for `gcompute`/`sensitivity`; defaults to `<out>/posterior.csv`.
    pub posterior: Option<PathBuf>,
    /// Log-likelihood file for `diagnose`; defaults to `<out>/loglik.csv`.
    pub loglik: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub chains: usize,
    pub burn_in: usize,
    pub keep: usize,
    pub thin: usize,
    pub truncation: [usize; 3],
    /// `(shape, rate)` of the gamma priors on `alpha_star, alpha_theta, alpha_phi`.
    pub conc_priors: [(f64, f64); 3],
    pub prior: PriorChoice,
    pub column_cluster: String,
    pub column_treatment: String,
    pub column_d: String,
    pub column_m: String,
    pub column_y: String,
    /// `None` reads `V_1, V_2, ...` off the header.
    pub columns_v: Option<Vec<String>>,
    pub columns_x: Option<Vec<String>>,
    pub d_kind: DKind,
    pub synthetic_clusters: usize,
    pub rho: RhoMode,
    pub gamma_fixed: bool,
    pub gamma_steps: usize,
    pub gamma_burn: usize,
    pub gamma1: f64,
    pub gamma0: f64,
    pub inversion_tol: f64,
    pub sensitivity_rho: Vec<RhoMode>,
    pub scenario: ScenarioId,
    pub replicates: usize,
    pub method: Method,
    pub truth_clusters: usize,
    /// Overrides the scenario's cluster count.
    pub n_clusters: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GammaPrior::default();
        RunConfig {
            command: None,
            input: None,
            out: PathBuf::from("caedp-out"),
            posterior: None,
            loglik: None,
            seed: 1,
            threads: None,
            chains: 1,
            burn_in: DESK_BURN_IN,
            keep: DESK_KEEP,
            thin: 1,
            truncation: [DEFAULT_TRUNCATION; 3],
            conc_priors: [(g.shape, g.rate); 3],
            prior: PriorChoice::GPrior,
            column_cluster: "cluster_id".to_string(),
            column_treatment: "A".to_string(),
            column_d: "D".to_string(),
            column_m: "M".to_string(),
            column_y: "Y".to_string(),
            columns_v: None,
            columns_x: None,
            d_kind: DKind::Continuous,
            synthetic_clusters: DEFAULT_SYNTHETIC_CLUSTERS,
            rho: RhoMode::Prior,
            gamma_fixed: false,
            gamma_steps: GAMMA_MH_STEPS,
            gamma_burn: GAMMA_MH_BURN,
            gamma1: 0.0,
            gamma0: 0.0,
            inversion_tol: CDF_INVERSION_TOL,
            sensitivity_rho: vec![RhoMode::Fixed(0.0), RhoMode::Prior],
            scenario: ScenarioId::S7,
            replicates: 20,
            method: Method::CaEdp,
            truth_clusters: DEFAULT_TRUTH_CLUSTERS,
            n_clusters: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn parse_rho(v: &str) -> Result<RhoMode, String> {
    if v == "prior" {
        Ok(RhoMode::Prior)
    } else {
        v.parse().map(RhoMode::Fixed).map_err(|_| format!("rho mode {v:?} is neither \"prior\" nor a number"))
    }
}

fn render_rho(r: &RhoMode) -> String {
    match r {
        RhoMode::Prior => "prior".to_string(),
        RhoMode::Fixed(v) => format!("{v}"),
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn columns(v: &str) -> Option<Vec<String>> {
    (v != "auto").then(|| list(v))
}

/// Any error found while checking a configuration is a validation error.
fn invalid(e: caedp::Error) -> CliError {
    CliError::Validation(e.to_string())
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key.starts_with("manifest.") {
                continue;
            }
            if seen.iter().any(|k| k == key) {
                return Err(CliError::Validation(format!("config line {}: key {key} repeated", no + 1)));
            }
            seen.push(key.to_string());
            cfg.set(key, value)
                .map_err(|m| CliError::Validation(format!("config line {}: {m}", no + 1)))?;
        }
        Ok(cfg)
    }

    /// Sets one key; the error names the key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "command" => self.command = if v.is_empty() { None } else { Some(v.parse()?) },
            "input" => self.input = opt_path(v),
            "out" => self.out = PathBuf::from(v),
            "posterior" => self.posterior = opt_path(v),
            "loglik" => self.loglik = opt_path(v),
            "seed" => self.seed = parse_num(key, v)?,
            "threads" => self.threads = if v.is_empty() { None } else { Some(parse_num(key, v)?) },
            "chains" => self.chains = parse_num(key, v)?,
            "burn_in" => self.burn_in = parse_num(key, v)?,
            "keep" => self.keep = parse_num(key, v)?,
            "thin" => self.thin = parse_num(key, v)?,
            "truncation_k" => self.truncation[0] = parse_num(key, v)?,
            "truncation_l" => self.truncation[1] = parse_num(key, v)?,
            "truncation_m" => self.truncation[2] = parse_num(key, v)?,
            "alpha_star_shape" => self.conc_priors[0].0 = parse_num(key, v)?,
            "alpha_star_rate" => self.conc_priors[0].1 = parse_num(key, v)?,
            "alpha_theta_shape" => self.conc_priors[1].0 = parse_num(key, v)?,
            "alpha_theta_rate" => self.conc_priors[1].1 = parse_num(key, v)?,
            "alpha_phi_shape" => self.conc_priors[2].0 = parse_num(key, v)?,
            "alpha_phi_rate" => self.conc_priors[2].1 = parse_num(key, v)?,
            "prior" => {
                self.prior = match v {
                    "gprior" => PriorChoice::GPrior,
                    "vague" => PriorChoice::Vague { coef_var: 100.0 },
                    _ => return Err(format!("prior must be gprior or vague, got {v:?}")),
                }
            }
            "prior_coef_var" => {
                let c = parse_num(key, v)?;
                match &mut self.prior {
                    PriorChoice::Vague { coef_var } => *coef_var = c,
                    PriorChoice::GPrior => return Err("prior_coef_var needs prior = vague set first".to_string()),
                }
            }
            "column_cluster" => self.column_cluster = v.to_string(),
            "column_treatment" => self.column_treatment = v.to_string(),
            "column_d" => self.column_d = v.to_string(),
            "column_m" => self.column_m = v.to_string(),
            "column_y" => self.column_y = v.to_string(),
            "columns_v" => self.columns_v = columns(v),
            "columns_x" => self.columns_x = columns(v),
            "d_kind" => {
                self.d_kind = match v {
                    "continuous" => DKind::Continuous,
                    "binary" => DKind::Binary,
                    _ => return Err(format!("d_kind must be continuous or binary, got {v:?}")),
                }
            }
            "synthetic_clusters" => self.synthetic_clusters = parse_num(key, v)?,
            "rho" => self.rho = parse_rho(v)?,
            "gamma" => {
                self.gamma_fixed = match v {
                    "estimate" => false,
                    "fixed" => true,
                    _ => return Err(format!("gamma must be estimate or fixed, got {v:?}")),
                }
            }
            "gamma_steps" => self.gamma_steps = parse_num(key, v)?,
            "gamma_burn" => self.gamma_burn = parse_num(key, v)?,
            "gamma1" => self.gamma1 = parse_num(key, v)?,
            "gamma0" => self.gamma0 = parse_num(key, v)?,
            "inversion_tol" => self.inversion_tol = parse_num(key, v)?,
            "sensitivity_rho" => self.sensitivity_rho = list(v).iter().map(|s| parse_rho(s)).collect::<Result<_, _>>()?,
            "scenario" => self.scenario = ScenarioId::parse(v).map_err(|e| e.to_string())?,
            "replicates" => self.replicates = parse_num(key, v)?,
            "method" => {
                self.method = match v {
                    "ca-edp" => Method::CaEdp,
                    "parametric" => Method::Parametric,
                    _ => return Err(format!("method must be ca-edp or parametric, got {v:?}")),
                }
            }
            "truth_clusters" => self.truth_clusters = parse_num(key, v)?,
            "n_clusters" => self.n_clusters = if v.is_empty() { None } else { Some(parse_num(key, v)?) },
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every key in canonical order.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        let cols = |c: &Option<Vec<String>>| c.as_ref().map(|c| c.join(",")).unwrap_or_else(|| "auto".to_string());
        let mut kv: Vec<(&str, String)> = vec![
            ("command", self.command.map(|c| c.name().to_string()).unwrap_or_default()),
            ("input", path(&self.input)),
            ("out", self.out.display().to_string()),
            ("posterior", path(&self.posterior)),
            ("loglik", path(&self.loglik)),
            ("seed", self.seed.to_string()),
            ("threads", opt(self.threads)),
            ("chains", self.chains.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("keep", self.keep.to_string()),
            ("thin", self.thin.to_string()),
            ("truncation_k", self.truncation[0].to_string()),
            ("truncation_l", self.truncation[1].to_string()),
            ("truncation_m", self.truncation[2].to_string()),
        ];
        let names = [
            ("alpha_star_shape", "alpha_star_rate"),
            ("alpha_theta_shape", "alpha_theta_rate"),
            ("alpha_phi_shape", "alpha_phi_rate"),
        ];
        for ((ks, kr), (shape, rate)) in names.into_iter().zip(self.conc_priors) {
            kv.push((ks, format!("{shape}")));
            kv.push((kr, format!("{rate}")));
        }
        match self.prior {
            PriorChoice::GPrior => kv.push(("prior", "gprior".to_string())),
            PriorChoice::Vague { coef_var } => {
                kv.push(("prior", "vague".to_string()));
                kv.push(("prior_coef_var", format!("{coef_var}")));
            }
        }
        kv.extend([
            ("column_cluster", self.column_cluster.clone()),
            ("column_treatment", self.column_treatment.clone()),
            ("column_d", self.column_d.clone()),
            ("column_m", self.column_m.clone()),
            ("column_y", self.column_y.clone()),
            ("columns_v", cols(&self.columns_v)),
            ("columns_x", cols(&self.columns_x)),
            (
                "d_kind",
                match self.d_kind {
                    DKind::Continuous => "continuous",
                    DKind::Binary => "binary",
                }
                .to_string(),
            ),
            ("synthetic_clusters", self.synthetic_clusters.to_string()),
            ("rho", render_rho(&self.rho)),
            ("gamma", if self.gamma_fixed { "fixed" } else { "estimate" }.to_string()),
            ("gamma_steps", self.gamma_steps.to_string()),
            ("gamma_burn", self.gamma_burn.to_string()),
            ("gamma1", format!("{}", self.gamma1)),
            ("gamma0", format!("{}", self.gamma0)),
            ("inversion_tol", format!("{}", self.inversion_tol)),
            (
                "sensitivity_rho",
                self.sensitivity_rho.iter().map(render_rho).collect::<Vec<_>>().join(","),
            ),
            ("scenario", self.scenario.name().to_string()),
            ("replicates", self.replicates.to_string()),
            ("method", self.method.name().to_string()),
            ("truth_clusters", self.truth_clusters.to_string()),
            ("n_clusters", opt(self.n_clusters)),
        ]);
        let mut s = String::new();
        for (k, v) in kv {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn mcmc_config(&self) -> Result<McmcConfig, CliError> {
        let [k, l, m] = self.truncation;
        let prior = |(shape, rate): (f64, f64)| GammaPrior::new(shape, rate).map_err(invalid);
        let cfg = McmcConfig {
            burn_in: self.burn_in,
            keep: self.keep,
            thin: self.thin,
            seed: self.seed,
            truncation: TruncationLevels::new(k, l, m).map_err(invalid)?,
            conc_priors: [
                prior(self.conc_priors[0])?,
                prior(self.conc_priors[1])?,
                prior(self.conc_priors[2])?,
            ],
        };
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }

    pub fn gcomp_config(&self) -> Result<GcompConfig, CliError> {
        let cfg = GcompConfig {
            synthetic_clusters: self.synthetic_clusters,
            rho: self.rho,
            gamma: if self.gamma_fixed {
                GammaMode::Fixed {
                    gamma1: self.gamma1,
                    gamma0: self.gamma0,
                }
            } else {
                GammaMode::Estimate {
                    steps: self.gamma_steps,
                    burn: self.gamma_burn,
                }
            },
            seed: self.seed,
            inversion_tol: self.inversion_tol,
        };
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }

    /// Column schema; covariate columns left on `auto` are read off `header`.
    pub fn schema(&self, header: &[&str]) -> Result<ColumnSchema, CliError> {
        let inferred = ColumnSchema::infer(header, self.d_kind).map_err(invalid)?;
        Ok(ColumnSchema {
            cluster_id: self.column_cluster.clone(),
            treatment: self.column_treatment.clone(),
            v: self.columns_v.clone().unwrap_or(inferred.v),
            x: self.columns_x.clone().unwrap_or(inferred.x),
            d: self.column_d.clone(),
            m: self.column_m.clone(),
            y: self.column_y.clone(),
            d_kind: self.d_kind,
        })
    }

    pub fn posterior_path(&self) -> PathBuf {
        self.posterior.clone().unwrap_or_else(|| self.out.join("posterior.csv"))
    }

    pub fn loglik_path(&self) -> PathBuf {
        self.loglik.clone().unwrap_or_else(|| self.out.join("loglik.csv"))
    }

    /// Checks everything `command` needs before any computation starts.
    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        let need_input = matches!(command, Command::Fit | Command::Gcompute | Command::Sensitivity);
        if need_input {
            match &self.input {
                None => return Err(CliError::Validation(format!("{} needs an input file", command.name()))),
                Some(p) if !p.is_file() => {
                    return Err(CliError::Validation(format!("input file {} does not exist", p.display())))
                }
                _ => {}
            }
        }
        if self.chains == 0 {
            return Err(CliError::Validation("chains must be at least 1".to_string()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Validation("threads must be at least 1".to_string()));
        }
        if let PriorChoice::Vague { coef_var } = self.prior {
            if !(coef_var > 0.0) {
                return Err(CliError::Validation("prior_coef_var must be positive".to_string()));
            }
        }
        match command {
            Command::Fit => {
                self.mcmc_config()?;
            }
            Command::Gcompute | Command::Sensitivity => {
                self.gcomp_config()?;
                if command == Command::Sensitivity && self.sensitivity_rho.is_empty() {
                    return Err(CliError::Validation("sensitivity_rho lists no modes".to_string()));
                }
                let p = self.posterior_path();
                if !p.is_file() {
                    return Err(CliError::Validation(format!("posterior file {} does not exist", p.display())));
                }
            }
            Command::Simulate => {
                self.mcmc_config()?;
                self.gcomp_config()?;
                if self.replicates == 0 {
                    return Err(CliError::Validation("replicates must be at least 1".to_string()));
                }
                if self.truth_clusters < 2 {
                    return Err(CliError::Validation("truth_clusters must be at least 2".to_string()));
                }
                if self.n_clusters == Some(0) {
                    return Err(CliError::Validation("n_clusters must be at least 1".to_string()));
                }
            }
            Command::Diagnose => {
                let p = self.loglik_path();
                if !p.is_file() {
                    return Err(CliError::Validation(format!("log-likelihood file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
