//! Empirical-Bayes base-measure hyperparameters.
//!
//! Each regression gets a g-prior centred at its least-squares fit,
//! `beta ~ N(beta_ols, g s2 (C^T C)^{-1})`, `sigma^2 ~ IG(2, s2)`, with
//! `s2 = SSE / (N - d)` and `g = max{0, R^2/(1-R^2) (N-d-1)/d}`; `d` counts
//! every design column including the intercept. A zero `g` is replaced by
//! `1/N` so the prior covariance stays positive definite.
//!
//! Binary D uses `beta ~ N((Phi^{-1}(mean D), 0, ..), N (C^T C)^{-1})`.

use nalgebra::DVector;

use crate::consts::{CLUSTER_SIZE_PRIOR_SHAPE, NIG_PRIOR_KAPPA, NIG_PRIOR_SHAPE, SIGMA_PRIOR_SHAPE};
use crate::dataset::{ClusterDataset, DKind};
use crate::design::{DesignSpec, ObservedDesign};
use crate::dist::{norm_quantile, NormalInverseGamma};
use crate::error::{Error, Result};
use crate::linreg::{ols, RegressionPrior};
use crate::model::types::{BaseMeasureHyper, GammaPrior};

/// `max{0, R^2/(1-R^2) (n-d-1)/d}`.
pub fn empirical_bayes_g(r_squared: f64, n: usize, d: usize, regression: &'static str) -> Result<f64> {
    if r_squared >= 1.0 {
        return Err(Error::DegenerateGPrior { regression });
    }
    if n <= d + 1 {
        return Err(Error::TooFewRows {
            regression,
            rows: n,
            needed: d + 2,
        });
    }
    let g = r_squared / (1.0 - r_squared) * (n - d - 1) as f64 / d as f64;
    Ok(g.max(0.0))
}

fn g_prior(rows: &[f64], ncol: usize, y: &[f64], regression: &'static str) -> Result<RegressionPrior> {
    let n = y.len();
    let fit = ols(rows, ncol, y, regression)?;
    let mut g = empirical_bayes_g(fit.r_squared, n, ncol, regression)?;
    if g == 0.0 {
        g = 1.0 / n as f64;
    }
    let s2 = fit.sse / (n - ncol) as f64;
    if !(s2 > 0.0) {
        return Err(Error::DegenerateGPrior { regression });
    }
    let cov = fit.xtx_inv * (g * s2);
    RegressionPrior::new(fit.coef, cov, SIGMA_PRIOR_SHAPE, s2)
}

fn probit_prior(rows: &[f64], ncol: usize, d: &[f64]) -> Result<RegressionPrior> {
    let n = d.len();
    if n <= ncol + 1 {
        return Err(Error::TooFewRows {
            regression: "confounder",
            rows: n,
            needed: ncol + 2,
        });
    }
    // The least-squares fit only supplies (C^T C)^{-1} and the rank check.
    let fit = ols(rows, ncol, d, "confounder")?;
    let p = (d.iter().sum::<f64>() / n as f64).clamp(0.5 / n as f64, 1.0 - 0.5 / n as f64);
    let mut mean = DVector::zeros(ncol);
    mean[0] = norm_quantile(p);
    RegressionPrior::new(mean, fit.xtx_inv * n as f64, SIGMA_PRIOR_SHAPE, 1.0)
}

fn moment_prior(values: impl Iterator<Item = f64>) -> NormalInverseGamma {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    NormalInverseGamma {
        mean,
        kappa: NIG_PRIOR_KAPPA,
        shape: NIG_PRIOR_SHAPE,
        scale: if var > 0.0 { var } else { 1.0 },
    }
}

/// Hyperparameters fitted to the observed data.
pub fn gprior_hyperparameters(dataset: &ClusterDataset, design: DesignSpec) -> Result<BaseMeasureHyper> {
    if dataset.n_clusters() == 0 {
        return Err(Error::Empty("dataset has no clusters".to_string()));
    }
    let obs = ObservedDesign::build(dataset, design);
    let inds: Vec<_> = dataset.individuals().map(|(_, _, ind)| ind).collect();
    let y: Vec<f64> = inds.iter().map(|i| i.y).collect();
    let m: Vec<f64> = inds.iter().map(|i| i.m).collect();
    let d: Vec<f64> = inds.iter().map(|i| i.d).collect();
    let y_prior = g_prior(&obs.y_rows, design.y_dim(), &y, "outcome")?;
    let m_prior = g_prior(&obs.m_rows, design.m_dim(), &m, "mediator")?;
    let d_prior = match dataset.d_kind() {
        DKind::Continuous => g_prior(&obs.d_rows, design.d_dim(), &d, "confounder")?,
        DKind::Binary => probit_prior(&obs.d_rows, design.d_dim(), &d)?,
    };
    let x = (0..design.p).map(|c| moment_prior(inds.iter().map(|i| i.x[c]))).collect();
    let v = (0..design.q)
        .map(|c| moment_prior(dataset.clusters().iter().map(|cl| cl.v[c])))
        .collect();
    let mean_n = dataset.n_total() as f64 / dataset.n_clusters() as f64;
    Ok(BaseMeasureHyper {
        design,
        d_kind: dataset.d_kind(),
        y: y_prior,
        m: m_prior,
        d: d_prior,
        x,
        v,
        n: GammaPrior::new(CLUSTER_SIZE_PRIOR_SHAPE, CLUSTER_SIZE_PRIOR_SHAPE / mean_n)?,
    })
}
