//! Frequentist metrics of point and interval estimates over replicates.

use std::fmt;

use crate::error::{Error, Result};
use crate::gcomp::{Estimand, EstimandSummary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimandMetrics {
    pub estimand: Estimand,
    pub bias: f64,
    pub rmse: f64,
    /// Average interval length.
    pub al: f64,
    /// Coverage probability, in `[0, 1]`.
    pub cp: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EstimandMetrics>,
}

impl EvalReport {
    pub fn get(&self, e: Estimand) -> Option<&EstimandMetrics> {
        self.rows.iter().find(|r| r.estimand == e)
    }
}

/// Metrics of `estimands` given per-replicate summaries and truths.
pub fn evaluate(summaries: &[[EstimandSummary; 5]], truths: &[[f64; 5]], estimands: &[Estimand]) -> Result<EvalReport> {
    if summaries.len() != truths.len() {
        return Err(Error::Mismatch(format!(
            "{} replicate summaries but {} truths",
            summaries.len(),
            truths.len()
        )));
    }
    if summaries.is_empty() {
        return Err(Error::Empty("replicate summaries".to_string()));
    }
    let n = summaries.len() as f64;
    let rows = estimands
        .iter()
        .map(|&e| {
            let i = e.index();
            let (mut err, mut sq, mut len, mut cover) = (0.0, 0.0, 0.0, 0usize);
            for (s, t) in summaries.iter().zip(truths) {
                let s = &s[i];
                let d = s.mean - t[i];
                err += d;
                sq += d * d;
                len += s.upper - s.lower;
                cover += usize::from(s.lower <= t[i] && t[i] <= s.upper);
            }
            EstimandMetrics {
                estimand: e,
                bias: err / n,
                rmse: (sq / n).sqrt(),
                al: len / n,
                cp: cover as f64 / n,
                replicates: summaries.len(),
            }
        })
        .collect();
    Ok(EvalReport { rows })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<9}{:>10}{:>10}{:>10}{:>8}{:>6}", "estimand", "Bias", "RMSE", "AL", "CP", "reps")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<9}{:>10.4}{:>10.4}{:>10.4}{:>8.3}{:>6}",
                r.estimand.name(),
                r.bias,
                r.rmse,
                r.al,
                r.cp,
                r.replicates
            )?;
        }
        Ok(())
    }
}
