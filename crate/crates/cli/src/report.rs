//! Text tables and CSV renderings of estimand output.
//!
//! Tables use fixed decimals; CSV files use shortest round-trip decimals.

use std::fmt::Write as _;

use caedp::gcomp::{Estimand, EstimandDraw, EstimandSummary, SensitivityRun};
use caedp::simbench::ReplicateResult;

/// Posterior mean, 95% credible interval and posterior probability of a
/// positive effect, one row per estimand.
pub fn summary_table(summary: &[EstimandSummary; 5]) -> String {
    let mut s = format!("{:<9}{:>10}  {:>22}{:>8}\n", "Estimand", "Est", "95% CI", "PP");
    for r in summary {
        let ci = format!("({:.4}, {:.4})", r.lower, r.upper);
        let _ = writeln!(s, "{:<9}{:>10.4}  {:>22}{:>8.3}", r.estimand.name(), r.mean, ci, r.prob_positive);
    }
    s
}

fn draws_header(prefix: &str) -> String {
    let names: Vec<&str> = Estimand::ALL.iter().map(|e| e.name()).collect();
    format!("{prefix}draw,{},gamma1,gamma0,failed_clusters\n", names.join(","))
}

fn draw_row(s: &mut String, prefix: &str, t: usize, d: &EstimandDraw) {
    let _ = write!(s, "{prefix}{t}");
    for v in d.values {
        let _ = write!(s, ",{v}");
    }
    let _ = writeln!(s, ",{},{},{}", d.gamma1, d.gamma0, d.failed_clusters);
}

/// One row per retained draw.
pub fn draws_csv(draws: &[EstimandDraw]) -> String {
    let mut s = draws_header("");
    for (t, d) in draws.iter().enumerate() {
        draw_row(&mut s, "", t, d);
    }
    s
}

pub fn sensitivity_draws_csv(runs: &[SensitivityRun]) -> String {
    let mut s = draws_header("mode,");
    for r in runs {
        let label = format!("{},", r.mode.label());
        for (t, d) in r.draws.iter().enumerate() {
            draw_row(&mut s, &label, t, d);
        }
    }
    s
}

/// Summaries per mode, then each mode's shift in posterior mean against the
/// first mode with the Monte-Carlo SE of that shift across draws.
pub fn sensitivity_table(runs: &[SensitivityRun]) -> String {
    let mut s = String::new();
    for r in runs {
        let _ = writeln!(s, "[{}]", r.mode.label());
        s.push_str(&summary_table(&r.summary));
        s.push('\n');
    }
    if let Some(base) = runs.first() {
        let _ = writeln!(s, "{:<12}{:<9}{:>12}{:>12}", "mode", "Estimand", "shift", "MC SE");
        for r in &runs[1..] {
            for e in Estimand::ALL {
                let diff: Vec<f64> = r.draws.iter().zip(&base.draws).map(|(a, b)| a.get(e) - b.get(e)).collect();
                let (mean, se) = mean_se(&diff);
                let _ = writeln!(s, "{:<12}{:<9}{:>12.4}{:>12.4}", r.mode.label(), e.name(), mean, se);
            }
        }
    }
    s
}

/// Mean and its standard error; the SE is 0 for fewer than two values.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One row per replicate and estimand.
pub fn replicates_csv(results: &[ReplicateResult]) -> String {
    let mut s = "replicate,estimand,mean,lower,upper,pp,lpml\n".to_string();
    for r in results {
        for e in &r.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.index,
                e.estimand.name(),
                e.mean,
                e.lower,
                e.upper,
                e.prob_positive,
                r.lpml
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_layout() {
        let summary = std::array::from_fn(|i| EstimandSummary {
            estimand: Estimand::ALL[i],
            mean: i as f64,
            lower: -1.0,
            upper: 2.5,
            prob_positive: 0.5,
        });
        let t = summary_table(&summary);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].contains("Est") && lines[0].contains("95% CI") && lines[0].contains("PP"));
        assert!(lines[1].starts_with("TE") && lines[1].contains("(-1.0000, 2.5000)"));
    }

    #[test]
    fn mean_se_hand_values() {
        assert_eq!(mean_se(&[1.0, 3.0]), (2.0, 1.0));
        assert_eq!(mean_se(&[4.0]), (4.0, 0.0));
    }
}
