//! Columnar text format for posterior samples.
//!
//! Header `iteration,block,index,values`; `values` is a space-separated list
//! of shortest round-trip decimals. One `meta` row opens the file with
//! `K L M p q binary`. Per kept iteration the blocks are, in order:
//!
//! | block      | index       | values                                          |
//! |------------|-------------|-------------------------------------------------|
//! | `conc`     | 0           | `alpha_star alpha_theta alpha_phi`              |
//! | `s_star`   | 0           | K fractions                                     |
//! | `v_theta`  | k           | L fractions                                     |
//! | `v_phi`    | k L + l     | M fractions                                     |
//! | `theta`    | l           | `beta_y sigma2_y beta_m sigma2_m beta_d sigma2_d` |
//! | `phi`      | m           | p means then p variances                        |
//! | `eta`      | k           | `lambda`, q means, q variances                  |
//! | `zeta_n`   | 0           | cluster classes                                 |
//! | `zeta_y`   | 0           | outcome classes                                 |
//! | `zeta_x`   | 0           | covariate classes                               |
//! | `latent_z` | 0           | probit latents (binary D only)                  |
//!
//! Weights are rebuilt from the fractions on load. Log-likelihood files use
//! `iteration,values`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::dataset::DKind;
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::gibbs::chain::PosteriorSample;
use crate::gibbs::state::CaEdpState;
use crate::model::types::{
    ClassIndicators, ConcentrationParams, EtaAtom, PhiAtom, RegressionAtom, StickWeights, ThetaAtom,
    TruncationLevels,
};

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn row<W: Write, T: std::fmt::Display>(
    w: &mut W,
    it: usize,
    block: &str,
    index: usize,
    values: impl IntoIterator<Item = T>,
) -> Result<()> {
    writeln!(w, "{it},{block},{index},{}", join(values))?;
    Ok(())
}

pub fn write_posterior<W: Write>(sample: &PosteriorSample, w: &mut W) -> Result<()> {
    let first = sample.states.first().ok_or(Error::Empty("posterior sample".to_string()))?;
    let lv = first.levels();
    let d = sample.design;
    writeln!(w, "iteration,block,index,values")?;
    let binary = usize::from(sample.d_kind == DKind::Binary);
    row(w, 0, "meta", 0, [lv.k, lv.l, lv.m, d.p, d.q, binary])?;
    for (t, s) in sample.states.iter().enumerate() {
        row(w, t, "conc", 0, [s.conc.alpha_star, s.conc.alpha_theta, s.conc.alpha_phi])?;
        row(w, t, "s_star", 0, s.weights.s_star.iter())?;
        for (k, v) in s.weights.v_theta.chunks_exact(lv.l).enumerate() {
            row(w, t, "v_theta", k, v.iter())?;
        }
        for (kl, v) in s.weights.v_phi.chunks_exact(lv.m).enumerate() {
            row(w, t, "v_phi", kl, v.iter())?;
        }
        for (l, a) in s.theta.iter().enumerate() {
            let vals = a
                .y
                .beta
                .iter()
                .chain([&a.y.sigma2])
                .chain(a.m.beta.iter())
                .chain([&a.m.sigma2])
                .chain(a.d.beta.iter())
                .chain([&a.d.sigma2]);
            row(w, t, "theta", l, vals)?;
        }
        for (m, a) in s.phi.iter().enumerate() {
            row(w, t, "phi", m, a.mean.iter().chain(a.var.iter()))?;
        }
        for (k, a) in s.eta.iter().enumerate() {
            row(w, t, "eta", k, [&a.lambda_n].into_iter().chain(a.v_mean.iter()).chain(a.v_var.iter()))?;
        }
        row(w, t, "zeta_n", 0, s.indicators.zeta_n.iter())?;
        row(w, t, "zeta_y", 0, s.indicators.zeta_y.iter())?;
        row(w, t, "zeta_x", 0, s.indicators.zeta_x.iter())?;
        if binary == 1 {
            row(w, t, "latent_z", 0, s.latent_z.iter())?;
        }
    }
    Ok(())
}

pub fn write_loglik<W: Write>(sample: &PosteriorSample, w: &mut W) -> Result<()> {
    writeln!(w, "iteration,values")?;
    for (t, ll) in sample.loglik.iter().enumerate() {
        writeln!(w, "{t},{}", join(ll.iter()))?;
    }
    Ok(())
}

struct Line {
    no: usize,
    iteration: usize,
    block: String,
    index: usize,
    values: Vec<f64>,
}

fn parse_line(no: usize, text: &str) -> Result<Line> {
    let err = |m: &str| Error::Csv {
        location: format!("line {no}"),
        message: m.to_string(),
    };
    let mut parts = text.splitn(4, ',');
    let iteration = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad iteration"))?;
    let block = parts.next().ok_or_else(|| err("missing block"))?.to_string();
    let index = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| err("bad index"))?;
    let values = parts
        .next()
        .unwrap_or("")
        .split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|_| err(&format!("non-numeric value {v:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(Line {
        no,
        iteration,
        block,
        index,
        values,
    })
}

fn expect<'a>(lines: &mut impl Iterator<Item = Result<Line>>, block: &str, index: usize, len: usize) -> Result<Line> {
    let line = lines.next().ok_or(Error::Csv {
        location: "end of file".to_string(),
        message: format!("expected block {block}"),
    })??;
    if line.block != block || line.index != index || line.values.len() != len {
        return Err(Error::Csv {
            location: format!("line {}", line.no),
            message: format!(
                "expected {block}[{index}] with {len} values, got {}[{}] with {}",
                line.block,
                line.index,
                line.values.len()
            ),
        });
    }
    Ok(line)
}

fn to_usize(values: &[f64]) -> Vec<usize> {
    values.iter().map(|v| *v as usize).collect()
}

/// Reads a file produced by [`write_posterior`]. Log-likelihoods are not
/// included; pass them separately via [`read_loglik`]. Concentration priors
/// are restored at their defaults.
pub fn read_posterior<R: BufRead>(r: R, n_clusters: usize, n_total: usize) -> Result<PosteriorSample> {
    let mut raw = r.lines().enumerate();
    let header = raw.next().ok_or(Error::Empty("posterior file".to_string()))?.1?;
    if header.trim() != "iteration,block,index,values" {
        return Err(Error::Csv {
            location: "line 1".to_string(),
            message: "unexpected header".to_string(),
        });
    }
    let mut lines = raw
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|(no, l)| l.map_err(Error::from).and_then(|t| parse_line(no + 1, &t)))
        .peekable();
    let meta = expect(&mut lines, "meta", 0, 6)?;
    let m = to_usize(&meta.values);
    let lv = TruncationLevels::new(m[0], m[1], m[2])?;
    let design = DesignSpec::new(m[3], m[4]);
    let d_kind = if m[5] == 1 { DKind::Binary } else { DKind::Continuous };
    let (p, q) = (design.p, design.q);
    let (yd, md, dd) = (design.y_dim(), design.m_dim(), design.d_dim());
    let mut states = Vec::new();
    while lines.peek().is_some() {
        let conc_line = expect(&mut lines, "conc", 0, 3)?;
        let t = conc_line.iteration;
        let cv = conc_line.values;
        let s_star = expect(&mut lines, "s_star", 0, lv.k)?.values;
        let mut v_theta = Vec::with_capacity(lv.k * lv.l);
        for k in 0..lv.k {
            v_theta.extend(expect(&mut lines, "v_theta", k, lv.l)?.values);
        }
        let mut v_phi = Vec::with_capacity(lv.k * lv.l * lv.m);
        for kl in 0..lv.k * lv.l {
            v_phi.extend(expect(&mut lines, "v_phi", kl, lv.m)?.values);
        }
        let weights = StickWeights::from_fractions(lv, s_star, v_theta, v_phi)?;
        let mut theta = Vec::with_capacity(lv.l);
        for l in 0..lv.l {
            let v = expect(&mut lines, "theta", l, yd + md + dd + 3)?.values;
            let reg = |from: usize, dim: usize| RegressionAtom {
                beta: DVector::from_column_slice(&v[from..from + dim]),
                sigma2: v[from + dim],
            };
            theta.push(ThetaAtom {
                y: reg(0, yd),
                m: reg(yd + 1, md),
                d: reg(yd + md + 2, dd),
            });
        }
        let mut phi = Vec::with_capacity(lv.m);
        for mm in 0..lv.m {
            let v = expect(&mut lines, "phi", mm, 2 * p)?.values;
            phi.push(PhiAtom {
                mean: v[..p].to_vec(),
                var: v[p..].to_vec(),
            });
        }
        let mut eta = Vec::with_capacity(lv.k);
        for k in 0..lv.k {
            let v = expect(&mut lines, "eta", k, 1 + 2 * q)?.values;
            eta.push(EtaAtom {
                lambda_n: v[0],
                v_mean: v[1..1 + q].to_vec(),
                v_var: v[1 + q..].to_vec(),
            });
        }
        let indicators = ClassIndicators {
            zeta_n: to_usize(&expect(&mut lines, "zeta_n", 0, n_clusters)?.values),
            zeta_y: to_usize(&expect(&mut lines, "zeta_y", 0, n_total)?.values),
            zeta_x: to_usize(&expect(&mut lines, "zeta_x", 0, n_total)?.values),
        };
        indicators.check(lv, n_clusters, n_total)?;
        let latent_z = if d_kind == DKind::Binary {
            expect(&mut lines, "latent_z", 0, n_total)?.values
        } else {
            Vec::new()
        };
        if t != states.len() {
            return Err(Error::Csv {
                location: format!("line {}", conc_line.no),
                message: format!("iteration {t} out of order"),
            });
        }
        states.push(CaEdpState {
            weights,
            theta,
            phi,
            eta,
            indicators,
            conc: ConcentrationParams::new(cv[0], cv[1], cv[2])?,
            latent_z,
        });
    }
    Ok(PosteriorSample {
        design,
        d_kind,
        states,
        loglik: Vec::new(),
    })
}

pub fn read_loglik<R: BufRead>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (no, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (_, vals) = line.split_once(',').ok_or(Error::Csv {
            location: format!("line {}", no + 1),
            message: "missing values".to_string(),
        })?;
        let row = vals
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Csv {
                    location: format!("line {}", no + 1),
                    message: format!("non-numeric value {v:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}
