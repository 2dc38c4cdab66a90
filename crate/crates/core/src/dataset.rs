//! Observed cluster-randomized trial data.

use crate::error::{Error, Result};

/// How the post-treatment confounder D is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DKind {
    #[default]
    Continuous,
    /// 0/1 indicator, modelled through a probit latent variable.
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub x: Vec<f64>,
    pub d: f64,
    pub m: f64,
    pub y: f64,
}

/// One cluster. Treatment and cluster covariates are stored once, so every
/// individual shares them by construction. `N_i` is `individuals.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRecord {
    pub id: String,
    pub treated: bool,
    pub v: Vec<f64>,
    pub individuals: Vec<Individual>,
}

impl ClusterRecord {
    pub fn size(&self) -> usize {
        self.individuals.len()
    }

    pub fn arm(&self) -> f64 {
        if self.treated {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDataset {
    p: usize,
    q: usize,
    d_kind: DKind,
    clusters: Vec<ClusterRecord>,
    offsets: Vec<usize>,
}

impl ClusterDataset {
    /// Validates covariate lengths, non-empty clusters, finite values and the
    /// 0/1 coding of a binary D.
    pub fn new(p: usize, q: usize, d_kind: DKind, clusters: Vec<ClusterRecord>) -> Result<Self> {
        for c in &clusters {
            if c.individuals.is_empty() {
                return Err(Error::InvalidDataset(format!("cluster {} is empty", c.id)));
            }
            if c.v.len() != q {
                return Err(Error::InvalidDataset(format!(
                    "cluster {} has {} cluster covariates, expected {q}",
                    c.id,
                    c.v.len()
                )));
            }
            if c.v.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("cluster {} has a non-finite covariate", c.id)));
            }
            for (j, ind) in c.individuals.iter().enumerate() {
                if ind.x.len() != p {
                    return Err(Error::InvalidDataset(format!(
                        "cluster {} individual {j} has {} covariates, expected {p}",
                        c.id,
                        ind.x.len()
                    )));
                }
                let finite = ind.x.iter().all(|x| x.is_finite())
                    && ind.d.is_finite()
                    && ind.m.is_finite()
                    && ind.y.is_finite();
                if !finite {
                    return Err(Error::InvalidDataset(format!(
                        "cluster {} individual {j} has a non-finite value",
                        c.id
                    )));
                }
                if d_kind == DKind::Binary && ind.d != 0.0 && ind.d != 1.0 {
                    return Err(Error::InvalidDataset(format!(
                        "cluster {} individual {j}: binary D must be 0 or 1, got {}",
                        c.id, ind.d
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(clusters.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for c in &clusters {
            acc += c.size();
            offsets.push(acc);
        }
        Ok(ClusterDataset {
            p,
            q,
            d_kind,
            clusters,
            offsets,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d_kind(&self) -> DKind {
        self.d_kind
    }

    pub fn clusters(&self) -> &[ClusterRecord] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Total number of individuals.
    pub fn n_total(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Global index range of cluster `i`'s individuals.
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Iterate `(global index, cluster index, individual)`.
    pub fn individuals(&self) -> impl Iterator<Item = (usize, usize, &Individual)> + '_ {
        self.clusters.iter().enumerate().flat_map(move |(i, c)| {
            let start = self.offsets[i];
            c.individuals.iter().enumerate().map(move |(j, ind)| (start + j, i, ind))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(d: f64) -> Individual {
        Individual {
            x: vec![0.0],
            d,
            m: 0.0,
            y: 0.0,
        }
    }

    #[test]
    fn offsets_follow_cluster_sizes() {
        let clusters = vec![
            ClusterRecord {
                id: "a".into(),
                treated: true,
                v: vec![1.0],
                individuals: vec![ind(0.0), ind(1.0)],
            },
            ClusterRecord {
                id: "b".into(),
                treated: false,
                v: vec![2.0],
                individuals: vec![ind(1.0)],
            },
        ];
        let ds = ClusterDataset::new(1, 1, DKind::Binary, clusters).unwrap();
        assert_eq!(ds.n_total(), 3);
        assert_eq!(ds.range(1), 2..3);
        let idx: Vec<_> = ds.individuals().map(|(g, i, _)| (g, i)).collect();
        assert_eq!(idx, vec![(0, 0), (1, 0), (2, 1)]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let empty = ClusterRecord {
            id: "e".into(),
            treated: false,
            v: vec![],
            individuals: vec![],
        };
        assert!(ClusterDataset::new(1, 0, DKind::Continuous, vec![empty]).is_err());
        let bad_d = ClusterRecord {
            id: "d".into(),
            treated: false,
            v: vec![],
            individuals: vec![ind(0.5)],
        };
        assert!(ClusterDataset::new(1, 0, DKind::Binary, vec![bad_d.clone()]).is_err());
        assert!(ClusterDataset::new(1, 0, DKind::Continuous, vec![bad_d]).is_ok());
    }
}
