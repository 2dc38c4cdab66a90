//! Scenario presets and the data-generating process.
//!
//! Mediator noise for a cluster is `[(D_j(1), D_j(0), M_j(1), M_j(0))]_j`
//! with covariance `sigma^2 (I (x) (R - S) + J (x) S)`: a shared draw from
//! `N(0, S)` plus independent per-unit draws from `N(0, R - S)`.

use nalgebra::{DMatrix, Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use rand::Rng;
use rand_distr::{Distribution, StudentT};

use crate::dataset::{ClusterDataset, ClusterRecord, DKind, Individual};
use crate::dist::{categorical, poisson_positive, std_normal};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5,
        ScenarioId::S6,
        ScenarioId::S7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
            ScenarioId::S4 => "S4",
            ScenarioId::S5 => "S5",
            ScenarioId::S6 => "S6",
            ScenarioId::S7 => "S7",
        }
    }

    pub fn parse(s: &str) -> Result<ScenarioId> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeLaw {
    /// Discrete uniform on `lo..=hi`.
    Uniform { lo: usize, hi: usize },
    /// `Pois(lambda_a)` with probability `p`, else `Pois(lambda_b)`; zero is redrawn.
    PoissonMixture { p: f64, lambda_a: f64, lambda_b: f64 },
}

impl SizeLaw {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            SizeLaw::Uniform { lo, hi } => rng.random_range(lo..=hi),
            SizeLaw::PoissonMixture { p, lambda_a, lambda_b } => {
                let lambda = if rng.random::<f64>() < p { lambda_a } else { lambda_b };
                poisson_positive(rng, lambda) as usize
            }
        }
    }
}

/// Equicorrelated trivariate normal with unit variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateComponent {
    pub mean: [f64; 3],
    pub corr: f64,
}

impl CovariateComponent {
    fn chol(&self) -> Matrix3<f64> {
        let c = self.corr;
        let m = Matrix3::new(1.0, c, c, c, 1.0, c, c, c, 1.0);
        m.cholesky().expect("covariate correlation is positive definite").l()
    }
}

/// Per-cluster mixture over core covariate laws, plus i.i.d. `N(0,1)` noise
/// covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateLaw {
    pub components: Vec<(f64, CovariateComponent)>,
    pub noise: usize,
}

impl CovariateLaw {
    pub fn p(&self) -> usize {
        3 + self.noise
    }
}

/// Mediator noise constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediatorCorr {
    pub sigma2: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub rho0: f64,
    pub rho1: f64,
}

impl Default for MediatorCorr {
    fn default() -> Self {
        MediatorCorr {
            sigma2: 1.0,
            alpha0: 0.05,
            alpha1: 0.03,
            alpha2: 0.05,
            rho0: 0.03,
            rho1: 0.0,
        }
    }
}

impl MediatorCorr {
    /// Within-unit correlation of `(D(1), D(0), M(1), M(0))`.
    pub fn r(&self) -> Matrix4<f64> {
        let (a0, a1, a2) = (self.alpha0, self.alpha1, self.alpha2);
        Matrix4::new(1.0, a1, a0, a2, a1, 1.0, a2, a0, a0, a2, 1.0, a1, a2, a0, a1, 1.0)
    }

    /// Between-unit correlation within a cluster.
    pub fn s(&self) -> Matrix4<f64> {
        let (r0, r1) = (self.rho0, self.rho1);
        Matrix4::new(r0, 0.0, r1, 0.0, 0.0, r0, 0.0, r1, r1, 0.0, r0, 0.0, 0.0, r1, 0.0, r0)
    }

    /// `sigma^2 [[R, S], [S, R]]` for a pair of units.
    pub fn pair_covariance(&self) -> DMatrix<f64> {
        let (r, s) = (self.r() * self.sigma2, self.s() * self.sigma2);
        let mut m = DMatrix::zeros(8, 8);
        m.view_mut((0, 0), (4, 4)).copy_from(&r);
        m.view_mut((4, 4), (4, 4)).copy_from(&r);
        m.view_mut((0, 4), (4, 4)).copy_from(&s);
        m.view_mut((4, 0), (4, 4)).copy_from(&s);
        m
    }

    /// Lower Cholesky factors of `sigma^2 S` and `sigma^2 (R - S)`. The shared
    /// factor is `None` when `S = 0`.
    fn factors(&self) -> Result<(Option<Matrix4<f64>>, Matrix4<f64>)> {
        let s = self.s() * self.sigma2;
        let unit = (self.r() - self.s()) * self.sigma2;
        let unit_l = unit
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("R - S is not positive definite".to_string()))?
            .l();
        if s.iter().all(|v| *v == 0.0) {
            return Ok((None, unit_l));
        }
        let eig = SymmetricEigen::new(s);
        if eig.eigenvalues.min() < 0.0 {
            return Err(Error::NotPositiveDefinite("S is not positive semidefinite".to_string()));
        }
        // Symmetric square root tolerates a singular S.
        let root = eig.eigenvectors * Matrix4::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
        Ok((Some(root), unit_l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeFamily {
    /// Cluster-level latent group with Student-t mixtures (`nu = 1.5`).
    TMixture,
    /// Gaussian linear outcome.
    Linear,
}

/// Degrees of freedom of the t components.
pub const T_DOF: f64 = 1.5;

/// Latent outcome group probabilities.
pub const GROUP_WEIGHTS: [f64; 3] = [0.2, 0.3, 0.5];

/// Per group: `(weight, component index into theta_1..theta_8)`.
pub const GROUP_COMPONENTS: [&[(f64, usize)]; 3] = [
    &[(0.5, 0), (0.5, 1)],
    &[(0.5, 2), (0.25, 3), (0.25, 4)],
    &[(0.5, 5), (0.25, 6), (0.25, 7)],
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub n_clusters: usize,
    pub size: SizeLaw,
    pub covariates: CovariateLaw,
    pub mediator: MediatorCorr,
    pub outcome: OutcomeFamily,
    /// Multiplies every treatment term in the confounder, mediator and
    /// outcome means; 0 gives the null model.
    pub treatment_scale: f64,
    /// Multiplies the confounder terms of the outcome mean.
    pub d_outcome_scale: f64,
}

impl ScenarioSpec {
    pub fn preset(id: ScenarioId) -> ScenarioSpec {
        let base = CovariateComponent {
            mean: [0.5, 0.0, -0.5],
            corr: 0.2,
        };
        let mut spec = ScenarioSpec {
            id,
            n_clusters: 40,
            size: SizeLaw::Uniform { lo: 20, hi: 40 },
            covariates: CovariateLaw {
                components: vec![(1.0, base)],
                noise: 0,
            },
            mediator: MediatorCorr::default(),
            outcome: OutcomeFamily::TMixture,
            treatment_scale: 1.0,
            d_outcome_scale: 1.0,
        };
        match id {
            ScenarioId::S1 => {}
            ScenarioId::S2 => {
                spec.size = SizeLaw::PoissonMixture {
                    p: 0.8,
                    lambda_a: 15.0,
                    lambda_b: 30.0,
                };
                spec.covariates.components = vec![
                    (
                        0.8,
                        CovariateComponent {
                            mean: [-1.0, -1.5, -0.5],
                            corr: 0.2,
                        },
                    ),
                    (
                        0.2,
                        CovariateComponent {
                            mean: [1.5, 1.0, 0.5],
                            corr: 0.4,
                        },
                    ),
                ];
            }
            ScenarioId::S3 => spec.covariates.noise = 5,
            ScenarioId::S4 => spec.covariates.noise = 12,
            ScenarioId::S5 => spec.n_clusters = 20,
            ScenarioId::S6 => spec.n_clusters = 80,
            ScenarioId::S7 => spec.outcome = OutcomeFamily::Linear,
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::InvalidConfig("scenario needs at least one cluster".to_string()));
        }
        if let SizeLaw::Uniform { lo, hi } = self.size {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidConfig(format!("bad cluster-size range {lo}..={hi}")));
            }
        }
        let total: f64 = self.covariates.components.iter().map(|c| c.0).sum();
        if self.covariates.components.is_empty() || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("covariate mixture weights must sum to 1".to_string()));
        }
        self.mediator.factors().map(|_| ())
    }

    /// `theta_D(a)`; `theta_M(a) = -theta_D(a)`.
    pub fn theta_d(&self, a: f64, n: f64, v: f64, x: &[f64]) -> f64 {
        let s = self.treatment_scale;
        1.5 * (-2.0 + 2.0 * s * a + (0.5 + 0.5 * s * a) * n / 50.0 + 0.5 * x[0] - 0.5 * x[1] + x[1] + 0.5 * v)
    }

    /// `theta_1..theta_4` of the t-mixture outcome.
    #[allow(clippy::too_many_arguments)]
    pub fn t_locations(&self, a: f64, n: f64, v: f64, x: &[f64], d: f64, d_bar: f64, m: f64, m_bar: f64) -> [f64; 4] {
        let (s, k) = (self.treatment_scale, self.d_outcome_scale);
        let quad = 0.1 * (x[0] * x[0] + x[1] * x[1] + x[0] * x[1]);
        let core = |c: f64, xa: f64| {
            1.0 + s * a + (c + c * s * a) * n / 50.0 + k * (c * d_bar + d) - c * m_bar - m + s * xa * a * (x[0] - x[1]) + quad
        };
        let (c1, c3) = (core(0.5, 0.3), core(0.3, 0.1));
        let (t1, t3) = (0.5 * x[2] + 0.5 * v, 0.3 * x[2] + 0.3 * v);
        [c1 + t1, -c1 + t1, c3 + t3, -c3 + t3]
    }

    /// All eight t locations; `theta_5..theta_8` rescale `theta_1..theta_4`.
    pub fn t_locations_all(t: [f64; 4]) -> [f64; 8] {
        [t[0], t[1], t[2], t[3], -0.5 * t[0], -t[1], -1.5 * t[2], -2.0 * t[3]]
    }

    /// Outcome mean given the latent group, or averaged over groups when
    /// `group` is `None`.
    #[allow(clippy::too_many_arguments)]
    pub fn outcome_mean(
        &self,
        group: Option<usize>,
        a: f64,
        n: f64,
        v: f64,
        x: &[f64],
        d: f64,
        d_bar: f64,
        m: f64,
        m_bar: f64,
    ) -> f64 {
        match self.outcome {
            OutcomeFamily::Linear => {
                1.0 + self.treatment_scale * a + self.d_outcome_scale * (0.5 * d_bar + 0.5 * d) - 0.5 * m_bar - 0.5 * m
                    + 0.3 * x[0]
                    - 0.3 * x[1]
                    + 0.3 * x[2]
                    + 0.3 * n
            }
            OutcomeFamily::TMixture => {
                let th = Self::t_locations_all(self.t_locations(a, n, v, x, d, d_bar, m, m_bar));
                let group_mean = |g: usize| GROUP_COMPONENTS[g].iter().map(|(w, c)| w * th[*c]).sum::<f64>();
                match group {
                    Some(g) => group_mean(g),
                    None => (0..3).map(|g| GROUP_WEIGHTS[g] * group_mean(g)).sum(),
                }
            }
        }
    }
}

/// Cluster-level draws shared by the dataset generator and the truth oracle:
/// size, V, covariates and all four potential mediators per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCluster {
    pub n: usize,
    pub v: f64,
    pub x: Vec<Vec<f64>>,
    /// `[D(1), D(0), M(1), M(0)]` per unit.
    pub mediators: Vec<[f64; 4]>,
}

impl PotentialCluster {
    /// Values of world `a` for `D` (`which = 0`) or `M` (`which = 1`).
    pub fn world(&self, which: usize, a: u8) -> Vec<f64> {
        let idx = 2 * which + usize::from(a == 0);
        self.mediators.iter().map(|m| m[idx]).collect()
    }
}

pub(crate) struct Sampler {
    shared: Option<Matrix4<f64>>,
    unit: Matrix4<f64>,
    chols: Vec<Matrix3<f64>>,
    weights: Vec<f64>,
    t: StudentT<f64>,
}

impl Sampler {
    pub(crate) fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let (shared, unit) = spec.mediator.factors()?;
        Ok(Sampler {
            shared,
            unit,
            chols: spec.covariates.components.iter().map(|c| c.1.chol()).collect(),
            weights: spec.covariates.components.iter().map(|c| c.0).collect(),
            t: StudentT::new(T_DOF).expect("positive degrees of freedom"),
        })
    }

    fn normal4<R: Rng + ?Sized>(rng: &mut R) -> Vector4<f64> {
        Vector4::from_fn(|_, _| std_normal(rng))
    }

    pub(crate) fn cluster<R: Rng + ?Sized>(&self, spec: &ScenarioSpec, rng: &mut R) -> PotentialCluster {
        let n = spec.size.draw(rng);
        let v = 3.0 * n as f64 / 50.0 + std_normal(rng);
        let comp = categorical(rng, &self.weights);
        let (mean, chol) = (spec.covariates.components[comp].1.mean, &self.chols[comp]);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z = Vector3::from_fn(|_, _| std_normal(rng));
                let core = chol * z + Vector3::from(mean);
                core.iter().cloned().chain((0..spec.covariates.noise).map(|_| std_normal(rng))).collect()
            })
            .collect();
        let shared = self.shared.map(|l| l * Self::normal4(rng)).unwrap_or_else(Vector4::zeros);
        let size = n as f64;
        let mediators = x
            .iter()
            .map(|xj| {
                let e = shared + self.unit * Self::normal4(rng);
                let (t1, t0) = (spec.theta_d(1.0, size, v, xj), spec.theta_d(0.0, size, v, xj));
                [t1 + e[0], t0 + e[1], -t1 + e[2], -t0 + e[3]]
            })
            .collect();
        PotentialCluster { n, v, x, mediators }
    }

    fn student_t<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.t.sample(rng)
    }
}

/// Draws one dataset: `A ~ Bern(1/2)` per cluster, the observed world of the
/// potential mediators, then outcomes with full cluster means of D and M.
pub fn generate_dataset<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<ClusterDataset> {
    let sampler = Sampler::new(spec)?;
    let clusters = (0..spec.n_clusters)
        .map(|i| {
            let pc = sampler.cluster(spec, rng);
            let treated = rng.random::<f64>() < 0.5;
            let a = if treated { 1 } else { 0 };
            let (d, m) = (pc.world(0, a), pc.world(1, a));
            let size = pc.n as f64;
            let (d_bar, m_bar) = (d.iter().sum::<f64>() / size, m.iter().sum::<f64>() / size);
            let group = categorical(rng, &GROUP_WEIGHTS);
            let individuals = (0..pc.n)
                .map(|j| {
                    let y = match spec.outcome {
                        OutcomeFamily::Linear => {
                            spec.outcome_mean(None, a as f64, size, pc.v, &pc.x[j], d[j], d_bar, m[j], m_bar)
                                + std_normal(rng)
                        }
                        OutcomeFamily::TMixture => {
                            let th = ScenarioSpec::t_locations_all(spec.t_locations(
                                a as f64, size, pc.v, &pc.x[j], d[j], d_bar, m[j], m_bar,
                            ));
                            let comps = GROUP_COMPONENTS[group];
                            let w: Vec<f64> = comps.iter().map(|c| c.0).collect();
                            let c = comps[categorical(rng, &w)].1;
                            th[c] + sampler.student_t(rng)
                        }
                    };
                    Individual {
                        x: pc.x[j].clone(),
                        d: d[j],
                        m: m[j],
                        y,
                    }
                })
                .collect();
            ClusterRecord {
                id: format!("c{i}"),
                treated,
                v: vec![pc.v],
                individuals,
            }
        })
        .collect();
    ClusterDataset::new(spec.covariates.p(), 1, DKind::Continuous, clusters)
}
