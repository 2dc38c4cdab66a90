use nalgebra::{DMatrix, DVector};

use super::chain::{run_chain, sweep, McmcConfig};
use super::serialize::{read_loglik, read_posterior, write_loglik, write_posterior};
use super::state::{CaEdpState, GibbsContext};
use super::updates::*;
use crate::dataset::{ClusterDataset, ClusterRecord, DKind, Individual};
use crate::design::DesignSpec;
use crate::dist::{normalize_log_weights, std_normal, NormalInverseGamma};
use crate::linreg::{RegressionPrior, SuffStats};
use crate::model::types::{BaseMeasureHyper, ConcentrationParams, GammaPrior, StickWeights, TruncationLevels};
use crate::consts::STICK_CLAMP;
use crate::rng::seeded;

fn cluster(id: &str, treated: bool, sizes: usize, y_shift: f64, rng: &mut crate::rng::SimRng) -> ClusterRecord {
    ClusterRecord {
        id: id.to_string(),
        treated,
        v: vec![std_normal(rng)],
        individuals: (0..sizes)
            .map(|_| Individual {
                x: vec![std_normal(rng)],
                d: std_normal(rng),
                m: std_normal(rng),
                y: y_shift + std_normal(rng),
            })
            .collect(),
    }
}

fn small_dataset(seed: u64, sizes: &[usize]) -> ClusterDataset {
    let mut rng = seeded(seed);
    let clusters = sizes
        .iter()
        .enumerate()
        .map(|(i, n)| cluster(&format!("c{i}"), i % 2 == 0, *n, 0.0, &mut rng))
        .collect();
    ClusterDataset::new(1, 1, DKind::Continuous, clusters).unwrap()
}

fn hyper(ds: &ClusterDataset) -> BaseMeasureHyper {
    BaseMeasureHyper::vague(DesignSpec::for_dataset(ds), ds.d_kind(), 1.0, 10.0).unwrap()
}

fn state(ds: &ClusterDataset, h: &BaseMeasureHyper, lv: TruncationLevels, seed: u64) -> CaEdpState {
    let conc = ConcentrationParams::new(1.0, 1.0, 1.0).unwrap();
    CaEdpState::from_prior_fixed_conc(ds, h, lv, conc, &mut seeded(seed))
}

#[test]
fn single_class_levels_force_constant_indicators() {
    let ds = small_dataset(1, &[3, 4, 2]);
    let h = hyper(&ds);
    let lv = TruncationLevels::uniform(1).unwrap();
    let mut s = state(&ds, &h, lv, 2);
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let mut rng = seeded(3);
    for _ in 0..5 {
        sweep(&ctx, &mut s, &mut rng).unwrap();
        assert!(s.indicators.zeta_n.iter().all(|k| *k == 0));
        assert!(s.indicators.zeta_y.iter().all(|l| *l == 0));
        assert!(s.indicators.zeta_x.iter().all(|m| *m == 0));
    }
}

#[test]
fn cluster_probabilities_normalize() {
    let ds = small_dataset(4, &[3, 5]);
    let h = hyper(&ds);
    let s = state(&ds, &h, TruncationLevels::new(4, 3, 2).unwrap(), 5);
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let cache = LikelihoodCache::compute(&ctx, &s);
    for i in 0..2 {
        let mut lw = cluster_class_log_weights(&ctx, &s, &cache, i);
        normalize_log_weights(&mut lw).unwrap();
        assert!((lw.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn poisson_separation_of_cluster_classes() {
    // Two clusters of size 5 and 500, classes with rates 5 and 500 and
    // otherwise identical atoms: the log-likelihood ratio is
    // 5 ln(5/500) + 495 and 500 ln(500/5) - 495 respectively.
    let mut rng = seeded(6);
    let clusters = vec![cluster("small", true, 5, 0.0, &mut rng), cluster("big", false, 500, 0.0, &mut rng)];
    let ds = ClusterDataset::new(1, 1, DKind::Continuous, clusters).unwrap();
    let h = hyper(&ds);
    let lv = TruncationLevels::new(2, 1, 1).unwrap();
    let mut s = state(&ds, &h, lv, 7);
    s.weights = StickWeights::from_fractions(lv, vec![0.5, 1.0], vec![1.0; 2], vec![1.0; 2]).unwrap();
    s.eta[0].lambda_n = 5.0;
    s.eta[1].lambda_n = 500.0;
    s.eta[1].v_mean = s.eta[0].v_mean.clone();
    s.eta[1].v_var = s.eta[0].v_var.clone();
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let cache = LikelihoodCache::compute(&ctx, &s);
    let mut lw0 = cluster_class_log_weights(&ctx, &s, &cache, 0);
    let mut lw1 = cluster_class_log_weights(&ctx, &s, &cache, 1);
    let oracle0 = 5.0 * (5.0f64 / 500.0).ln() + 495.0;
    assert!(((lw0[0] - lw0[1]) - oracle0).abs() < 1e-8);
    normalize_log_weights(&mut lw0).unwrap();
    normalize_log_weights(&mut lw1).unwrap();
    assert!(lw0[0] > 0.99 && lw1[1] > 0.99);
}

#[test]
fn outcome_separation_of_y_classes() {
    let mut rng = seeded(8);
    let clusters = vec![cluster("lo", true, 20, -10.0, &mut rng), cluster("hi", false, 20, 10.0, &mut rng)];
    let ds = ClusterDataset::new(1, 1, DKind::Continuous, clusters).unwrap();
    let h = hyper(&ds);
    let lv = TruncationLevels::new(1, 2, 1).unwrap();
    let mut s = state(&ds, &h, lv, 9);
    s.weights = StickWeights::from_fractions(lv, vec![1.0], vec![0.5, 1.0], vec![1.0; 2]).unwrap();
    let template = s.theta[0].clone();
    for (l, shift) in [(0usize, -10.0), (1, 10.0)] {
        let mut a = template.clone();
        a.y.beta = DVector::zeros(a.y.beta.len());
        a.y.beta[0] = shift;
        a.y.sigma2 = 1.0;
        s.theta[l] = a;
    }
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let cache = LikelihoodCache::compute(&ctx, &s);
    let mut r = seeded(10);
    update_y_indicators(&ctx, &mut s, &cache, &mut r).unwrap();
    for g in 0..20 {
        assert_eq!(s.indicators.zeta_y[g], 0);
        assert_eq!(s.indicators.zeta_y[20 + g], 1);
    }
}

#[test]
fn stick_counts_give_conjugate_beta() {
    // 3 clusters at k = 0 and 7 above: s_0 ~ Beta(4, alpha + 7) = Beta(4, 9) at alpha = 2.
    let n = 20_000;
    let mut rng = seeded(11);
    let ds = small_dataset(12, &[1; 10]);
    let h = hyper(&ds);
    let lv = TruncationLevels::new(3, 1, 1).unwrap();
    let mut s = state(&ds, &h, lv, 13);
    s.conc.alpha_star = 2.0;
    let counts = ClassCounts {
        n_k: vec![3, 4, 3],
        n_kl: vec![0; 3],
        n_klm: vec![0; 3],
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        update_stick_weights(&mut s, &counts, &mut rng);
        sum += s.weights.s_star[0];
        sum_sq += s.weights.s_star[0].powi(2);
        s.weights.check().unwrap();
        assert_eq!(s.weights.s_star[2], 1.0);
    }
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    let (a, b) = (4.0, 9.0);
    let t_mean = a / (a + b);
    let t_var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    assert!((mean - t_mean).abs() < 4.0 * (t_var / n as f64).sqrt(), "{mean}");
    assert!((var - t_var).abs() < 0.1 * t_var);
}

#[test]
fn concentration_posterior_by_substitution() {
    let inf = f64::NEG_INFINITY;
    let post = concentration_posterior(GammaPrior::new(1.0, 1.0).unwrap(), &[0.5f64.ln(), inf], 2);
    assert_eq!(post.shape, 2.0);
    assert!((post.rate - (1.0 + 2f64.ln())).abs() < 1e-15);
    let k1 = concentration_posterior(GammaPrior::new(1.5, 2.5).unwrap(), &[inf], 1);
    assert_eq!((k1.shape, k1.rate), (1.5, 2.5));
    // A fraction at exactly 1 before the end is clamped; finite logs below
    // the clamp are kept exactly.
    let c = concentration_posterior(GammaPrior::default(), &[inf, 0.7f64.ln(), inf], 3);
    assert!((c.rate - (1.0 - STICK_CLAMP.ln() - 0.7f64.ln())).abs() < 1e-12);
    let deep = concentration_posterior(GammaPrior::default(), &[-100.0, inf], 2);
    assert_eq!(deep.rate, 101.0);
}

#[test]
fn eta_update_matches_poisson_gamma() {
    // a = b = 1, one cluster of size 5 -> Gamma(6, 2), mean 3, var 1.5.
    let ds = small_dataset(14, &[5]);
    let mut h = hyper(&ds);
    h.n = GammaPrior::new(1.0, 1.0).unwrap();
    let lv = TruncationLevels::new(2, 1, 1).unwrap();
    let mut s = state(&ds, &h, lv, 15);
    s.indicators.zeta_n = vec![0];
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let mut rng = seeded(16);
    let n = 40_000;
    let (mut m0, mut m1, mut sq0) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        update_eta_atoms(&ctx, &mut s, &mut rng);
        m0 += s.eta[0].lambda_n;
        sq0 += s.eta[0].lambda_n.powi(2);
        m1 += s.eta[1].lambda_n;
    }
    let (m0, m1) = (m0 / n as f64, m1 / n as f64);
    assert!((m0 - 3.0).abs() < 4.0 * (1.5 / n as f64).sqrt(), "{m0}");
    assert!((sq0 / n as f64 - m0 * m0 - 1.5).abs() < 0.06);
    // Empty class keeps the Gamma(1, 1) prior.
    assert!((m1 - 1.0).abs() < 4.0 * (1.0 / n as f64).sqrt(), "{m1}");
}

#[test]
fn empty_theta_class_draws_from_base_measure() {
    let ds = small_dataset(17, &[3]);
    let h = hyper(&ds);
    let lv = TruncationLevels::new(1, 2, 1).unwrap();
    let mut s = state(&ds, &h, lv, 18);
    s.indicators.zeta_y = vec![0; 3];
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let mut rng = seeded(19);
    let n = 20_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        update_theta_atoms(&ctx, &mut s, &mut rng).unwrap();
        let b = s.theta[1].y.beta[2];
        sum += b;
        sum_sq += b * b;
    }
    let mean = sum / n as f64;
    assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    assert!((sum_sq / n as f64 - 1.0).abs() < 0.05);
}

#[test]
fn scalar_theta_posterior_textbook() {
    let prior = RegressionPrior::new(DVector::from_element(1, 0.0), DMatrix::identity(1, 1), 2.0, 1.0).unwrap();
    let stats = SuffStats::from_rows(&[1.0], 1, &[2.0]);
    let (mean, cov) = prior.beta_posterior(&stats, 1.0).unwrap();
    assert!((mean[0] - 1.0).abs() < 1e-15 && (cov[(0, 0)] - 0.5).abs() < 1e-15);
}

#[test]
fn phi_update_single_observation_and_empty_class() {
    let ds = small_dataset(20, &[1]);
    let mut h = hyper(&ds);
    h.x = vec![NormalInverseGamma {
        mean: 0.0,
        kappa: 1.0,
        shape: 3.0,
        scale: 2.0,
    }];
    let lv = TruncationLevels::new(1, 1, 2).unwrap();
    let mut s = state(&ds, &h, lv, 21);
    s.indicators.zeta_x = vec![0];
    let x = ds.clusters()[0].individuals[0].x[0];
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    let mut rng = seeded(22);
    let n = 40_000;
    let (mut m0, mut m1) = (0.0, 0.0);
    for _ in 0..n {
        update_phi_atoms(&ctx, &mut s, &mut rng);
        m0 += s.phi[0].mean[0];
        m1 += s.phi[1].mean[0];
    }
    // Posterior mean of mu is (kappa0 mu0 + x) / (kappa0 + 1) = x / 2.
    // Marginal variances: (2 + x^2/4) / (2.5 * 2) after the update, 2 / 2 for the prior.
    let sd_post = ((2.0 + x * x / 4.0) / 5.0f64).sqrt();
    assert!((m0 / n as f64 - x / 2.0).abs() < 4.0 * sd_post / (n as f64).sqrt());
    assert!((m1 / n as f64).abs() < 4.0 / (n as f64).sqrt());
}

#[test]
fn probit_latent_respects_signs_and_matches_probit() {
    // P(D = 1) = Phi(eta) at linear predictor eta = 0.3.
    let mut rng = seeded(23);
    let n = 100_000;
    let hits = (0..n).filter(|_| 0.3 + std_normal(&mut rng) >= 0.0).count();
    let p = crate::dist::norm_cdf(0.3);
    assert!((hits as f64 / n as f64 - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());

    let clusters = vec![ClusterRecord {
        id: "b".into(),
        treated: true,
        v: vec![0.0],
        individuals: (0..30)
            .map(|j| Individual {
                x: vec![0.1 * j as f64],
                d: (j % 2) as f64,
                m: 0.0,
                y: 0.0,
            })
            .collect(),
    }];
    let ds = ClusterDataset::new(1, 1, DKind::Binary, clusters).unwrap();
    let h = hyper(&ds);
    let mut s = state(&ds, &h, TruncationLevels::uniform(2).unwrap(), 24);
    let ctx = GibbsContext::new(&ds, &h).unwrap();
    for _ in 0..50 {
        update_binary_d_latent(&ctx, &mut s, &mut rng);
        for (g, _, ind) in ds.individuals() {
            assert_eq!(s.latent_z[g] >= 0.0, ind.d == 1.0);
        }
        update_theta_atoms(&ctx, &mut s, &mut rng).unwrap();
        assert!(s.theta.iter().all(|t| t.d.sigma2 == 1.0));
    }
}

#[test]
fn chain_is_deterministic_and_loglik_finite() {
    let ds = small_dataset(25, &[4, 3, 5, 2, 6]);
    let h = hyper(&ds);
    let cfg = McmcConfig {
        burn_in: 20,
        keep: 10,
        thin: 2,
        seed: 99,
        truncation: TruncationLevels::new(3, 3, 2).unwrap(),
        ..McmcConfig::default()
    };
    let a = run_chain(&ds, &cfg, &h).unwrap();
    let b = run_chain(&ds, &cfg, &h).unwrap();
    assert_eq!(a.len(), 10);
    assert_eq!(a.states, b.states);
    assert_eq!(a.loglik, b.loglik);
    assert!(a.loglik.iter().flatten().all(|v| v.is_finite()));
    for st in &a.states {
        st.check(&ds, DesignSpec::for_dataset(&ds)).unwrap();
    }
}

#[test]
fn posterior_round_trips_through_text() {
    let ds = small_dataset(26, &[4, 3, 5]);
    let h = hyper(&ds);
    let cfg = McmcConfig {
        burn_in: 5,
        keep: 3,
        seed: 7,
        truncation: TruncationLevels::new(2, 3, 2).unwrap(),
        ..McmcConfig::default()
    };
    let a = run_chain(&ds, &cfg, &h).unwrap();
    let mut buf = Vec::new();
    write_posterior(&a, &mut buf).unwrap();
    let back = read_posterior(&buf[..], ds.n_clusters(), ds.n_total()).unwrap();
    assert_eq!(back.states.len(), 3);
    for (x, y) in a.states.iter().zip(&back.states) {
        assert_eq!(x.theta, y.theta);
        assert_eq!(x.phi, y.phi);
        assert_eq!(x.eta, y.eta);
        assert_eq!(x.indicators, y.indicators);
        assert_eq!(x.weights.s_star, y.weights.s_star);
        assert_eq!(x.weights.w_phi, y.weights.w_phi);
        assert_eq!(x.conc.alpha_phi, y.conc.alpha_phi);
    }
    let mut lbuf = Vec::new();
    write_loglik(&a, &mut lbuf).unwrap();
    assert_eq!(read_loglik(&lbuf[..]).unwrap(), a.loglik);
    assert!(read_posterior(&b"bad header\n"[..], 3, 12).is_err());
}

#[test]
fn simulated_data_has_requested_shape() {
    let ds = small_dataset(27, &[2]);
    let h = hyper(&ds);
    let s = state(&ds, &h, TruncationLevels::uniform(3).unwrap(), 28);
    let sim = s
        .simulate_dataset(DesignSpec::new(1, 1), DKind::Binary, 6, &mut seeded(29))
        .unwrap();
    assert_eq!(sim.n_clusters(), 6);
    assert!(sim.clusters().iter().all(|c| c.size() >= 1));
    assert!(sim.individuals().all(|(_, _, i)| i.d == 0.0 || i.d == 1.0));
}
