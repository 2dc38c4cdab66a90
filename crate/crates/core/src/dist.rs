//! Scalar distributions and samplers shared by the sampler, the copula layer
//! and the simulation harness.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Poisson, StandardNormal};
use statrs::function::erf::erfc_inv;
use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile. Returns +-inf at 0 and 1.
///
/// The `erfc_inv` starting value is polished with one Halley step.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    // Work in the tail nearest to p for relative accuracy.
    let (err, dens) = if z < 0.0 {
        (norm_cdf(z) - p, norm_pdf(z))
    } else {
        ((1.0 - p) - norm_cdf(-z), norm_pdf(z))
    };
    if dens <= 0.0 {
        return z;
    }
    let t = err / dens;
    z - t / (1.0 + 0.5 * z * t)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Log density of `N(mean, var)` at `x`.
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (r * r / var) - 0.5 * var.ln() - LN_SQRT_2PI
}

/// `ln Phi(x)`, accurate into the lower tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return norm_cdf(x).ln();
    }
    // Asymptotic Mills-ratio expansion.
    let x2 = x * x;
    -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
}

pub fn ln_poisson_pmf(n: u64, lambda: f64) -> f64 {
    let n = n as f64;
    n * lambda.ln() - lambda - ln_gamma(n + 1.0)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Gamma draw in shape/rate parameterization.
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive and finite")
        .sample(rng)
}

/// Inverse-gamma draw, `1 / Gamma(shape, rate = scale)`.
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

/// Log of a `Gamma(shape, 1)` draw. Small shapes use `G(a) = G(a + 1) U^(1/a)`
/// in log space, which cannot underflow.
pub fn ln_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        return gamma(rng, shape, 1.0).ln();
    }
    let u = 1.0 - rng.random::<f64>();
    gamma(rng, shape + 1.0, 1.0).ln() + u.ln() / shape
}

/// `v ~ Beta(a, b)` together with `ln(1 - v)`, computed from log-gamma draws
/// so it stays finite and exact when `v` rounds to 1.
pub fn beta_with_ln_complement<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> (f64, f64) {
    let (la, lb) = (ln_gamma_draw(rng, a), ln_gamma_draw(rng, b));
    let hi = la.max(lb);
    let lse = hi + ((la - hi).exp() + (lb - hi).exp()).ln();
    ((la - lse).exp(), lb - lse)
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b)
        .expect("beta parameters must be positive and finite")
        .sample(rng)
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(lambda)
        .expect("poisson rate must be positive and finite")
        .sample(rng);
    x as u64
}

/// Poisson draw conditioned on being at least one.
pub fn poisson_positive<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda > 10.0 {
        loop {
            let n = poisson(rng, lambda);
            if n > 0 {
                return n;
            }
        }
    }
    // Inversion on the zero-truncated law.
    let p0 = (-lambda).exp();
    let u = p0 + (1.0 - p0) * rng.random::<f64>();
    let mut k = 0u64;
    let mut pk = p0;
    let mut cdf = p0;
    while cdf < u {
        k += 1;
        pk *= lambda / k as f64;
        cdf += pk;
        if pk == 0.0 && cdf < u {
            break;
        }
    }
    k.max(1)
}

/// Standard normal truncated to `[lower, inf)`.
///
/// Plain rejection below zero; Robert's translated-exponential proposal with
/// the optimal rate otherwise.
pub fn std_normal_truncated_below<R: Rng + ?Sized>(rng: &mut R, lower: f64) -> f64 {
    if lower < 0.0 {
        loop {
            let z = std_normal(rng);
            if z >= lower {
                return z;
            }
        }
    }
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = lower + e / rate;
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
}

/// `N(mean, 1)` truncated to `[0, inf)` when `positive`, `(-inf, 0)` otherwise.
pub fn probit_latent<R: Rng + ?Sized>(rng: &mut R, mean: f64, positive: bool) -> f64 {
    if positive {
        mean + std_normal_truncated_below(rng, -mean)
    } else {
        let z = mean - std_normal_truncated_below(rng, mean);
        // Measure-zero boundary hit.
        if z >= 0.0 {
            -f64::MIN_POSITIVE
        } else {
            z
        }
    }
}

/// Normalize log-weights in place into probabilities. Returns `None` when
/// every weight is `-inf` or any is NaN.
pub fn normalize_log_weights(log_w: &mut [f64]) -> Option<()> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_w.iter().any(|w| w.is_nan()) {
        return None;
    }
    let mut total = 0.0;
    for w in log_w.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in log_w.iter_mut() {
        *w /= total;
    }
    Some(())
}

/// Draw an index from unnormalized probabilities.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding left `u` just past the end; fall back to the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Draw an index from log-weights (max-subtracted). `None` if all are `-inf`.
pub fn log_categorical<R: Rng + ?Sized>(rng: &mut R, log_w: &mut [f64]) -> Option<usize> {
    normalize_log_weights(log_w)?;
    Some(categorical(rng, log_w))
}

/// Conjugate normal-inverse-gamma law for one coordinate:
/// `sigma2 ~ IG(shape, scale)`, `mu | sigma2 ~ N(mean, sigma2 / kappa)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalInverseGamma {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub scale: f64,
}

/// Running sums for one coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentStats {
    pub n: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MomentStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }
}

impl NormalInverseGamma {
    pub fn posterior(&self, stats: &MomentStats) -> NormalInverseGamma {
        if stats.n == 0.0 {
            return *self;
        }
        let n = stats.n;
        let xbar = stats.sum / n;
        let ss = (stats.sum_sq - n * xbar * xbar).max(0.0);
        let kappa = self.kappa + n;
        let mean = (self.kappa * self.mean + n * xbar) / kappa;
        let shape = self.shape + 0.5 * n;
        let dev = xbar - self.mean;
        let scale = self.scale + 0.5 * ss + 0.5 * self.kappa * n * dev * dev / kappa;
        NormalInverseGamma {
            mean,
            kappa,
            shape,
            scale,
        }
    }

    /// Joint draw `(mu, sigma2)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let var = inv_gamma(rng, self.shape, self.scale);
        let mu = self.mean + (var / self.kappa).sqrt() * std_normal(rng);
        (mu, var)
    }
}
