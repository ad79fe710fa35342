//! Thermal-equilibrium sampling and the statistical checks around it.
//!
//! The `a` Flaschka entries are square roots of Gamma(theta, rate beta)
//! variables (density proportional to `a^{2 theta - 1} e^{-beta a^2}`),
//! the `b` entries Gaussian with density proportional to `e^{-beta b^2/2}`.
//! The open measure pads the final `a` slot with an exact zero.

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::lattice::{evolve, FlaschkaState, IntegratorConfig};
use crate::rng::RngStream;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

/// Inverse temperature and shape parameters, with the cached stretch
/// parameter `alpha = log beta - psi(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    pub beta: f64,
    pub theta: f64,
    pub alpha: f64,
}

impl ThermalParams {
    pub fn new(beta: f64, theta: f64) -> Result<Self> {
        if !(beta > 0.0 && theta > 0.0) {
            return Err(Error::InvalidParameter("beta and theta must be positive".into()));
        }
        Ok(ThermalParams { beta, theta, alpha: stretch_parameter(beta, theta) })
    }

    /// As [`ThermalParams::new`] but rejecting configurations with a
    /// vanishing stretch parameter, for the checks that require
    /// `alpha != 0`.
    pub fn new_nondegenerate(beta: f64, theta: f64) -> Result<Self> {
        let p = Self::new(beta, theta)?;
        if p.alpha.abs() < 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "stretch parameter alpha = {:.3e} is degenerate",
                p.alpha
            )));
        }
        Ok(p)
    }
}

/// Digamma function, by upward recurrence to a safely large argument
/// followed by the asymptotic series. Absolute accuracy is below 1e-13 on
/// the parameter ranges used here.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma requires a positive argument");
    let mut x = x;
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n})
    acc + x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2
                    * (1.0 / 120.0
                        - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))))
}

/// Stretch parameter `alpha = log beta - Gamma'(theta)/Gamma(theta)`, the
/// mean inter-particle spacing at thermal equilibrium.
pub fn stretch_parameter(beta: f64, theta: f64) -> f64 {
    beta.ln() - digamma(theta)
}

fn draw_a<R: Rng>(params: &ThermalParams, rng: &mut R) -> f64 {
    // a^2 ~ Gamma(theta, rate beta), i.e. shape theta, scale 1/beta
    let gamma = Gamma::new(params.theta, 1.0 / params.beta).expect("valid gamma parameters");
    gamma.sample(rng).sqrt()
}

fn draw_b<R: Rng>(params: &ThermalParams, rng: &mut R) -> f64 {
    let normal = Normal::new(0.0, (1.0 / params.beta).sqrt()).expect("valid normal parameters");
    normal.sample(rng)
}

/// Draw open thermal equilibrium on `[0, n-1]`: `n - 1` Gamma-type `a`
/// draws, an exact zero in the final slot, and `n` Gaussian `b` draws.
/// The first site is anchored at position 0.
pub fn sample_open(params: &ThermalParams, n: usize, stream: &RngStream) -> FlaschkaState {
    let mut rng = stream.rng();
    let mut a = vec![0.0; n];
    for slot in a.iter_mut().take(n - 1) {
        *slot = draw_a(params, &mut rng);
    }
    let b: Vec<f64> = (0..n).map(|_| draw_b(params, &mut rng)).collect();
    FlaschkaState {
        domain: DomainSpec::OpenInterval { n1: 0, n2: n as i64 - 1 },
        a,
        b,
        t: 0.0,
        q_first: 0.0,
    }
}

/// Draw periodic thermal equilibrium on the torus of size `n`: all `n`
/// `a` slots positive. The period is `Upsilon = -2 sum log a_j`.
pub fn sample_periodic(params: &ThermalParams, n: usize, stream: &RngStream) -> FlaschkaState {
    let mut rng = stream.rng();
    let a: Vec<f64> = (0..n).map(|_| draw_a(params, &mut rng)).collect();
    let b: Vec<f64> = (0..n).map(|_| draw_b(params, &mut rng)).collect();
    let upsilon = -2.0 * a.iter().map(|x| x.ln()).sum::<f64>();
    FlaschkaState { domain: DomainSpec::Torus { n, upsilon }, a, b, t: 0.0, q_first: 0.0 }
}

/// Deviation summary of positions against the linear profile `alpha * i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingSummary {
    /// Mean of the consecutive spacings `q_{i+1} - q_i`.
    pub mean_spacing: f64,
    /// Max over tested pairs of `|q_j - q_i - alpha (j - i)|`.
    pub max_deviation: f64,
    /// Max deviation per stride `|i - j|`, for the tested strides.
    pub per_stride_max: Vec<(usize, f64)>,
}

/// Deviation statistics of a position vector from the mean linear profile,
/// over all pairs with stride up to `max_stride`.
pub fn spacing_statistics(q: &[f64], alpha: f64, max_stride: usize) -> SpacingSummary {
    let n = q.len();
    let mean_spacing = if n > 1 { (q[n - 1] - q[0]) / (n - 1) as f64 } else { 0.0 };
    let mut per_stride_max = Vec::new();
    let mut max_deviation = 0.0f64;
    let top = max_stride.min(n.saturating_sub(1));
    for stride in 1..=top {
        let mut worst = 0.0f64;
        for i in 0..n - stride {
            let dev = (q[i + stride] - q[i] - alpha * stride as f64).abs();
            worst = worst.max(dev);
        }
        max_deviation = max_deviation.max(worst);
        per_stride_max.push((stride, worst));
    }
    SpacingSummary { mean_spacing, max_deviation, per_stride_max }
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Survival function of the Kolmogorov distribution,
/// `Q(x) = 2 sum_{k>=1} (-1)^{k-1} e^{-2 k^2 x^2}`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Per-marginal result of the invariance check.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub a_statistic: f64,
    pub a_p_value: f64,
    pub b_statistic: f64,
    pub b_p_value: f64,
}

/// Compare pooled `t = 0` marginals against pooled `t = T` evolved
/// marginals for the periodic lattice, one KS test per marginal.
pub fn invariance_test(
    params: &ThermalParams,
    n: usize,
    t_final: f64,
    replicas: usize,
    cfg: &IntegratorConfig,
    stream: &RngStream,
) -> Result<InvarianceReport> {
    let mut a0 = Vec::with_capacity(n * replicas);
    let mut b0 = Vec::with_capacity(n * replicas);
    let mut at = Vec::with_capacity(n * replicas);
    let mut bt = Vec::with_capacity(n * replicas);
    for r in 0..replicas {
        let f0 = sample_periodic(params, n, &stream.substream(r as u64));
        a0.extend_from_slice(&f0.a);
        b0.extend_from_slice(&f0.b);
        if t_final == 0.0 {
            at.extend_from_slice(&f0.a);
            bt.extend_from_slice(&f0.b);
        } else {
            let traj = evolve(&f0, cfg, t_final)?;
            let last = traj.last();
            at.extend_from_slice(&last.a);
            bt.extend_from_slice(&last.b);
        }
    }
    let (da, pa) = ks_two_sample(&a0, &at);
    let (db, pb) = ks_two_sample(&b0, &bt);
    Ok(InvarianceReport { a_statistic: da, a_p_value: pa, b_statistic: db, b_p_value: pb })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_reference_values() {
        // psi(1) = -gamma, psi(2) = 1 - gamma, psi(1/2) = -gamma - 2 ln 2
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-12);
        assert!((digamma(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence() {
        let mut theta = 0.1;
        while theta <= 10.0 {
            let lhs = digamma(theta + 1.0);
            let rhs = digamma(theta) + 1.0 / theta;
            assert!((lhs - rhs).abs() < 1e-12, "theta = {theta}: {lhs} vs {rhs}");
            theta += 0.1;
        }
    }

    #[test]
    fn stretch_parameter_examples() {
        assert!((stretch_parameter(1.0, 1.0) - EULER_GAMMA).abs() < 1e-10);
        assert!((stretch_parameter(std::f64::consts::E, 1.0) - (1.0 + EULER_GAMMA)).abs() < 1e-10);
        assert!((stretch_parameter(1.0, 2.0) - (EULER_GAMMA - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn open_sample_shape_and_moments() {
        let params = ThermalParams::new(1.5, 0.8).unwrap();
        let n = 12;
        let draws = 20_000;
        let mut sum_a2 = 0.0;
        let mut count_a = 0usize;
        let mut sum_b = 0.0;
        let mut sum_b2 = 0.0;
        let mut count_b = 0usize;
        for r in 0..draws {
            let f = sample_open(&params, n, &RngStream::new(42, r));
            assert_eq!(f.a[n - 1], 0.0);
            assert!(f.a[..n - 1].iter().all(|&a| a > 0.0));
            for &a in &f.a[..n - 1] {
                sum_a2 += a * a;
                count_a += 1;
            }
            for &b in &f.b {
                sum_b += b;
                sum_b2 += b * b;
                count_b += 1;
            }
        }
        // E[a^2] = theta / beta; Var[b] = 1 / beta
        let mean_a2 = sum_a2 / count_a as f64;
        let target_a2 = params.theta / params.beta;
        let se_a2 = target_a2 * (2.0f64 / params.theta + 1.0).sqrt() / (count_a as f64).sqrt();
        assert!((mean_a2 - target_a2).abs() < 3.0 * se_a2, "{mean_a2} vs {target_a2}");
        let mean_b = sum_b / count_b as f64;
        let var_b = sum_b2 / count_b as f64 - mean_b * mean_b;
        let se_b = (1.0 / params.beta / (count_b as f64).sqrt()).abs();
        assert!(mean_b.abs() < 3.0 * se_b);
        assert!(
            (var_b - 1.0 / params.beta).abs() < 3.0 * (2.0 / count_b as f64).sqrt() / params.beta
        );
    }

    #[test]
    fn periodic_sample_upsilon_finite() {
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let f = sample_periodic(&params, 32, &RngStream::new(3, 0));
        assert!(f.a.iter().all(|&a| a > 0.0));
        if let DomainSpec::Torus { upsilon, .. } = f.domain {
            assert!(upsilon.is_finite());
            let direct = -2.0 * f.a.iter().map(|x| x.ln()).sum::<f64>();
            assert!((upsilon - direct).abs() < 1e-12);
        } else {
            panic!("expected torus");
        }
    }

    #[test]
    fn sampling_is_reproducible_bitwise() {
        let params = ThermalParams::new(2.0, 0.7).unwrap();
        let f1 = sample_open(&params, 64, &RngStream::new(9, 4));
        let f2 = sample_open(&params, 64, &RngStream::new(9, 4));
        assert_eq!(f1, f2);
        let f3 = sample_open(&params, 64, &RngStream::new(9, 5));
        assert_ne!(f1, f3);
    }

    #[test]
    fn gamma_sampler_matches_cdf() {
        // KS test of a^2 against Gamma(theta, rate beta) via probability
        // integral transform; theta = 1 makes the CDF explicit
        let params = ThermalParams::new(1.0, 1.0).unwrap();
        let draws = 100_000;
        let mut rng = RngStream::new(100, 0).rng();
        let mut us: Vec<f64> = (0..draws)
            .map(|_| {
                let a = super::draw_a(&params, &mut rng);
                1.0 - (-a * a).exp() // Exp(1) CDF of a^2
            })
            .collect();
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // one-sample KS against uniform
        let n = us.len() as f64;
        let mut d = 0.0f64;
        for (i, &u) in us.iter().enumerate() {
            d = d.max((u - i as f64 / n).abs());
            d = d.max(((i + 1) as f64 / n - u).abs());
        }
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        assert!(super::kolmogorov_q(lambda) > 0.001, "KS p-value too small: D = {d}");
    }

    #[test]
    fn spacing_statistics_examples() {
        let alpha = 0.6;
        let q: Vec<f64> = (0..50).map(|i| alpha * i as f64).collect();
        let s = spacing_statistics(&q, alpha, 10);
        assert!(s.max_deviation < 1e-12);
        assert!((s.mean_spacing - alpha).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let (d, p) = ks_two_sample(&xs, &xs);
        assert_eq!(d, 0.0);
        assert!(p > 0.999);
    }

    #[test]
    fn ks_detects_shift() {
        let mut rng = RngStream::new(5, 0).rng();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        let (_, p) = ks_two_sample(&xs, &ys);
        assert!(p < 1e-6, "p = {p}");
    }
}
