//! Conjugate likelihood/prior pairs.
//!
//! Three pairs are supported, each with a two-number hyperparameter in the
//! prior's native parameterization:
//!
//! | family | likelihood | prior | statistic per observation |
//! |---|---|---|---|
//! | [`ConjugateFamily::NormalVarianceInvGamma`] | `N(x | mu, theta)` | `IG(alpha, beta)` | `(1/2, (x - mu)^2 / 2)` |
//! | [`ConjugateFamily::BinomialBeta`] | `Bin(x | n, theta)` | `Beta(alpha, beta)` | `(x, n - x)` |
//! | [`ConjugateFamily::PoissonGamma`] | `Po(x | c * theta)` | `Gamma(alpha, rate beta)` | `(x, c)` |
//!
//! Marginal (predictive) densities are Student-t, Beta-binomial and negative
//! binomial respectively. All densities are returned on the log scale.

use std::cell::Cell;
use std::ops::{Add, AddAssign};

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trial-count threshold factor for switching a binomial draw to its normal
/// approximation.
pub const DEFAULT_APPROX_THRESHOLD: f64 = 100.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateFamily {
    /// Unknown variance of a normal likelihood, inverse-gamma prior.
    NormalVarianceInvGamma,
    /// Unknown success probability of a binomial likelihood, beta prior.
    BinomialBeta,
    /// Unknown rate of a Poisson likelihood, gamma prior (shape, rate).
    PoissonGamma,
}

impl ConjugateFamily {
    pub fn description(&self) -> &'static str {
        match self {
            ConjugateFamily::NormalVarianceInvGamma => {
                "normal likelihood with unknown variance, inverse-gamma(shape, scale) prior"
            }
            ConjugateFamily::BinomialBeta => "binomial likelihood, beta(alpha, beta) prior",
            ConjugateFamily::PoissonGamma => "poisson likelihood, gamma(shape, rate) prior",
        }
    }
}

/// Conjugate hyperparameters `(alpha, beta)`, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(HyperParams { alpha, beta })
        } else {
            Err(Error::InvalidHyper { alpha, beta })
        }
    }

    #[inline]
    pub fn update(self, inc: StatIncrement) -> HyperParams {
        HyperParams {
            alpha: self.alpha + inc.d_alpha,
            beta: self.beta + inc.d_beta,
        }
    }
}

impl Add<StatIncrement> for HyperParams {
    type Output = HyperParams;
    #[inline]
    fn add(self, inc: StatIncrement) -> HyperParams {
        self.update(inc)
    }
}

/// Additive change to a [`HyperParams`] pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StatIncrement {
    pub d_alpha: f64,
    pub d_beta: f64,
}

impl StatIncrement {
    pub const ZERO: StatIncrement = StatIncrement {
        d_alpha: 0.0,
        d_beta: 0.0,
    };

    pub fn new(d_alpha: f64, d_beta: f64) -> Self {
        StatIncrement { d_alpha, d_beta }
    }

    /// One normal observation with the given residual `x - mu`.
    #[inline]
    pub fn normal_residual(residual: f64) -> Self {
        StatIncrement {
            d_alpha: 0.5,
            d_beta: 0.5 * residual * residual,
        }
    }

    /// `successes` out of `trials` binomial outcomes.
    #[inline]
    pub fn binomial(successes: u64, trials: u64) -> Self {
        debug_assert!(successes <= trials);
        StatIncrement {
            d_alpha: successes as f64,
            d_beta: (trials - successes) as f64,
        }
    }

    /// A Poisson count whose rate is `multiplier * theta`.
    #[inline]
    pub fn poisson(count: u64, multiplier: f64) -> Self {
        StatIncrement {
            d_alpha: count as f64,
            d_beta: multiplier,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d_alpha == 0.0 && self.d_beta == 0.0
    }
}

impl Add for StatIncrement {
    type Output = StatIncrement;
    #[inline]
    fn add(self, o: StatIncrement) -> StatIncrement {
        StatIncrement {
            d_alpha: self.d_alpha + o.d_alpha,
            d_beta: self.d_beta + o.d_beta,
        }
    }
}

impl AddAssign for StatIncrement {
    #[inline]
    fn add_assign(&mut self, o: StatIncrement) {
        self.d_alpha += o.d_alpha;
        self.d_beta += o.d_beta;
    }
}

pub fn update_hyper(hp: HyperParams, inc: StatIncrement) -> HyperParams {
    hp.update(inc)
}

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

#[inline]
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

thread_local! {
    static T_NORM_CACHE: [Cell<(u64, f64)>; 16] =
        const { [const { Cell::new((u64::MAX, 0.0)) }; 16] };
}

/// `ln Gamma(alpha + 1/2) - ln Gamma(alpha)`, memoized because a whole particle
/// population usually shares the same shape parameter.
#[inline]
fn half_gamma_ratio(alpha: f64) -> f64 {
    let bits = alpha.to_bits();
    let slot = (bits.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 60) as usize;
    T_NORM_CACHE.with(|cache| {
        let (key, val) = cache[slot].get();
        if key == bits {
            val
        } else {
            let v = ln_gamma(alpha + 0.5) - ln_gamma(alpha);
            cache[slot].set((bits, v));
            v
        }
    })
}

/// Student-t predictive of a normal observation with inverse-gamma variance.
/// Returns `-inf` instead of failing when `x` or `mu` is not finite.
#[inline]
pub fn student_t_logpdf(x: f64, mu: f64, hp: HyperParams) -> f64 {
    let r = x - mu;
    if !r.is_finite() {
        return f64::NEG_INFINITY;
    }
    let HyperParams { alpha, beta } = hp;
    half_gamma_ratio(alpha) - 0.5 * (LN_2PI + beta.ln())
        - (alpha + 0.5) * (r * r / (2.0 * beta)).ln_1p()
}

/// Log density of the marginal of `N(x | mu, theta)` under `theta ~ IG(alpha, beta)`.
pub fn predictive_logpdf_student_t(x: f64, mu: f64, hp: HyperParams) -> Result<f64> {
    if !x.is_finite() || !mu.is_finite() {
        return Err(Error::invalid(format!("non-finite input x={x}, mu={mu}")));
    }
    Ok(student_t_logpdf(x, mu, hp))
}

/// Normal log density, `var` is the variance.
#[inline]
pub fn normal_logpdf(x: f64, mu: f64, var: f64) -> f64 {
    let r = x - mu;
    if !r.is_finite() {
        return f64::NEG_INFINITY;
    }
    -0.5 * (LN_2PI + ln_variance(var) + r * r / var)
}

thread_local! {
    static LN_VAR_CACHE: Cell<(u64, f64)> = const { Cell::new((u64::MAX, 0.0)) };
}

/// `ln(var)`, remembering the last value: fixed-parameter sweeps evaluate one
/// variance for the whole population.
#[inline]
fn ln_variance(var: f64) -> f64 {
    let bits = var.to_bits();
    LN_VAR_CACHE.with(|c| {
        let (key, val) = c.get();
        if key == bits {
            val
        } else {
            let v = var.ln();
            c.set((bits, v));
            v
        }
    })
}

/// Log probability of `x` successes in `n` trials under a beta-binomial.
pub fn betabinomial_logpmf(x: u64, n: u64, hp: HyperParams) -> Result<f64> {
    if x > n {
        return Err(Error::invalid(format!("{x} successes exceed {n} trials")));
    }
    Ok(betabinomial_logpmf_unchecked(x, n, hp))
}

/// As [`betabinomial_logpmf`] but returns `-inf` outside the support.
#[inline]
pub fn betabinomial_logpmf_unchecked(x: u64, n: u64, hp: HyperParams) -> f64 {
    if x > n {
        return f64::NEG_INFINITY;
    }
    let (xf, nf) = (x as f64, n as f64);
    ln_choose(n, x) + ln_beta(hp.alpha + xf, hp.beta + nf - xf) - ln_beta(hp.alpha, hp.beta)
}

/// Binomial log pmf; `-inf` outside the support.
#[inline]
pub fn binomial_logpmf(x: u64, n: u64, p: f64) -> f64 {
    if x > n {
        return f64::NEG_INFINITY;
    }
    let (xf, nf) = (x as f64, n as f64);
    let a = if x == 0 { 0.0 } else { xf * p.ln() };
    let b = if x == n { 0.0 } else { (nf - xf) * (-p).ln_1p() };
    ln_choose(n, x) + a + b
}

/// Log probability of a count under the gamma-Poisson marginal with unit rate
/// multiplier.
pub fn negbinomial_logpmf(x: u64, hp: HyperParams) -> f64 {
    let xf = x as f64;
    let HyperParams { alpha, beta } = hp;
    ln_gamma(alpha + xf) - ln_gamma(alpha) - ln_gamma(xf + 1.0) + alpha * (beta / (beta + 1.0)).ln()
        - xf * (beta + 1.0).ln()
}

/// Marginal of `Po(x | c * theta)` under `theta ~ Gamma(alpha, beta)`.
pub fn negbinomial_logpmf_scaled(x: u64, multiplier: f64, hp: HyperParams) -> Result<f64> {
    if !(multiplier > 0.0) || !multiplier.is_finite() {
        return Err(Error::invalid(format!("rate multiplier {multiplier} must be positive")));
    }
    Ok(negbinomial_logpmf(
        x,
        HyperParams {
            alpha: hp.alpha,
            beta: hp.beta / multiplier,
        },
    ))
}

/// Gamma draw with shape and rate.
#[inline]
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters validated by HyperParams")
        .sample(rng)
}

/// Inverse-gamma draw as `beta / Gamma(alpha, 1)`.
#[inline]
pub fn sample_inv_gamma<R: Rng + ?Sized>(hp: HyperParams, rng: &mut R) -> f64 {
    hp.beta / sample_gamma(hp.alpha, 1.0, rng)
}

#[inline]
pub fn sample_beta<R: Rng + ?Sized>(hp: HyperParams, rng: &mut R) -> f64 {
    Beta::new(hp.alpha, hp.beta)
        .expect("beta parameters validated by HyperParams")
        .sample(rng)
}

/// One draw from the posterior described by `hp`.
pub fn sample_posterior<R: Rng + ?Sized>(hp: HyperParams, family: ConjugateFamily, rng: &mut R) -> f64 {
    match family {
        ConjugateFamily::NormalVarianceInvGamma => sample_inv_gamma(hp, rng),
        ConjugateFamily::BinomialBeta => sample_beta(hp, rng),
        ConjugateFamily::PoissonGamma => sample_gamma(hp.alpha, hp.beta, rng),
    }
}

/// Likelihood arguments that are not marginalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictiveContext {
    Normal { mean: f64 },
    Binomial { trials: u64 },
    Poisson { rate_multiplier: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictiveDraw {
    Real(f64),
    Count(u64),
}

/// Composite draw from a predictive: parameter from the posterior, then the
/// observation from the likelihood.
pub fn sample_predictive<R: Rng + ?Sized>(
    hp: HyperParams,
    family: ConjugateFamily,
    context: PredictiveContext,
    rng: &mut R,
) -> Result<PredictiveDraw> {
    match (family, context) {
        (ConjugateFamily::NormalVarianceInvGamma, PredictiveContext::Normal { mean }) => {
            if !mean.is_finite() {
                return Err(Error::invalid("non-finite mean"));
            }
            Ok(PredictiveDraw::Real(sample_student_t(mean, hp, rng)))
        }
        (ConjugateFamily::BinomialBeta, PredictiveContext::Binomial { trials }) => Ok(PredictiveDraw::Count(
            sample_beta_binomial(trials, hp, DEFAULT_APPROX_THRESHOLD, rng),
        )),
        (ConjugateFamily::PoissonGamma, PredictiveContext::Poisson { rate_multiplier }) => {
            if !(rate_multiplier >= 0.0) || !rate_multiplier.is_finite() {
                return Err(Error::invalid(format!("rate multiplier {rate_multiplier}")));
            }
            Ok(PredictiveDraw::Count(sample_neg_binomial(rate_multiplier, hp, rng)))
        }
        (f, c) => Err(Error::invalid(format!("context {c:?} does not match family {f:?}"))),
    }
}

#[inline]
pub fn sample_student_t<R: Rng + ?Sized>(mu: f64, hp: HyperParams, rng: &mut R) -> f64 {
    let var = sample_inv_gamma(hp, rng);
    let z: f64 = StandardNormal.sample(rng);
    mu + var.sqrt() * z
}

#[inline]
pub fn sample_beta_binomial<R: Rng + ?Sized>(n: u64, hp: HyperParams, k: f64, rng: &mut R) -> u64 {
    if n == 0 {
        return 0;
    }
    let p = sample_beta(hp, rng);
    binomial_draw(n, p, k, rng)
}

#[inline]
pub fn sample_neg_binomial<R: Rng + ?Sized>(multiplier: f64, hp: HyperParams, rng: &mut R) -> u64 {
    if multiplier == 0.0 {
        return 0;
    }
    let rate = sample_gamma(hp.alpha, hp.beta, rng);
    sample_poisson(rate * multiplier, rng)
}

/// Poisson draw; zero for a zero rate.
#[inline]
pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    if rate > 1e15 {
        let z: f64 = StandardNormal.sample(rng);
        return (rate + rate.sqrt() * z).round().max(0.0) as u64;
    }
    let draw: f64 = Poisson::new(rate).expect("positive finite rate").sample(rng);
    draw as u64
}

/// Number of distinct cells hit when `k_inf` balls fall uniformly into `s` cells.
pub fn sample_occupancy<R: Rng + ?Sized>(k_inf: u64, s: u64, rng: &mut R) -> Result<u64> {
    if s == 0 {
        return if k_inf == 0 {
            Ok(0)
        } else {
            Err(Error::invalid(format!("{k_inf} balls but no cells")))
        };
    }
    // With d cells hit, the next ball lands in an unhit cell with probability
    // q_d = (s - d) / s. While that is likely, one uniform u decides a whole run
    // of new cells: the run reaches length j exactly when u <= q_d ... q_{d+j-1}.
    // Once repeats are common, skip ahead by the geometric number of repeat
    // hits before the next new cell.
    let mut distinct = 0;
    let mut left = k_inf;
    let inv_s = 1.0 / s as f64;
    let half = s.div_ceil(2);
    while left > 0 && distinct < half {
        let u = 1.0 - rng.random::<f64>();
        let mut q = 1.0 - distinct as f64 * inv_s;
        let mut run = 1.0;
        // A run never crosses into the second phase.
        let steps = left.min(half - distinct);
        let (mut used, mut fresh) = (0, 0);
        while used < steps {
            used += 1;
            run *= q;
            if u > run {
                break;
            }
            fresh += 1;
            q -= inv_s;
        }
        distinct += fresh;
        left -= used;
    }
    while left > 0 && distinct < s {
        let p_new = (s - distinct) as f64 / s as f64;
        let repeats = Geometric::new(p_new).expect("probability in (0, 1]").sample(rng);
        if repeats >= left {
            break;
        }
        left -= repeats + 1;
        distinct += 1;
    }
    Ok(distinct)
}

/// True when both `n > k(1-p)/p` and `n > kp/(1-p)` hold.
pub fn normal_approx_applies(n: u64, p: f64, k: f64) -> bool {
    let nf = n as f64;
    p > 0.0 && p < 1.0 && nf > k * (1.0 - p) / p && nf > k * p / (1.0 - p)
}

/// Binomial draw, replaced by a rounded and clamped normal draw when the
/// trial count is large enough for both tails.
pub fn sample_binomial_approx<R: Rng + ?Sized>(n: u64, p: f64, k: f64, rng: &mut R) -> Result<u64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(binomial_draw(n, p, k, rng))
}

#[inline]
fn binomial_draw<R: Rng + ?Sized>(n: u64, p: f64, k: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if normal_approx_applies(n, p, k) {
        let nf = n as f64;
        let z: f64 = StandardNormal.sample(rng);
        let x = (nf * p + (nf * p * (1.0 - p)).sqrt() * z).round();
        return x.clamp(0.0, nf) as u64;
    }
    Binomial::new(n, p).expect("p checked").sample(rng)
}

/// Beta prior whose mode is `1/mu0`, from a mean transition time in days.
pub fn beta_mode_match(mu0: f64) -> Result<HyperParams> {
    if !(mu0 > 2.0 / 3.0) || !mu0.is_finite() {
        return Err(Error::invalid(format!("mean transition time {mu0} must exceed 2/3")));
    }
    HyperParams::new(1.0 + 2.0 / mu0, 3.0 - 2.0 / mu0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chain_rng;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn hp(a: f64, b: f64) -> HyperParams {
        HyperParams::new(a, b).unwrap()
    }

    /// Composite Simpson rule on `[lo, hi]`.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    fn ig_logpdf(theta: f64, h: HyperParams) -> f64 {
        h.alpha * h.beta.ln() - ln_gamma(h.alpha) - (h.alpha + 1.0) * theta.ln() - h.beta / theta
    }

    fn gamma_logpdf(x: f64, h: HyperParams) -> f64 {
        h.alpha * h.beta.ln() - ln_gamma(h.alpha) + (h.alpha - 1.0) * x.ln() - h.beta * x
    }

    fn beta_logpdf(p: f64, h: HyperParams) -> f64 {
        (h.alpha - 1.0) * p.ln() + (h.beta - 1.0) * (-p).ln_1p() - ln_beta(h.alpha, h.beta)
    }

    fn poisson_logpmf(x: u64, rate: f64) -> f64 {
        x as f64 * rate.ln() - rate - ln_gamma(x as f64 + 1.0)
    }

    /// Integral over `theta = e^u` of a density in `theta`.
    fn log_scale_integral(f: impl Fn(f64) -> f64) -> f64 {
        simpson(|u| f(u.exp()) * u.exp(), -40.0, 40.0, 40_000)
    }

    #[test]
    fn update_examples() {
        let h = update_hyper(hp(0.01, 0.01), StatIncrement::normal_residual(0.0));
        assert!((h.alpha - 0.51).abs() < 1e-15 && h.beta == 0.01);
        assert_eq!(update_hyper(hp(1.3, 2.7), StatIncrement::ZERO), hp(1.3, 2.7));
        let a = hp(1.0, 1.0) + StatIncrement::new(0.5, 2.0) + StatIncrement::new(0.5, 3.0);
        let b = hp(1.0, 1.0) + StatIncrement::new(0.5, 3.0) + StatIncrement::new(0.5, 2.0);
        assert_eq!(a, hp(2.0, 6.0));
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(HyperParams::new(0.0, 1.0).is_err());
        assert!(HyperParams::new(1.0, -1.0).is_err());
        assert!(HyperParams::new(f64::NAN, 1.0).is_err());
        assert!(HyperParams::new(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn student_t_reduces_to_cauchy() {
        let h = hp(0.5, 0.5);
        for x in [0.0, 0.3, -1.7, 12.0] {
            let expect = (1.0 / (PI * (1.0 + x * x))).ln();
            assert!((predictive_logpdf_student_t(x, 0.0, h).unwrap() - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn student_t_at_center() {
        for (a, b) in [(0.7, 2.0), (3.0, 0.2), (40.0, 9.0)] {
            let expect = ln_gamma(a + 0.5) - ln_gamma(a) - 0.5 * (2.0 * PI * b).ln();
            assert!((predictive_logpdf_student_t(1.25, 1.25, hp(a, b)).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn student_t_matches_quadrature() {
        let h = hp(2.0, 3.0);
        let oracle = log_scale_integral(|th| (normal_logpdf(2.0, 1.0, th) + ig_logpdf(th, h)).exp());
        let got = predictive_logpdf_student_t(2.0, 1.0, h).unwrap().exp();
        assert!((got - oracle).abs() < 1e-9 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn student_t_rejects_non_finite() {
        assert!(predictive_logpdf_student_t(f64::NAN, 0.0, hp(1.0, 1.0)).is_err());
        assert!(predictive_logpdf_student_t(f64::INFINITY, 0.0, hp(1.0, 1.0)).is_err());
        assert_eq!(student_t_logpdf(f64::INFINITY, 0.0, hp(1.0, 1.0)), f64::NEG_INFINITY);
    }

    #[test]
    fn student_t_gaussian_limit() {
        let sigma2 = 0.7;
        let a = 1e6;
        let h = hp(a, (a - 1.0) * sigma2);
        for x in [-2.0, 0.0, 0.4, 1.9] {
            let t = student_t_logpdf(x, 0.1, h).exp();
            let n = normal_logpdf(x, 0.1, sigma2).exp();
            assert!((t - n).abs() < 1e-6);
        }
    }

    #[test]
    fn betabinomial_special_cases() {
        let u = hp(1.0, 1.0);
        for x in 0..=1 {
            assert!((betabinomial_logpmf(x, 1, u).unwrap() - 0.5f64.ln()).abs() < 1e-10);
        }
        for x in 0..=2 {
            assert!((betabinomial_logpmf(x, 2, u).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-10);
        }
        assert!(betabinomial_logpmf(3, 2, u).is_err());
        assert_eq!(betabinomial_logpmf_unchecked(3, 2, u), f64::NEG_INFINITY);
    }

    #[test]
    fn negbinomial_geometric_case() {
        let h = hp(1.0, 1.0);
        for x in 0..30u64 {
            let expect = -((x + 1) as f64) * 2f64.ln();
            assert!((negbinomial_logpmf(x, h) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_negbinomial_matches_unit_case() {
        let h = hp(2.5, 1.5);
        let a = negbinomial_logpmf_scaled(4, 1.0, h).unwrap();
        assert!((a - negbinomial_logpmf(4, h)).abs() < 1e-14);
        assert!(negbinomial_logpmf_scaled(4, 0.0, h).is_err());
    }

    #[test]
    fn scaled_negbinomial_matches_quadrature() {
        let h = hp(3.0, 2.0);
        let c = 2.5;
        for x in [0u64, 3, 9] {
            let oracle =
                log_scale_integral(|lam| (poisson_logpmf(x, c * lam) + gamma_logpdf(lam, h)).exp());
            let got = negbinomial_logpmf_scaled(x, c, h).unwrap().exp();
            assert!((got - oracle).abs() < 1e-9 * oracle.max(1e-300));
        }
    }

    #[test]
    fn sequential_student_t_equals_joint_marginal() {
        let prior = hp(1.7, 0.9);
        let obs = [(0.3, 0.0), (-1.1, 0.5), (2.0, 1.2)];
        let mut h = prior;
        let mut seq = 0.0;
        for &(x, mu) in &obs {
            seq += student_t_logpdf(x, mu, h);
            h = h + StatIncrement::normal_residual(x - mu);
        }
        let joint = log_scale_integral(|th| {
            let ll: f64 = obs.iter().map(|&(x, mu)| normal_logpdf(x, mu, th)).sum();
            (ll + ig_logpdf(th, prior)).exp()
        });
        assert!((seq.exp() - joint).abs() < 1e-9 * joint);
    }

    #[test]
    fn sequential_betabinomial_equals_joint_marginal() {
        let prior = hp(1.4, 2.2);
        let obs = [(2u64, 5u64), (0, 3), (4, 4)];
        let mut h = prior;
        let mut seq = 0.0;
        for &(x, n) in &obs {
            seq += betabinomial_logpmf(x, n, h).unwrap();
            h = h + StatIncrement::binomial(x, n);
        }
        let joint = simpson(
            |p| {
                if p <= 0.0 || p >= 1.0 {
                    return 0.0;
                }
                let ll: f64 = obs.iter().map(|&(x, n)| binomial_logpmf(x, n, p)).sum();
                (ll + beta_logpdf(p, prior)).exp()
            },
            0.0,
            1.0,
            200_000,
        );
        assert!((seq.exp() - joint).abs() < 1e-8 * joint);
    }

    #[test]
    fn sequential_negbinomial_equals_joint_marginal() {
        let prior = hp(1.2, 1.0);
        let obs = [(3u64, 0.5), (0, 2.0), (7, 1.5)];
        let mut h = prior;
        let mut seq = 0.0;
        for &(x, c) in &obs {
            seq += negbinomial_logpmf_scaled(x, c, h).unwrap();
            h = h + StatIncrement::poisson(x, c);
        }
        let joint = log_scale_integral(|lam| {
            let ll: f64 = obs.iter().map(|&(x, c)| poisson_logpmf(x, c * lam)).sum();
            (ll + gamma_logpdf(lam, prior)).exp()
        });
        assert!((seq.exp() - joint).abs() < 1e-9 * joint);
    }

    #[test]
    fn predictive_edge_contexts() {
        let mut rng = chain_rng(3);
        for _ in 0..100 {
            let d = sample_predictive(hp(2.0, 3.0), ConjugateFamily::BinomialBeta, PredictiveContext::Binomial { trials: 0 }, &mut rng);
            assert_eq!(d.unwrap(), PredictiveDraw::Count(0));
            let d = sample_predictive(
                hp(2.0, 3.0),
                ConjugateFamily::PoissonGamma,
                PredictiveContext::Poisson { rate_multiplier: 0.0 },
                &mut rng,
            );
            assert_eq!(d.unwrap(), PredictiveDraw::Count(0));
        }
        let bad = sample_predictive(
            hp(2.0, 3.0),
            ConjugateFamily::PoissonGamma,
            PredictiveContext::Poisson { rate_multiplier: -1.0 },
            &mut rng,
        );
        assert!(bad.is_err());
        let mismatch = sample_predictive(
            hp(2.0, 3.0),
            ConjugateFamily::BinomialBeta,
            PredictiveContext::Normal { mean: 0.0 },
            &mut rng,
        );
        assert!(mismatch.is_err());
    }

    #[test]
    fn occupancy_small_cases() {
        let mut rng = chain_rng(5);
        assert_eq!(sample_occupancy(0, 10, &mut rng).unwrap(), 0);
        assert_eq!(sample_occupancy(0, 0, &mut rng).unwrap(), 0);
        assert_eq!(sample_occupancy(1, 7, &mut rng).unwrap(), 1);
        assert!(sample_occupancy(3, 0, &mut rng).is_err());
        let draws = 100_000;
        let ones = (0..draws).filter(|_| sample_occupancy(2, 2, &mut rng).unwrap() == 1).count();
        let p = ones as f64 / draws as f64;
        let se = (0.25 / draws as f64).sqrt();
        assert!((p - 0.5).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn occupancy_matches_enumerated_assignments() {
        // Every one of the s^k equally likely ball placements, counted by hand.
        let mut rng = chain_rng(21);
        for (k, s) in [(5u32, 4u64), (9, 3), (3, 6), (12, 2)] {
            let mut exact = vec![0.0f64; s as usize + 1];
            for code in 0..s.pow(k) {
                let mut hit = vec![false; s as usize];
                let mut c = code;
                for _ in 0..k {
                    hit[(c % s) as usize] = true;
                    c /= s;
                }
                exact[hit.iter().filter(|&&h| h).count()] += 1.0 / s.pow(k) as f64;
            }
            let draws = 200_000;
            let mut counts = vec![0usize; s as usize + 1];
            for _ in 0..draws {
                counts[sample_occupancy(k as u64, s, &mut rng).unwrap() as usize] += 1;
            }
            for (d, &e) in exact.iter().enumerate() {
                let p = counts[d] as f64 / draws as f64;
                let se = (e * (1.0 - e) / draws as f64).sqrt();
                assert!((p - e).abs() <= 4.5 * se + 1e-12, "k={k} s={s} d={d}: {p} vs {e}");
            }
        }
    }

    #[test]
    fn occupancy_moments_with_sparse_hits() {
        let mut rng = chain_rng(33);
        for (k, s) in [(500u64, 3000u64), (2500, 3000), (40, 45)] {
            let (kf, sf) = (k as f64, s as f64);
            let mean = sf * (1.0 - (1.0 - 1.0 / sf).powf(kf));
            let var = sf * (sf - 1.0) * (1.0 - 2.0 / sf).powf(kf) + sf * (1.0 - 1.0 / sf).powf(kf)
                - sf * sf * (1.0 - 1.0 / sf).powf(2.0 * kf);
            let n = 20_000;
            let draws: Vec<f64> = (0..n).map(|_| sample_occupancy(k, s, &mut rng).unwrap() as f64).collect();
            let m = draws.iter().sum::<f64>() / n as f64;
            let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((m - mean).abs() < 4.5 * (var / n as f64).sqrt(), "k={k} s={s}: {m} vs {mean}");
            assert!((v / var - 1.0).abs() < 0.1, "k={k} s={s}: var {v} vs {var}");
        }
    }

    #[test]
    fn occupancy_many_cells_matches_mean() {
        // Expected distinct cells: s (1 - (1 - 1/s)^k).
        let mut rng = chain_rng(8);
        let (k, s) = (2_000_000u64, 3_000_000u64);
        let expect = s as f64 * (1.0 - (1.0 - 1.0 / s as f64).powf(k as f64));
        let d = sample_occupancy(k, s, &mut rng).unwrap() as f64;
        assert!((d - expect).abs() < 5.0 * expect.sqrt());
    }

    #[test]
    fn binomial_approx_paths() {
        assert!(normal_approx_applies(1000, 0.5, 100.0));
        assert!(!normal_approx_applies(50, 0.5, 100.0));
        assert!(!normal_approx_applies(1000, 0.0, 100.0));
        let mut rng = chain_rng(1);
        for n in [0, 10, 1000, 1_000_000] {
            assert_eq!(sample_binomial_approx(n, 0.0, 100.0, &mut rng).unwrap(), 0);
            assert_eq!(sample_binomial_approx(n, 1.0, 100.0, &mut rng).unwrap(), n);
        }
        assert!(sample_binomial_approx(5, 1.5, 100.0, &mut rng).is_err());
        assert!(sample_binomial_approx(5, -0.1, 100.0, &mut rng).is_err());
        let m = 20_000;
        let mean = (0..m)
            .map(|_| sample_binomial_approx(1000, 0.5, 100.0, &mut rng).unwrap() as f64)
            .sum::<f64>()
            / m as f64;
        assert!((mean - 500.0).abs() < 3.0 * (250.0 / m as f64).sqrt());
    }

    #[test]
    fn mode_matching() {
        for mu0 in [4.4, 6.5, 4.5, 2.0] {
            let h = beta_mode_match(mu0).unwrap();
            assert!((h.alpha - (1.0 + 2.0 / mu0)).abs() < 1e-15);
            assert!((h.beta - (3.0 - 2.0 / mu0)).abs() < 1e-15);
            let mode = (h.alpha - 1.0) / (h.alpha + h.beta - 2.0);
            assert!((mode - 1.0 / mu0).abs() < 1e-12);
        }
        assert_eq!(beta_mode_match(2.0).unwrap(), hp(2.0, 2.0));
        assert!(beta_mode_match(2.0 / 3.0).is_err());
        assert!(beta_mode_match(0.1).is_err());
    }

    #[test]
    fn posterior_sample_means() {
        let mut rng = chain_rng(11);
        let n = 100_000;
        let m: f64 = (0..n)
            .map(|_| sample_posterior(hp(2.5, 2.5), ConjugateFamily::BinomialBeta, &mut rng))
            .sum::<f64>()
            / n as f64;
        let sd = (0.25 / 6.0f64).sqrt();
        assert!((m - 0.5).abs() < 3.0 * sd / (n as f64).sqrt());
        let m: f64 = (0..n)
            .map(|_| sample_posterior(hp(1.2, 1.0), ConjugateFamily::PoissonGamma, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((m - 1.2).abs() < 3.0 * 1.2f64.sqrt() / (n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn increments_commute(incs in prop::collection::vec((0u32..50, 0u32..50), 1..12), seed in any::<u64>()) {
            // Integer-valued increments add exactly, so any order gives identical results.
            let incs: Vec<StatIncrement> =
                incs.iter().map(|&(a, b)| StatIncrement::new(a as f64 * 0.5, b as f64)).collect();
            let forward = incs.iter().fold(hp(1.0, 2.0), |h, &i| h + i);
            let mut shuffled = incs.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut chain_rng(seed));
            let back = shuffled.iter().fold(hp(1.0, 2.0), |h, &i| h + i);
            prop_assert_eq!(forward, back);
        }

        #[test]
        fn real_increments_commute_to_rounding(incs in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..12)) {
            let incs: Vec<StatIncrement> = incs.iter().map(|&(a, b)| StatIncrement::new(a, b)).collect();
            let f = incs.iter().fold(hp(0.3, 0.4), |h, &i| h + i);
            let r = incs.iter().rev().fold(hp(0.3, 0.4), |h, &i| h + i);
            prop_assert!((f.alpha - r.alpha).abs() <= 1e-12 * f.alpha);
            prop_assert!((f.beta - r.beta).abs() <= 1e-12 * f.beta);
        }

        #[test]
        fn occupancy_bounded(k in 0u64..400, s in 1u64..300, seed in any::<u64>()) {
            let d = sample_occupancy(k, s, &mut chain_rng(seed)).unwrap();
            prop_assert!(d <= k.min(s));
        }

        #[test]
        fn betabinomial_normalizes(n in 0u64..60, a in 0.05f64..20.0, b in 0.05f64..20.0) {
            let h = hp(a, b);
            let total: f64 = (0..=n).map(|x| betabinomial_logpmf(x, n, h).unwrap().exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }

        #[test]
        fn negbinomial_normalizes(a in 0.2f64..15.0, b in 0.2f64..10.0) {
            let h = hp(a, b);
            let mut total = 0.0;
            let mut x = 0u64;
            loop {
                let p = negbinomial_logpmf(x, h).exp();
                total += p;
                x += 1;
                // Stop once the remaining tail is provably below 1e-12.
                let ratio = ((a + x as f64 - 1.0) / x as f64).max(1.0) / (b + 1.0);
                if ratio < 1.0 && p * ratio / (1.0 - ratio) < 1e-12 {
                    break;
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-10, "{}", total);
        }
    }
}
