//! Scalar linear-Gaussian state-space model
//!
//! ```text
//! x_t = a x_{t-1} + v_t,   v_t ~ N(0, phi)
//! y_t = c x_t + e_t,       e_t ~ N(0, psi)
//! ```
//!
//! with both variances shared through inverse-gamma priors.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conjugacy::{normal_logpdf, sample_student_t, student_t_logpdf, StatIncrement};
use crate::error::{Error, Result};
use crate::rng::ParticleRng;
use crate::smc::{Hyper, SubmodelKernel};

/// Default variance of the parameter-free initial-state distribution used for
/// inference.
pub const DEFAULT_X0_VARIANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgModel {
    pub a: f64,
    pub c: f64,
}

impl LgModel {
    pub fn new(a: f64, c: f64) -> Result<Self> {
        if !a.is_finite() || !c.is_finite() {
            return Err(Error::invalid("non-finite linear-Gaussian coefficient"));
        }
        Ok(LgModel { a, c })
    }
}

/// Simulate with `x_0 ~ N(0, phi)`. Returns `T + 1` states and `T` observations.
pub fn lg_simulate<R: Rng + ?Sized>(
    model: &LgModel,
    phi: f64,
    psi: f64,
    horizon: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_variances(phi, psi)?;
    let z: f64 = StandardNormal.sample(rng);
    lg_simulate_from(model, phi, psi, phi.sqrt() * z, horizon, rng)
}

/// Simulate from a given initial state.
pub fn lg_simulate_from<R: Rng + ?Sized>(
    model: &LgModel,
    phi: f64,
    psi: f64,
    x0: f64,
    horizon: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_variances(phi, psi)?;
    let (sp, so) = (phi.sqrt(), psi.sqrt());
    let mut xs = Vec::with_capacity(horizon + 1);
    let mut ys = Vec::with_capacity(horizon);
    xs.push(x0);
    let mut x = x0;
    for _ in 0..horizon {
        let v: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        x = model.a * x + sp * v;
        xs.push(x);
        ys.push(model.c * x + so * e);
    }
    Ok((xs, ys))
}

fn check_variances(phi: f64, psi: f64) -> Result<()> {
    if phi > 0.0 && psi > 0.0 && phi.is_finite() && psi.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("variances must be positive, got phi={phi}, psi={psi}")))
    }
}

/// One linear-Gaussian dataset bound to its two variance parameters.
#[derive(Debug, Clone)]
pub struct LgKernel {
    pub model: LgModel,
    /// Global index of the process variance.
    pub phi: usize,
    /// Global index of the observation variance.
    pub psi: usize,
    params: Vec<usize>,
    observations: Vec<f64>,
    x0_variance: f64,
}

impl LgKernel {
    pub fn new(model: LgModel, phi: usize, psi: usize, observations: Vec<f64>) -> Result<Self> {
        Self::with_x0_variance(model, phi, psi, observations, DEFAULT_X0_VARIANCE)
    }

    pub fn with_x0_variance(
        model: LgModel,
        phi: usize,
        psi: usize,
        observations: Vec<f64>,
        x0_variance: f64,
    ) -> Result<Self> {
        if let Some(y) = observations.iter().find(|y| !y.is_finite()) {
            return Err(Error::invalid(format!("non-finite observation {y}")));
        }
        if !(x0_variance > 0.0) || !x0_variance.is_finite() {
            return Err(Error::invalid("initial-state variance must be positive"));
        }
        let mut params = vec![phi, psi];
        params.sort_unstable();
        params.dedup();
        Ok(LgKernel {
            model,
            phi,
            psi,
            params,
            observations,
            x0_variance,
        })
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn x0_variance(&self) -> f64 {
        self.x0_variance
    }
}

impl SubmodelKernel for LgKernel {
    type State = f64;

    fn params(&self) -> &[usize] {
        &self.params
    }

    fn horizon(&self) -> usize {
        self.observations.len()
    }

    #[inline]
    fn sample_initial(&self, rng: &mut ParticleRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.x0_variance.sqrt() * z
    }

    #[inline]
    fn propagate_fixed(&self, _t: usize, prev: &f64, theta: &[f64], rng: &mut ParticleRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.model.a * prev + theta[self.phi].sqrt() * z
    }

    #[inline]
    fn log_obs_fixed(&self, t: usize, x: &f64, theta: &[f64]) -> f64 {
        normal_logpdf(self.observations[t - 1], self.model.c * x, theta[self.psi])
    }

    #[inline]
    fn propagate_marginal(&self, _t: usize, prev: &f64, hyper: &Hyper<'_>, rng: &mut ParticleRng) -> f64 {
        sample_student_t(self.model.a * prev, hyper.get(self.phi), rng)
    }

    #[inline]
    fn log_obs_marginal(&self, t: usize, x: &f64, hyper: &Hyper<'_>) -> f64 {
        student_t_logpdf(self.observations[t - 1], self.model.c * x, hyper.get(self.psi))
    }

    #[inline]
    fn transition_stats(&self, _t: usize, prev: &f64, x: &f64, acc: &mut [StatIncrement]) {
        acc[self.phi] += StatIncrement::normal_residual(x - self.model.a * prev);
    }

    #[inline]
    fn observation_stats(&self, t: usize, x: &f64, acc: &mut [StatIncrement]) {
        acc[self.psi] += StatIncrement::normal_residual(self.observations[t - 1] - self.model.c * x);
    }
}
