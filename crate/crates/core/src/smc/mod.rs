//! Particle engines.
//!
//! [`run_sweep`] is the one engine behind everything here. It runs a bootstrap
//! particle filter over a [`Schedule`], either with fixed parameters or with
//! the parameters integrated out. In the marginalized case every particle
//! carries its own running statistics, and its proposal and weight use the
//! predictive given `base + stats`. An optional reference path pins the last
//! particle, which turns the filter into a conditional SMC kernel.

mod engine;
mod resample;
mod schedule;

pub use engine::{run_sweep, run_sweep_observed, ParticleSystem, SweepInput, SweepOutput};
pub use resample::{resample_categorical, select_index};
pub use schedule::{Action, Schedule, SyncPolicy};

use std::fmt::Debug;

use rand::RngCore;

use crate::conjugacy::{HyperParams, StatIncrement};
use crate::error::Result;
use crate::rng::ParticleRng;

/// Running hyperparameters seen by one particle: `base + stats`.
#[derive(Clone, Copy)]
pub struct Hyper<'a> {
    base: &'a [HyperParams],
    stats: &'a [StatIncrement],
}

impl<'a> Hyper<'a> {
    pub fn new(base: &'a [HyperParams], stats: &'a [StatIncrement]) -> Self {
        debug_assert_eq!(base.len(), stats.len());
        Hyper { base, stats }
    }

    #[inline]
    pub fn get(&self, k: usize) -> HyperParams {
        self.base[k] + self.stats[k]
    }
}

/// How a sweep weights particles: with known parameters (global vector) or
/// with them integrated out from the given base hyperparameters.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    Fixed(&'a [f64]),
    Marginal(&'a [HyperParams]),
}

/// Dynamics and observation model of one dataset.
///
/// Parameters are addressed by global index. Time runs `1..=horizon()`; the
/// state at time 0 comes from [`SubmodelKernel::sample_initial`], which must
/// not depend on any parameter. Statistic extractors add into `acc` (global
/// indexing) and must only touch the kernel's own parameters.
pub trait SubmodelKernel: Send + Sync {
    type State: Clone + PartialEq + Debug + Send + Sync;

    /// Sorted global indices of the parameters this dataset uses.
    fn params(&self) -> &[usize];

    fn horizon(&self) -> usize;

    fn sample_initial(&self, rng: &mut ParticleRng) -> Self::State;

    fn propagate_fixed(&self, t: usize, prev: &Self::State, theta: &[f64], rng: &mut ParticleRng) -> Self::State;

    fn log_obs_fixed(&self, t: usize, x: &Self::State, theta: &[f64]) -> f64;

    fn propagate_marginal(&self, t: usize, prev: &Self::State, hyper: &Hyper<'_>, rng: &mut ParticleRng)
        -> Self::State;

    fn log_obs_marginal(&self, t: usize, x: &Self::State, hyper: &Hyper<'_>) -> f64;

    fn transition_stats(&self, t: usize, prev: &Self::State, x: &Self::State, acc: &mut [StatIncrement]);

    fn observation_stats(&self, t: usize, x: &Self::State, acc: &mut [StatIncrement]);
}

/// Statistics of a complete path, accumulated in the same order the engine
/// uses, so the result is bit-identical to the engine's running sums.
pub fn path_stats<K: SubmodelKernel>(kernel: &K, path: &[K::State], param_count: usize) -> Vec<StatIncrement> {
    let mut acc = vec![StatIncrement::ZERO; param_count];
    add_path_stats(kernel, path, &mut acc);
    acc
}

pub(crate) fn add_path_stats<K: SubmodelKernel>(kernel: &K, path: &[K::State], acc: &mut [StatIncrement]) {
    for t in 1..path.len() {
        kernel.transition_stats(t, &path[t - 1], &path[t], acc);
        kernel.observation_stats(t, &path[t], acc);
    }
}

/// A path kept between iterations together with its statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory<S> {
    pub states: Vec<S>,
    pub stats: Vec<StatIncrement>,
}

/// Bootstrap particle filter with fixed parameters.
pub fn run_smc<K: SubmodelKernel, R: RngCore>(
    kernel: &K,
    theta: &[f64],
    particles: usize,
    rng: &mut R,
) -> Result<SweepOutput<K::State>> {
    let schedule = Schedule::single(kernel.horizon());
    run_sweep(SweepInput {
        kernels: &[kernel],
        schedule: &schedule,
        weighting: Weighting::Fixed(theta),
        reference: None,
        particles,
        seed: rng.next_u64(),
    })
}

/// Conditional SMC with fixed parameters; the last particle follows `reference`.
pub fn run_csmc<K: SubmodelKernel, R: RngCore>(
    kernel: &K,
    theta: &[f64],
    reference: &[K::State],
    particles: usize,
    rng: &mut R,
) -> Result<Vec<K::State>> {
    let schedule = Schedule::single(kernel.horizon());
    let reference = [reference.to_vec()];
    let out = run_sweep(SweepInput {
        kernels: &[kernel],
        schedule: &schedule,
        weighting: Weighting::Fixed(theta),
        reference: Some(&reference),
        particles,
        seed: rng.next_u64(),
    })?;
    Ok(out.trajectories.into_iter().next().expect("one component"))
}

/// Conditional SMC with the parameters integrated out, starting from the
/// (global) informed prior.
pub fn run_marginalized_csmc<K: SubmodelKernel, R: RngCore>(
    kernel: &K,
    informed_prior: &[HyperParams],
    reference: &ReferenceTrajectory<K::State>,
    particles: usize,
    rng: &mut R,
) -> Result<ReferenceTrajectory<K::State>> {
    let schedule = Schedule::single(kernel.horizon());
    let refs = [reference.states.clone()];
    let out = run_sweep(SweepInput {
        kernels: &[kernel],
        schedule: &schedule,
        weighting: Weighting::Marginal(informed_prior),
        reference: Some(&refs),
        particles,
        seed: rng.next_u64(),
    })?;
    Ok(ReferenceTrajectory {
        states: out.trajectories.into_iter().next().expect("one component"),
        stats: out.stats,
    })
}
