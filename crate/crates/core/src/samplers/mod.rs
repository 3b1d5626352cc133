//! MCMC drivers.
//!
//! All variants share one chain loop: iteration 1 initializes every dataset
//! with an unconditional particle filter, later iterations refresh the state
//! paths with conditional sweeps. Only the grouping of datasets into sweeps
//! and the weighting differ:
//!
//! * [`Variant::Pg`] draws the parameters, then sweeps each dataset with them fixed.
//! * [`Variant::SingleMpg`] sweeps each dataset with the parameters integrated
//!   out, starting from the prior plus the other datasets' statistics.
//! * [`Variant::StackedTimeMpg`] sweeps all datasets one after the other in a
//!   single particle system.
//! * [`Variant::StackedStateMpg`] sweeps all datasets side by side in a single
//!   particle system.
//! * [`Variant::HybridEpidemic`] sweeps two overlapping pairs, each stacked in time.

mod config;

pub use config::{ChainConfig, HybridOrder, HybridRoles, OrderPolicy, Variant};

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::conjugacy::{sample_posterior, HyperParams};
use crate::error::{Error, Result};
use crate::multissm::{DatasetStats, MultiSsmSpec};
use crate::rng::{chain_rng, ChainRng};
use crate::smc::{path_stats, run_sweep, Schedule, SubmodelKernel, SweepInput, Weighting};

#[derive(Debug, Clone, PartialEq)]
pub struct IterationMeta {
    pub iteration: usize,
    /// Datasets in the order they were swept (a dataset may appear twice).
    pub order: Vec<usize>,
    /// Selected particle index of each sweep.
    pub selected: Vec<usize>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyEvent {
    pub iteration: usize,
    pub datasets: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput<S> {
    pub param_names: Vec<String>,
    /// Iteration number of each stored draw.
    pub iterations: Vec<usize>,
    /// `params[s][k]`; empty when parameter output is off.
    pub params: Vec<Vec<f64>>,
    /// `trajectories[s][l][t]`; empty when path output is off.
    pub trajectories: Vec<Vec<Vec<S>>>,
    pub meta: Vec<IterationMeta>,
    pub degeneracy: Vec<DegeneracyEvent>,
}

impl<S> ChainOutput<S> {
    pub fn new(param_names: Vec<String>) -> Self {
        ChainOutput {
            param_names,
            iterations: Vec::new(),
            params: Vec::new(),
            trajectories: Vec::new(),
            meta: Vec::new(),
            degeneracy: Vec::new(),
        }
    }

    /// Stored draws of parameter `k`.
    pub fn param_series(&self, k: usize) -> Vec<f64> {
        self.params.iter().map(|p| p[k]).collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn stored(&self) -> usize {
        self.iterations.len()
    }
}

/// One draw from the full conditional of the parameters given every
/// dataset's statistics.
pub fn sample_parameters<R: RngCore>(spec: &MultiSsmSpec, stats: &[DatasetStats], rng: &mut R) -> Vec<f64> {
    spec.posterior_hyper(stats)
        .into_iter()
        .zip(spec.families())
        .map(|(h, &f)| sample_posterior(h, f, rng))
        .collect()
}

fn sample_prior<R: RngCore>(spec: &MultiSsmSpec, rng: &mut R) -> Vec<f64> {
    spec.priors()
        .iter()
        .zip(spec.families())
        .map(|(&h, &f)| sample_posterior(h, f, rng))
        .collect()
}

/// Run the variant selected in `cfg`.
pub fn run_chain<K: SubmodelKernel>(
    spec: &MultiSsmSpec,
    kernels: &[K],
    cfg: &ChainConfig,
) -> Result<ChainOutput<K::State>> {
    match cfg.variant {
        Variant::Pg => run_pg(spec, kernels, cfg),
        Variant::SingleMpg => run_single_mpg(spec, kernels, cfg),
        Variant::StackedTimeMpg => run_stacked_time_mpg(spec, kernels, cfg),
        Variant::StackedStateMpg => run_stacked_state_mpg(spec, kernels, cfg),
        Variant::HybridEpidemic => run_hybrid_epidemic_mpg(spec, kernels, cfg),
    }
}

struct Chain<'a, K: SubmodelKernel> {
    spec: &'a MultiSsmSpec,
    kernels: &'a [K],
    cfg: &'a ChainConfig,
    rng: ChainRng,
    paths: Vec<Vec<K::State>>,
    stats: Vec<DatasetStats>,
    out: ChainOutput<K::State>,
    meta: IterationMeta,
}

impl<'a, K: SubmodelKernel> Chain<'a, K> {
    fn start(spec: &'a MultiSsmSpec, kernels: &'a [K], cfg: &'a ChainConfig) -> Result<(Self, Vec<f64>)> {
        cfg.validate(spec.dataset_count(), spec.param_count())?;
        if kernels.len() != spec.dataset_count() {
            return Err(Error::Config(format!(
                "{} kernels for {} datasets",
                kernels.len(),
                spec.dataset_count()
            )));
        }
        for (l, kern) in kernels.iter().enumerate() {
            if kern.params() != spec.index_set(l) {
                return Err(Error::Config(format!(
                    "dataset {l}: kernel uses parameters {:?}, model declares {:?}",
                    kern.params(),
                    spec.index_set(l)
                )));
            }
        }
        let mut chain = Chain {
            spec,
            kernels,
            cfg,
            rng: chain_rng(cfg.seed),
            paths: Vec::new(),
            stats: Vec::new(),
            out: ChainOutput::new(spec.names().to_vec()),
            meta: IterationMeta {
                iteration: 1,
                order: Vec::new(),
                selected: Vec::new(),
                degenerate: false,
            },
        };
        let theta = chain.initialize()?;
        Ok((chain, theta))
    }

    /// Unconditional particle filters with fixed parameters. A degenerate
    /// attempt is recorded and retried with parameters drawn from the prior.
    fn initialize(&mut self) -> Result<Vec<f64>> {
        let mut last_err = None;
        for attempt in 0..self.cfg.init_attempts {
            let theta = match (&self.cfg.initial_theta, attempt) {
                (Some(t), 0) => t.clone(),
                _ => sample_prior(self.spec, &mut self.rng),
            };
            let mut paths = Vec::with_capacity(self.kernels.len());
            let mut failed = None;
            for (l, kern) in self.kernels.iter().enumerate() {
                let schedule = Schedule::single(kern.horizon());
                let seed = self.rng.next_u64();
                match run_sweep(SweepInput {
                    kernels: &[kern],
                    schedule: &schedule,
                    weighting: Weighting::Fixed(&theta),
                    reference: None,
                    particles: self.cfg.particles_for(l),
                    seed,
                }) {
                    Ok(out) => {
                        self.meta.selected.push(out.selected);
                        paths.push(out.trajectories.into_iter().next().expect("one component"));
                    }
                    Err(e) if e.is_degeneracy() => {
                        failed = Some((l, e));
                        break;
                    }
                    Err(e) => return Err(wrap(1, vec![l], e)),
                }
            }
            match failed {
                None => {
                    self.meta.order = (0..self.kernels.len()).collect();
                    self.stats = paths
                        .iter()
                        .enumerate()
                        .map(|(l, p)| self.dataset_stats(l, p))
                        .collect::<Result<_>>()?;
                    self.paths = paths;
                    return Ok(theta);
                }
                Some((l, e)) => {
                    self.meta.selected.clear();
                    self.out.degeneracy.push(DegeneracyEvent {
                        iteration: 1,
                        datasets: vec![l],
                        message: format!("initialization attempt {}: {e}", attempt + 1),
                    });
                    last_err = Some((l, e));
                }
            }
        }
        let (l, e) = last_err.expect("at least one attempt");
        Err(wrap(1, vec![l], e))
    }

    fn dataset_stats(&self, l: usize, path: &[K::State]) -> Result<DatasetStats> {
        DatasetStats::new(
            self.spec,
            l,
            path_stats(&self.kernels[l], path, self.spec.param_count()),
        )
    }

    /// One conditional sweep over `datasets` (in sweep order). On degeneracy the
    /// references are kept and the event is recorded.
    fn sweep(&mut self, iteration: usize, datasets: &[usize], schedule: &Schedule, weighting: Weighting<'_>) -> Result<()> {
        let kernels: Vec<&K> = datasets.iter().map(|&l| &self.kernels[l]).collect();
        let refs: Vec<Vec<K::State>> = datasets.iter().map(|&l| self.paths[l].clone()).collect();
        let particles = match datasets {
            [l] => self.cfg.particles_for(*l),
            _ => self.cfg.particles,
        };
        let seed = self.rng.next_u64();
        self.meta.order.extend_from_slice(datasets);
        let result = run_sweep(SweepInput {
            kernels: &kernels,
            schedule,
            weighting,
            reference: Some(&refs),
            particles,
            seed,
        });
        match result {
            Ok(out) => {
                self.meta.selected.push(out.selected);
                let single = datasets.len() == 1;
                for (&l, path) in datasets.iter().zip(out.trajectories) {
                    let stats = self.dataset_stats(l, &path)?;
                    if single && matches!(weighting, Weighting::Marginal(_)) {
                        debug_assert_eq!(stats.stats(), &out.stats[..], "running statistics drifted from the path");
                    }
                    self.stats[l] = stats;
                    self.paths[l] = path;
                }
                Ok(())
            }
            Err(e) if e.is_degeneracy() => {
                self.meta.selected.push(particles - 1);
                self.meta.degenerate = true;
                self.out.degeneracy.push(DegeneracyEvent {
                    iteration,
                    datasets: datasets.to_vec(),
                    message: e.to_string(),
                });
                Ok(())
            }
            Err(e) => Err(wrap(iteration, datasets.to_vec(), e)),
        }
    }

    fn finish_iteration(&mut self, iteration: usize, theta: Option<Vec<f64>>) {
        let meta = std::mem::replace(
            &mut self.meta,
            IterationMeta {
                iteration: iteration + 1,
                order: Vec::new(),
                selected: Vec::new(),
                degenerate: false,
            },
        );
        if iteration <= self.cfg.burn_in {
            return;
        }
        self.out.iterations.push(iteration);
        if let Some(t) = theta {
            self.out.params.push(t);
        }
        if self.cfg.store_trajectories {
            self.out.trajectories.push(self.paths.clone());
        }
        self.out.meta.push(meta);
    }

    /// Parameter draw for output only; marginalized sweeps never see it.
    fn emitted_params(&mut self) -> Option<Vec<f64>> {
        if self.cfg.emit_params {
            Some(sample_parameters(self.spec, &self.stats, &mut self.rng))
        } else {
            None
        }
    }

    fn others(&self, l: usize) -> Vec<&DatasetStats> {
        self.stats.iter().filter(|s| s.dataset != l).collect()
    }
}

fn wrap(iteration: usize, datasets: Vec<usize>, e: Error) -> Error {
    Error::Sweep {
        iteration,
        datasets,
        source: Box::new(e),
    }
}

/// Particle Gibbs: parameters from their full conditional, then a
/// conditional SMC sweep per dataset with those parameters fixed.
pub fn run_pg<K: SubmodelKernel>(spec: &MultiSsmSpec, kernels: &[K], cfg: &ChainConfig) -> Result<ChainOutput<K::State>> {
    let (mut chain, theta0) = Chain::start(spec, kernels, cfg)?;
    chain.finish_iteration(1, cfg.emit_params.then_some(theta0));
    for m in 2..=cfg.iterations {
        let theta = sample_parameters(spec, &chain.stats, &mut chain.rng);
        for l in 0..spec.dataset_count() {
            let schedule = Schedule::single(kernels[l].horizon());
            chain.sweep(m, &[l], &schedule, Weighting::Fixed(&theta))?;
        }
        chain.finish_iteration(m, cfg.emit_params.then_some(theta));
    }
    Ok(chain.out)
}

/// Marginalized particle Gibbs, one dataset at a time.
pub fn run_single_mpg<K: SubmodelKernel>(
    spec: &MultiSsmSpec,
    kernels: &[K],
    cfg: &ChainConfig,
) -> Result<ChainOutput<K::State>> {
    let (mut chain, _) = Chain::start(spec, kernels, cfg)?;
    let theta = chain.emitted_params();
    chain.finish_iteration(1, theta);
    for m in 2..=cfg.iterations {
        for l in 0..spec.dataset_count() {
            let base = spec.informed_prior_global(l, &chain.others(l))?;
            let schedule = Schedule::single(kernels[l].horizon());
            chain.sweep(m, &[l], &schedule, Weighting::Marginal(&base))?;
        }
        let theta = chain.emitted_params();
        chain.finish_iteration(m, theta);
    }
    Ok(chain.out)
}

/// Dataset order of a time-stacked sweep at iteration `m` (`m >= 2`).
pub fn sweep_order<R: RngCore>(policy: OrderPolicy, datasets: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..datasets).collect();
    match policy {
        OrderPolicy::Fixed => {}
        OrderPolicy::Rotate => order.rotate_left((m - 2) % datasets.max(1)),
        OrderPolicy::Random => order.shuffle(rng),
    }
    order
}

/// Marginalized particle Gibbs over all datasets concatenated in time.
pub fn run_stacked_time_mpg<K: SubmodelKernel>(
    spec: &MultiSsmSpec,
    kernels: &[K],
    cfg: &ChainConfig,
) -> Result<ChainOutput<K::State>> {
    let (mut chain, _) = Chain::start(spec, kernels, cfg)?;
    let theta = chain.emitted_params();
    chain.finish_iteration(1, theta);
    for m in 2..=cfg.iterations {
        let order = sweep_order(cfg.order_policy, spec.dataset_count(), m, &mut chain.rng);
        let lengths: Vec<usize> = order.iter().map(|&l| kernels[l].horizon()).collect();
        let schedule = Schedule::stacked_time(&lengths);
        chain.sweep(m, &order, &schedule, Weighting::Marginal(spec.priors()))?;
        let theta = chain.emitted_params();
        chain.finish_iteration(m, theta);
    }
    Ok(chain.out)
}

/// Marginalized particle Gibbs over all datasets side by side.
pub fn run_stacked_state_mpg<K: SubmodelKernel>(
    spec: &MultiSsmSpec,
    kernels: &[K],
    cfg: &ChainConfig,
) -> Result<ChainOutput<K::State>> {
    let lengths: Vec<usize> = kernels.iter().map(|k| k.horizon()).collect();
    let offsets = cfg.sync.resolve(&lengths)?;
    let schedule = Schedule::stacked_state(&lengths, &offsets)?;
    let (mut chain, _) = Chain::start(spec, kernels, cfg)?;
    let theta = chain.emitted_params();
    chain.finish_iteration(1, theta);
    let all: Vec<usize> = (0..spec.dataset_count()).collect();
    for m in 2..=cfg.iterations {
        chain.sweep(m, &all, &schedule, Weighting::Marginal(spec.priors()))?;
        let theta = chain.emitted_params();
        chain.finish_iteration(m, theta);
    }
    Ok(chain.out)
}

/// Checks the hub/partner structure required by the hybrid sampler.
pub fn check_hybrid_topology(spec: &MultiSsmSpec, roles: &HybridRoles) -> Result<()> {
    let HybridRoles {
        hub,
        first_partner: a,
        second_partner: b,
    } = *roles;
    if spec.dataset_count() != 3 {
        return Err(Error::Config(format!(
            "hybrid sampler needs exactly 3 datasets, model has {}",
            spec.dataset_count()
        )));
    }
    let mut ids = [hub, a, b];
    ids.sort_unstable();
    if ids != [0, 1, 2] {
        return Err(Error::Config("hybrid roles must name datasets 0, 1 and 2 once each".into()));
    }
    if spec.shared(hub, a).is_empty() || spec.shared(hub, b).is_empty() {
        return Err(Error::Config("hybrid hub must share parameters with both partners".into()));
    }
    if !spec.shared(a, b).is_empty() {
        return Err(Error::Config("hybrid partners must not share parameters".into()));
    }
    Ok(())
}

/// Prior plus the statistics of `conditioned`, folded into the parameters of
/// the pair `(x, y)` only.
pub fn pair_prior(spec: &MultiSsmSpec, pair: [usize; 2], conditioned: &DatasetStats) -> Vec<HyperParams> {
    let mut hyper = spec.priors().to_vec();
    let s = conditioned.stats();
    for k in 0..spec.param_count() {
        if spec.uses(pair[0], k) || spec.uses(pair[1], k) {
            hyper[k] = hyper[k] + s[k];
        }
    }
    hyper
}

/// Hybrid marginalized sampler: each iteration sweeps (first partner, hub)
/// conditioned on the second partner, then (hub, second partner) conditioned
/// on the first partner, each pair stacked in time. With alternation on, the
/// order inside each pair is partner-first at even iterations and hub-first at
/// odd iterations for the first pair, and hub-first at even iterations for the
/// second pair.
pub fn run_hybrid_epidemic_mpg<K: SubmodelKernel>(
    spec: &MultiSsmSpec,
    kernels: &[K],
    cfg: &ChainConfig,
) -> Result<ChainOutput<K::State>> {
    let roles = cfg.hybrid_roles;
    check_hybrid_topology(spec, &roles)?;
    let HybridRoles {
        hub,
        first_partner: p1,
        second_partner: p2,
    } = roles;
    let (mut chain, _) = Chain::start(spec, kernels, cfg)?;
    let theta = chain.emitted_params();
    chain.finish_iteration(1, theta);
    for m in 2..=cfg.iterations {
        let even = cfg.hybrid_order == HybridOrder::Fixed || m % 2 == 0;
        let first = if even { [p1, hub] } else { [hub, p1] };
        let base = pair_prior(spec, [p1, hub], &chain.stats[p2]);
        let schedule = Schedule::stacked_time(&[kernels[first[0]].horizon(), kernels[first[1]].horizon()]);
        chain.sweep(m, &first, &schedule, Weighting::Marginal(&base))?;

        let second = if even { [hub, p2] } else { [p2, hub] };
        let base = pair_prior(spec, [hub, p2], &chain.stats[p1]);
        let schedule = Schedule::stacked_time(&[kernels[second[0]].horizon(), kernels[second[1]].horizon()]);
        chain.sweep(m, &second, &schedule, Weighting::Marginal(&base))?;

        let theta = chain.emitted_params();
        chain.finish_iteration(m, theta);
    }
    Ok(chain.out)
}
