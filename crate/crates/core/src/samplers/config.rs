use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smc::SyncPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Particle Gibbs: alternate parameter draws and conditional SMC.
    Pg,
    /// One dataset at a time with parameters integrated out.
    SingleMpg,
    /// All datasets in one sweep, concatenated along time.
    StackedTimeMpg,
    /// All datasets in one sweep, side by side in the state.
    StackedStateMpg,
    /// Two overlapping dataset pairs, each swept stacked in time.
    HybridEpidemic,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Pg => "pg",
            Variant::SingleMpg => "single_mpg",
            Variant::StackedTimeMpg => "stacked_time_mpg",
            Variant::StackedStateMpg => "stacked_state_mpg",
            Variant::HybridEpidemic => "hybrid_epidemic",
        }
    }

    pub fn is_marginalized(&self) -> bool {
        !matches!(self, Variant::Pg)
    }
}

/// Dataset order of a time-stacked sweep across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    Fixed,
    /// Move the first dataset to the end after every iteration.
    #[default]
    Rotate,
    /// Fresh uniform permutation every iteration.
    Random,
}

/// Order inside the two pair sweeps of the hybrid sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HybridOrder {
    /// Flip the order with the parity of the iteration.
    #[default]
    Alternate,
    /// Partner first, then the hub, every iteration.
    Fixed,
}

/// Dataset roles in the hybrid sampler: the hub shares parameters with both
/// partners, the partners share nothing with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridRoles {
    pub hub: usize,
    /// Swept with the hub first in each iteration.
    pub first_partner: usize,
    /// Swept with the hub second, after the hub has been refreshed.
    pub second_partner: usize,
}

impl Default for HybridRoles {
    fn default() -> Self {
        HybridRoles {
            hub: 0,
            first_partner: 1,
            second_partner: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub variant: Variant,
    /// Total iterations, the initialization included.
    pub iterations: usize,
    pub burn_in: usize,
    pub particles: usize,
    /// Per-dataset particle counts for samplers that sweep one dataset at a time.
    pub particles_per_dataset: Option<Vec<usize>>,
    pub seed: u64,
    pub order_policy: OrderPolicy,
    pub sync: SyncPolicy,
    pub hybrid_order: HybridOrder,
    pub hybrid_roles: HybridRoles,
    /// Record parameter draws for every stored iteration.
    pub emit_params: bool,
    /// Record state paths for every stored iteration.
    pub store_trajectories: bool,
    /// Parameters for the initial particle filter; drawn from the prior if absent.
    pub initial_theta: Option<Vec<f64>>,
    /// Number of initial particle filters tried before giving up.
    pub init_attempts: usize,
}

impl ChainConfig {
    pub fn new(variant: Variant, iterations: usize, burn_in: usize, particles: usize, seed: u64) -> Self {
        ChainConfig {
            variant,
            iterations,
            burn_in,
            particles,
            particles_per_dataset: None,
            seed,
            order_policy: OrderPolicy::Rotate,
            sync: SyncPolicy::Left,
            hybrid_order: HybridOrder::Alternate,
            hybrid_roles: HybridRoles::default(),
            emit_params: true,
            store_trajectories: false,
            initial_theta: None,
            init_attempts: 50,
        }
    }

    pub fn validate(&self, datasets: usize, params: usize) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.particles == 0 {
            return Err(Error::Config("particle count must be at least 1".into()));
        }
        if self.init_attempts == 0 {
            return Err(Error::Config("at least one initialization attempt is required".into()));
        }
        if let Some(per) = &self.particles_per_dataset {
            if per.len() != datasets {
                return Err(Error::Config(format!("{} particle counts for {datasets} datasets", per.len())));
            }
            if per.contains(&0) {
                return Err(Error::Config("particle count must be at least 1".into()));
            }
        }
        if let Some(theta) = &self.initial_theta {
            if theta.len() != params {
                return Err(Error::Config(format!("initial parameters have {} entries, model has {params}", theta.len())));
            }
        }
        Ok(())
    }

    pub fn particles_for(&self, dataset: usize) -> usize {
        self.particles_per_dataset
            .as_ref()
            .map_or(self.particles, |p| p[dataset])
    }
}
