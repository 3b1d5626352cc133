//! Experiment configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! preset = "lg_shared_phi"   # lg3 | lg_shared_phi | epidemic
//! datasets = 4
//!
//! [data]
//! source = "synthetic"       # or "csv" with `path`
//!
//! [chain]
//! variant = "stacked_state_mpg"
//! particles = 500
//! iterations = 3000
//! burn_in = 300
//!
//! [output]
//! dir = "runs/example"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::conjugacy::{ConjugateFamily, HyperParams};
use crate::multissm::MultiSsmSpec;
use crate::samplers::{ChainConfig, HybridOrder, HybridRoles, OrderPolicy, Variant};
use crate::smc::SyncPolicy;

use super::CliError;

/// Iterations used when the config gives none (reduced budget).
pub const DEFAULT_ITERATIONS: usize = 3000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Option<Preset>,
    /// Dataset count for `lg_shared_phi`.
    pub datasets: Option<usize>,
    pub explicit: Option<ExplicitModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Lg3,
    LgSharedPhi,
    Epidemic,
}

/// Hand-written linear-Gaussian model.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub params: Vec<ExplicitParam>,
    pub datasets: Vec<ExplicitDataset>,
    /// Parameters for synthetic data.
    pub true_theta: Option<Vec<f64>>,
    pub initial_theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitParam {
    pub name: String,
    pub family: ConjugateFamily,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitDataset {
    #[serde(default = "default_kind")]
    pub kind: String,
    pub a: f64,
    pub c: f64,
    /// Parameter names of the process and observation variances.
    pub phi: String,
    pub psi: String,
    pub length: usize,
}

fn default_kind() -> String {
    "lg".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub source: DataSource,
    /// Observation CSV for `source = "csv"`.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    /// Budget used with `--full-budget`.
    pub full_iterations: Option<usize>,
    pub full_burn_in: Option<usize>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    pub particles_per_dataset: Option<Vec<usize>>,
    #[serde(default)]
    pub order_policy: OrderPolicy,
    #[serde(default = "default_sync")]
    pub sync: SyncPolicy,
    #[serde(default)]
    pub hybrid_order: HybridOrder,
    pub hybrid_roles: Option<HybridRoles>,
    #[serde(default = "yes")]
    pub emit_params: bool,
    #[serde(default)]
    pub store_trajectories: bool,
    pub initial_theta: Option<Vec<f64>>,
    pub init_attempts: Option<usize>,
}

fn default_variant() -> Variant {
    Variant::SingleMpg
}
fn default_particles() -> usize {
    100
}
fn default_sync() -> SyncPolicy {
    SyncPolicy::Left
}
fn yes() -> bool {
    true
}

impl Default for ChainSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// What the model block resolves to.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Lg3,
    LgSharedPhi(usize),
    Epidemic,
    Explicit,
}

impl ModelChoice {
    pub fn label(&self) -> String {
        match self {
            ModelChoice::Lg3 => "lg3".into(),
            ModelChoice::LgSharedPhi(l) => format!("lg_shared_phi{l}"),
            ModelChoice::Epidemic => "epidemic".into(),
            ModelChoice::Explicit => "explicit".into(),
        }
    }

    fn full_budget_default(&self) -> (usize, usize) {
        match self {
            ModelChoice::LgSharedPhi(_) => (15000, 1500),
            ModelChoice::Epidemic => (5000, 500),
            _ => (20000, 2000),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Relative data paths are relative to the config file.
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.data.path = Some(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn model_choice(&self) -> Result<ModelChoice, CliError> {
        match (&self.model.preset, &self.model.explicit) {
            (Some(_), Some(_)) => Err(CliError::Config("model: give either a preset or an explicit model, not both".into())),
            (None, None) => Err(CliError::Config("model: a preset or an explicit model is required".into())),
            (None, Some(_)) => Ok(ModelChoice::Explicit),
            (Some(p), None) => {
                if self.model.datasets.is_some() && *p != Preset::LgSharedPhi {
                    return Err(CliError::Config("model.datasets only applies to lg_shared_phi".into()));
                }
                Ok(match p {
                    Preset::Lg3 => ModelChoice::Lg3,
                    Preset::Epidemic => ModelChoice::Epidemic,
                    Preset::LgSharedPhi => {
                        let l = self.model.datasets.ok_or_else(|| {
                            CliError::Config("model.datasets is required for lg_shared_phi".into())
                        })?;
                        if l == 0 {
                            return Err(CliError::Config("model.datasets must be at least 1".into()));
                        }
                        ModelChoice::LgSharedPhi(l)
                    }
                })
            }
        }
    }

    /// Chain settings for chain `index`; the sampler seed is `seed + index`.
    pub fn chain_config(
        &self,
        seed: u64,
        index: usize,
        full_budget: bool,
        default_initial: &[f64],
    ) -> Result<ChainConfig, CliError> {
        let c = &self.chain;
        let choice = self.model_choice()?;
        let (iterations, burn_in) = if full_budget {
            let (m, b) = choice.full_budget_default();
            (c.full_iterations.unwrap_or(m), c.full_burn_in.unwrap_or(b))
        } else {
            let m = c.iterations.unwrap_or(DEFAULT_ITERATIONS);
            (m, c.burn_in.unwrap_or(m / 10))
        };
        if c.variant == Variant::HybridEpidemic && choice != ModelChoice::Epidemic {
            return Err(CliError::Config("the hybrid sampler requires the epidemic model".into()));
        }
        let mut cfg = ChainConfig::new(c.variant, iterations, burn_in, c.particles, seed.wrapping_add(index as u64));
        cfg.particles_per_dataset = c.particles_per_dataset.clone();
        cfg.order_policy = c.order_policy;
        cfg.sync = c.sync.clone();
        cfg.hybrid_order = c.hybrid_order;
        if let Some(r) = c.hybrid_roles {
            cfg.hybrid_roles = r;
        }
        cfg.emit_params = c.emit_params;
        cfg.store_trajectories = c.store_trajectories;
        cfg.initial_theta = Some(c.initial_theta.clone().unwrap_or_else(|| default_initial.to_vec()));
        if let Some(a) = c.init_attempts {
            cfg.init_attempts = a;
        }
        Ok(cfg)
    }
}

impl ExplicitModel {
    pub fn spec(&self) -> Result<(MultiSsmSpec, Vec<(usize, usize)>), CliError> {
        let names: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        let index = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| CliError::Config(format!("unknown parameter {n}")))
        };
        let mut sets = Vec::new();
        let mut bindings = Vec::new();
        for (l, d) in self.datasets.iter().enumerate() {
            if d.kind != "lg" {
                return Err(CliError::Config(format!(
                    "dataset {l}: explicit models support kind = \"lg\" only, got {}",
                    d.kind
                )));
            }
            let (phi, psi) = (index(&d.phi)?, index(&d.psi)?);
            if phi == psi {
                return Err(CliError::Config(format!("dataset {l}: phi and psi must differ")));
            }
            for k in [phi, psi] {
                if self.params[k].family != ConjugateFamily::NormalVarianceInvGamma {
                    return Err(CliError::Config(format!(
                        "parameter {} must use the normal_variance_inv_gamma family",
                        names[k]
                    )));
                }
            }
            sets.push(vec![phi, psi]);
            bindings.push((phi, psi));
        }
        let priors = self
            .params
            .iter()
            .map(|p| HyperParams::new(p.alpha, p.beta))
            .collect::<crate::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let spec = MultiSsmSpec::new(
            sets,
            self.params.iter().map(|p| p.family).collect(),
            priors,
            names,
            vec!["lg".into(); self.datasets.len()],
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((spec, bindings))
    }
}
