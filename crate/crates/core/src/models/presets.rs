//! Ready-made multi-dataset problems used by the CLI, the tests and the
//! benchmark runs.

use rand::Rng;

use crate::conjugacy::{beta_mode_match, ConjugateFamily, HyperParams};
use crate::error::{Error, Result};
use crate::multissm::MultiSsmSpec;
use crate::rng::chain_rng;
use crate::samplers::sample_parameters;
use crate::smc::SubmodelKernel;

use super::epidemic::{epidemic_simulate, EpidemicBindings, EpidemicKernel, EpidemicModel, EpidemicState, OutbreakKind};
use super::lg::{lg_simulate, LgKernel, LgModel};

/// Model, data and (for synthetic data) the truth behind it.
#[derive(Debug, Clone)]
pub struct Problem<K: SubmodelKernel> {
    pub spec: MultiSsmSpec,
    pub kernels: Vec<K>,
    /// Parameters the data were simulated with; empty for external data.
    pub true_theta: Vec<f64>,
    /// Simulated state paths; empty for external data.
    pub states: Vec<Vec<K::State>>,
    /// Suggested starting parameters for the initial particle filter.
    pub initial_theta: Vec<f64>,
}

impl<K: SubmodelKernel + Clone> Problem<K> {
    /// Keep only the listed datasets. Parameter indexing is unchanged;
    /// parameters no kept dataset uses stay at their prior.
    pub fn subset(&self, datasets: &[usize]) -> Result<Self> {
        let spec = MultiSsmSpec::new(
            datasets.iter().map(|&l| self.spec.index_set(l).to_vec()).collect(),
            self.spec.families().to_vec(),
            self.spec.priors().to_vec(),
            self.spec.names().to_vec(),
            datasets.iter().map(|&l| self.spec.model_ref(l).to_string()).collect(),
        )?;
        Ok(Problem {
            spec,
            kernels: datasets.iter().map(|&l| self.kernels[l].clone()).collect(),
            true_theta: self.true_theta.clone(),
            states: if self.states.is_empty() {
                Vec::new()
            } else {
                datasets.iter().map(|&l| self.states[l].clone()).collect()
            },
            initial_theta: self.initial_theta.clone(),
        })
    }
}

pub const LG_A: f64 = 0.9;
pub const LG_C: f64 = 1.0;

/// Layout of an LG problem: spec, `(phi, psi)` index pairs and lengths.
#[derive(Debug, Clone)]
pub struct LgLayout {
    pub spec: MultiSsmSpec,
    pub bindings: Vec<(usize, usize)>,
    pub lengths: Vec<usize>,
    pub initial_theta: Vec<f64>,
}

impl LgLayout {
    pub fn kernels(&self, observations: Vec<Vec<f64>>) -> Result<Vec<LgKernel>> {
        if observations.len() != self.bindings.len() {
            return Err(Error::Config(format!(
                "{} observation series for {} datasets",
                observations.len(),
                self.bindings.len()
            )));
        }
        let model = LgModel::new(LG_A, LG_C)?;
        observations
            .into_iter()
            .zip(&self.bindings)
            .map(|(y, &(phi, psi))| LgKernel::new(model, phi, psi, y))
            .collect()
    }

    /// Simulate every dataset and bind the kernels.
    pub fn simulate<R: Rng>(&self, theta: &[f64], rng: &mut R) -> Result<Problem<LgKernel>> {
        let model = LgModel::new(LG_A, LG_C)?;
        let mut states = Vec::new();
        let mut obs = Vec::new();
        for (&(phi, psi), &t_len) in self.bindings.iter().zip(&self.lengths) {
            let (xs, ys) = lg_simulate(&model, theta[phi], theta[psi], t_len, rng)?;
            states.push(xs);
            obs.push(ys);
        }
        Ok(Problem {
            spec: self.spec.clone(),
            kernels: self.kernels(obs)?,
            true_theta: theta.to_vec(),
            states,
            initial_theta: self.initial_theta.clone(),
        })
    }
}

/// Three datasets, four variances: datasets 1 and 2 share the process
/// variance `phi1`, datasets 1 and 3 share the observation variance `psi1`.
pub fn lg3_layout() -> LgLayout {
    let prior = HyperParams { alpha: 0.01, beta: 0.01 };
    let spec = MultiSsmSpec::new(
        vec![vec![0, 2], vec![0, 3], vec![1, 2]],
        vec![ConjugateFamily::NormalVarianceInvGamma; 4],
        vec![prior; 4],
        ["phi1", "phi2", "psi1", "psi2"].map(String::from).to_vec(),
        vec!["lg".into(); 3],
    )
    .expect("static layout");
    LgLayout {
        spec,
        bindings: vec![(0, 2), (0, 3), (1, 2)],
        lengths: vec![30, 50, 40],
        initial_theta: vec![1.0, 0.1, 3.0, 0.1],
    }
}

pub const LG3_TRUE_THETA: [f64; 4] = [0.1, 1.0, 2.0, 1.0];

pub fn lg3(seed: u64) -> Result<Problem<LgKernel>> {
    lg3_layout().simulate(&LG3_TRUE_THETA, &mut chain_rng(seed))
}

/// `datasets` series with one shared process variance and their own
/// observation variances.
pub fn lg_shared_phi_layout(datasets: usize) -> Result<LgLayout> {
    if datasets == 0 {
        return Err(Error::Config("at least one dataset required".into()));
    }
    let prior = HyperParams { alpha: 1.5, beta: 0.5 };
    let mut names = vec!["phi".to_string()];
    names.extend((1..=datasets).map(|l| format!("psi{l}")));
    let spec = MultiSsmSpec::new(
        (0..datasets).map(|l| vec![0, l + 1]).collect(),
        vec![ConjugateFamily::NormalVarianceInvGamma; datasets + 1],
        vec![prior; datasets + 1],
        names,
        vec!["lg".into(); datasets],
    )?;
    Ok(LgLayout {
        spec,
        bindings: (0..datasets).map(|l| (0, l + 1)).collect(),
        lengths: vec![30; datasets],
        initial_theta: vec![5.0; datasets + 1],
    })
}

/// Shared-variance problem with `phi = 0.1` and `psi_l = 1 + 2u`.
pub fn lg_shared_phi(datasets: usize, seed: u64) -> Result<Problem<LgKernel>> {
    let layout = lg_shared_phi_layout(datasets)?;
    let mut rng = chain_rng(seed);
    let mut theta = vec![0.1];
    theta.extend((0..datasets).map(|_| 1.0 + 2.0 * rng.random::<f64>()));
    layout.simulate(&theta, &mut rng)
}

/// Outbreak layout: dengue on Yap, dengue on Fais, Zika on Yap.
#[derive(Debug, Clone)]
pub struct EpidemicLayout {
    pub spec: MultiSsmSpec,
    pub models: Vec<EpidemicModel>,
    pub bindings: Vec<EpidemicBindings>,
    /// Days simulated per outbreak.
    pub days: Vec<usize>,
}

pub const DENGUE_YAP: usize = 0;
pub const DENGUE_FAIS: usize = 1;
pub const ZIKA_YAP: usize = 2;

fn disease_bindings(offset: usize, bite: usize, report: usize) -> EpidemicBindings {
    EpidemicBindings {
        lambda_h: offset,
        lambda_m: offset + 1,
        delta_h: offset + 2,
        delta_m: offset + 3,
        gamma_h: offset + 4,
        bite,
        report,
    }
}

/// Synthetic small-population version of the three-outbreak problem.
///
/// Parameters: `lambda_h, lambda_m, delta_h, delta_m, gamma_h` for dengue
/// (0..5) and Zika (5..10), bite rates on Yap (10) and Fais (11), and one
/// reporting probability per outbreak (12..15).
pub fn epidemic_layout() -> EpidemicLayout {
    let near_uniform = HyperParams { alpha: 1.05, beta: 1.05 };
    let disease = [
        near_uniform,
        HyperParams { alpha: 1.1, beta: 1.1 },
        beta_mode_match(4.4).expect("valid"),
        beta_mode_match(6.5).expect("valid"),
        beta_mode_match(4.5).expect("valid"),
    ];
    let mut priors = Vec::with_capacity(15);
    priors.extend_from_slice(&disease);
    priors.extend_from_slice(&disease);
    priors.push(HyperParams { alpha: 1.2, beta: 1.0 });
    priors.push(HyperParams { alpha: 3.0, beta: 1.0 });
    priors.extend([near_uniform; 3]);
    let mut families = vec![ConjugateFamily::BinomialBeta; 15];
    families[10] = ConjugateFamily::PoissonGamma;
    families[11] = ConjugateFamily::PoissonGamma;
    let mut names = Vec::new();
    for d in ["dengue", "zika"] {
        for p in ["lambda_h", "lambda_m", "delta_h", "delta_m", "gamma_h"] {
            names.push(format!("{p}_{d}"));
        }
    }
    names.extend(["b_yap", "b_fais", "rho_dengue_yap", "rho_dengue_fais", "rho_zika_yap"].map(String::from));
    let bindings = vec![
        disease_bindings(0, 10, 12),
        disease_bindings(0, 11, 13),
        disease_bindings(5, 10, 14),
    ];
    let spec = MultiSsmSpec::new(
        bindings.iter().map(|b| b.indices().to_vec()).collect(),
        families,
        priors,
        names,
        vec!["epidemic".into(); 3],
    )
    .expect("static layout");
    let models = vec![
        EpidemicModel::new(300, 10.0, 1, OutbreakKind::DengueYap).expect("valid"),
        EpidemicModel::new(100, 10.0, 1, OutbreakKind::DengueFais).expect("valid"),
        EpidemicModel::new(300, 10.0, 7, OutbreakKind::ZikaYap).expect("valid"),
    ];
    EpidemicLayout {
        spec,
        models,
        bindings,
        days: vec![40, 40, 42],
    }
}

impl EpidemicLayout {
    pub fn kernels(&self, reports: Vec<Vec<u64>>) -> Result<Vec<EpidemicKernel>> {
        if reports.len() != self.models.len() {
            return Err(Error::Config(format!(
                "{} report series for {} outbreaks",
                reports.len(),
                self.models.len()
            )));
        }
        reports
            .into_iter()
            .zip(self.models.iter().zip(&self.bindings))
            .map(|(y, (m, b))| EpidemicKernel::new(*m, *b, y))
            .collect()
    }

    /// Prior means, used to start the chains.
    pub fn prior_means(&self) -> Vec<f64> {
        self.spec
            .priors()
            .iter()
            .zip(self.spec.families())
            .map(|(h, f)| match f {
                ConjugateFamily::BinomialBeta => h.alpha / (h.alpha + h.beta),
                ConjugateFamily::PoissonGamma => h.alpha / h.beta,
                ConjugateFamily::NormalVarianceInvGamma => h.beta / (h.alpha - 1.0),
            })
            .collect()
    }

    pub fn simulate<R: Rng>(&self, theta: &[f64], rng: &mut R) -> Result<Problem<EpidemicKernel>> {
        let mut states: Vec<Vec<EpidemicState>> = Vec::new();
        let mut reports = Vec::new();
        for ((m, b), &days) in self.models.iter().zip(&self.bindings).zip(&self.days) {
            let (xs, ys) = epidemic_simulate(m, b, theta, days, rng)?;
            states.push(xs);
            reports.push(ys);
        }
        Ok(Problem {
            spec: self.spec.clone(),
            kernels: self.kernels(reports)?,
            true_theta: theta.to_vec(),
            states,
            initial_theta: self.prior_means(),
        })
    }
}

/// Synthetic outbreaks with parameters drawn from the prior.
pub fn epidemic(seed: u64) -> Result<Problem<EpidemicKernel>> {
    let layout = epidemic_layout();
    let mut rng = chain_rng(seed);
    let theta = sample_parameters(&layout.spec, &[], &mut rng);
    layout.simulate(&theta, &mut rng)
}
