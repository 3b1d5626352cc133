//! Exact inference for the scalar linear-Gaussian model: Kalman filter,
//! forward-filtering backward-sampling, and a Gibbs sampler built on them
//! that serves as ground truth for the particle samplers.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::conjugacy::normal_logpdf;
use crate::error::{Error, Result};
use crate::multissm::{DatasetStats, MultiSsmSpec};
use crate::rng::chain_rng;
use crate::samplers::{sample_parameters, ChainConfig, ChainOutput, IterationMeta};
use crate::smc::path_stats;

use super::lg::LgModel;
use super::LgKernel;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilterOutput {
    /// Filtered means and variances for `t = 0..=T`.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// One-step predictive variances for `t = 1..=T` (index `t - 1`).
    pub predicted_variances: Vec<f64>,
    pub log_likelihood: f64,
}

/// Filter `y_{1:T}` starting from `x_0 ~ N(0, x0_variance)`.
pub fn kalman_filter(
    model: &LgModel,
    phi: f64,
    psi: f64,
    x0_variance: f64,
    observations: &[f64],
) -> Result<KalmanFilterOutput> {
    if !(phi > 0.0 && psi > 0.0 && x0_variance > 0.0) {
        return Err(Error::invalid("variances must be positive"));
    }
    let t_len = observations.len();
    let mut means = Vec::with_capacity(t_len + 1);
    let mut variances = Vec::with_capacity(t_len + 1);
    let mut predicted_variances = Vec::with_capacity(t_len);
    let (mut m, mut p) = (0.0, x0_variance);
    means.push(m);
    variances.push(p);
    let mut ll = 0.0;
    let (a, c) = (model.a, model.c);
    for &y in observations {
        let m_pred = a * m;
        let p_pred = a * a * p + phi;
        let s = c * c * p_pred + psi;
        ll += normal_logpdf(y, c * m_pred, s);
        let gain = p_pred * c / s;
        m = m_pred + gain * (y - c * m_pred);
        p = (1.0 - gain * c) * p_pred;
        means.push(m);
        variances.push(p);
        predicted_variances.push(p_pred);
    }
    Ok(KalmanFilterOutput {
        means,
        variances,
        predicted_variances,
        log_likelihood: ll,
    })
}

/// Backward simulation of `x_{0:T}` from the smoothing distribution.
pub fn sample_smoothed_path<R: Rng + ?Sized>(
    model: &LgModel,
    phi: f64,
    filtered: &KalmanFilterOutput,
    rng: &mut R,
) -> Vec<f64> {
    let t_len = filtered.means.len() - 1;
    let mut path = vec![0.0; t_len + 1];
    let z: f64 = StandardNormal.sample(rng);
    path[t_len] = filtered.means[t_len] + filtered.variances[t_len].sqrt() * z;
    for t in (0..t_len).rev() {
        let (m, p) = (filtered.means[t], filtered.variances[t]);
        let p_pred = filtered.predicted_variances[t];
        let gain = p * model.a / p_pred;
        let mean = m + gain * (path[t + 1] - model.a * m);
        let var = (p * phi / p_pred).max(0.0);
        let z: f64 = StandardNormal.sample(rng);
        path[t] = mean + var.sqrt() * z;
    }
    path
}

/// Gibbs sampler alternating exact path draws and conjugate parameter draws.
///
/// Uses `iterations`, `burn_in`, `seed`, `initial_theta`, `store_trajectories`
/// and `emit_params` from `cfg`; the variant and particle settings are ignored.
pub fn kalman_gibbs_oracle(spec: &MultiSsmSpec, kernels: &[LgKernel], cfg: &ChainConfig) -> Result<ChainOutput<f64>> {
    if cfg.iterations <= cfg.burn_in {
        return Err(Error::Config("iterations must exceed burn-in".into()));
    }
    if kernels.len() != spec.dataset_count() {
        return Err(Error::Dimension {
            expected: spec.dataset_count(),
            got: kernels.len(),
        });
    }
    let mut rng = chain_rng(cfg.seed);
    let theta = match &cfg.initial_theta {
        Some(t) if t.len() == spec.param_count() => t.clone(),
        Some(t) => {
            return Err(Error::Dimension {
                expected: spec.param_count(),
                got: t.len(),
            })
        }
        None => sample_parameters(spec, &[], &mut rng),
    };
    run_oracle(spec, kernels, cfg, theta, &mut rng, ChainOutput::new(spec.names().to_vec()))
}

fn current_stats(spec: &MultiSsmSpec, kernels: &[LgKernel], paths: &[Vec<f64>]) -> Result<Vec<DatasetStats>> {
    paths
        .iter()
        .enumerate()
        .map(|(l, p)| DatasetStats::new(spec, l, path_stats(&kernels[l], p, spec.param_count())))
        .collect()
}

fn draw_paths<R: RngCore>(kernels: &[LgKernel], theta: &[f64], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    kernels
        .iter()
        .map(|k| {
            let f = kalman_filter(&k.model, theta[k.phi], theta[k.psi], k.x0_variance(), k.observations())?;
            Ok(sample_smoothed_path(&k.model, theta[k.phi], &f, rng))
        })
        .collect()
}

fn run_oracle<R: RngCore>(
    spec: &MultiSsmSpec,
    kernels: &[LgKernel],
    cfg: &ChainConfig,
    theta0: Vec<f64>,
    rng: &mut R,
    mut out: ChainOutput<f64>,
) -> Result<ChainOutput<f64>> {
    let mut theta = theta0;
    let mut paths = draw_paths(kernels, &theta, rng)?;
    for m in 1..=cfg.iterations {
        if m > 1 {
            let stats = current_stats(spec, kernels, &paths)?;
            theta = sample_parameters(spec, &stats, rng);
            paths = draw_paths(kernels, &theta, rng)?;
        }
        if m > cfg.burn_in {
            out.iterations.push(m);
            if cfg.emit_params {
                out.params.push(theta.clone());
            }
            if cfg.store_trajectories {
                out.trajectories.push(paths.clone());
            }
            out.meta.push(IterationMeta {
                iteration: m,
                order: (0..kernels.len()).collect(),
                selected: Vec::new(),
                degenerate: false,
            });
        }
    }
    Ok(out)
}
