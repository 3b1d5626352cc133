//! The three subcommands.
//!
//! Output files (all CSV with a header row):
//!
//! * `simulate`: `observations.csv` (dataset_id, t, y), `truth.csv`
//!   (dataset_id, t, state columns...) and `provenance.json`.
//! * `run`: `samples.csv` (iteration, param, value), optionally
//!   `trajectories.csv` (iteration, dataset_id, t, state columns...), the
//!   run manifest `manifest.json` and `run_timing.json`. With several chains
//!   the CSV names get a `_chain{k}` suffix.
//! * `diagnose`: `diagnostics.csv` (file, param, metric, lag, value) and
//!   `histograms.csv` (file, param, bin, lower, upper, count).
//!
//! Wall-clock time lives in its own file so that everything else is a pure
//! function of the config and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::diagnostics::{acf, improvement_factor, summarize, DEFAULT_IACT_CAP};
use crate::models::presets::{epidemic, epidemic_layout, lg3, lg3_layout, lg_shared_phi, lg_shared_phi_layout, LgLayout, Problem};
use crate::models::{EpidemicKernel, LgKernel, StateColumns};
use crate::rng::chain_rng;
use crate::samplers::{run_chain, ChainOutput};
use crate::smc::SubmodelKernel;

use super::config::{DataSource, ExperimentConfig, ModelChoice};
use super::io::{csv_writer, finish, fmt_f64, io_err, read_observations, read_samples, write_json, write_row};
use super::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Synthetic data use their own stream, derived from the config seed.
const DATA_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn data_seed(seed: u64) -> u64 {
    seed ^ DATA_SEED_SALT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Clean,
    /// Finished, but some iterations (or whole chains) hit weight collapse.
    Degenerate,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub chains: usize,
    pub full_budget: bool,
    /// Observation file overriding the configured data source.
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct DiagnoseOptions {
    pub baseline: Option<PathBuf>,
    pub method: Option<PathBuf>,
    pub max_lag: usize,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            baseline: None,
            method: None,
            max_lag: 50,
        }
    }
}

/// Kernels the CLI can read and write observations for.
trait DataKernel: SubmodelKernel<State: StateColumns> + Clone {
    /// `(t, y)` rows of the observation file.
    fn observation_rows(&self) -> Vec<(usize, String)>;
}

impl DataKernel for LgKernel {
    fn observation_rows(&self) -> Vec<(usize, String)> {
        self.observations().iter().enumerate().map(|(t, y)| (t + 1, fmt_f64(*y))).collect()
    }
}

impl DataKernel for EpidemicKernel {
    fn observation_rows(&self) -> Vec<(usize, String)> {
        let l = self.model.interval;
        self.reports().iter().enumerate().map(|(j, y)| ((j + 1) * l, y.to_string())).collect()
    }
}

enum Loaded {
    Lg(Problem<LgKernel>),
    Epidemic(Problem<EpidemicKernel>),
}

fn lg_layout(cfg: &ExperimentConfig, choice: &ModelChoice) -> Result<LgLayout, CliError> {
    match choice {
        ModelChoice::Lg3 => Ok(lg3_layout()),
        ModelChoice::LgSharedPhi(l) => Ok(lg_shared_phi_layout(*l)?),
        ModelChoice::Explicit => {
            let ex = cfg.model.explicit.as_ref().expect("explicit choice");
            let (spec, bindings) = ex.spec()?;
            // Prior modes are always defined, unlike the means.
            let initial_theta = ex
                .initial_theta
                .clone()
                .unwrap_or_else(|| spec.priors().iter().map(|h| h.beta / (h.alpha + 1.0)).collect());
            Ok(LgLayout {
                spec,
                bindings,
                lengths: ex.datasets.iter().map(|d| d.length).collect(),
                initial_theta,
            })
        }
        ModelChoice::Epidemic => unreachable!("not an LG model"),
    }
}

fn synthetic(cfg: &ExperimentConfig) -> Result<Loaded, CliError> {
    let choice = cfg.model_choice()?;
    let seed = data_seed(cfg.seed);
    Ok(match choice {
        ModelChoice::Lg3 => Loaded::Lg(lg3(seed)?),
        ModelChoice::LgSharedPhi(l) => Loaded::Lg(lg_shared_phi(l, seed)?),
        ModelChoice::Epidemic => Loaded::Epidemic(epidemic(seed)?),
        ModelChoice::Explicit => {
            let layout = lg_layout(cfg, &choice)?;
            let ex = cfg.model.explicit.as_ref().expect("explicit choice");
            let theta = ex
                .true_theta
                .as_ref()
                .ok_or_else(|| CliError::Config("model.explicit.true_theta is required for synthetic data".into()))?;
            if theta.len() != layout.spec.param_count() {
                return Err(CliError::Config(format!(
                    "true_theta has {} values for {} parameters",
                    theta.len(),
                    layout.spec.param_count()
                )));
            }
            Loaded::Lg(layout.simulate(theta, &mut chain_rng(seed))?)
        }
    })
}

fn from_csv(cfg: &ExperimentConfig, path: &Path) -> Result<Loaded, CliError> {
    let choice = cfg.model_choice()?;
    let obs = read_observations(path)?;
    let expected = match &choice {
        ModelChoice::Epidemic => 3,
        c => lg_layout(cfg, c)?.spec.dataset_count(),
    };
    if obs.keys().copied().ne(0..expected) {
        return Err(CliError::Config(format!(
            "{}: expected dataset ids 0..{expected}, found {:?}",
            path.display(),
            obs.keys().collect::<Vec<_>>()
        )));
    }
    let bad_times = |d: usize| CliError::Config(format!("{}: dataset {d} has gaps in t", path.display()));
    match choice {
        ModelChoice::Epidemic => {
            let layout = epidemic_layout();
            let mut reports = Vec::new();
            for (d, rows) in &obs {
                let interval = layout.models[*d].interval;
                let mut ys = Vec::new();
                for (j, &(t, y)) in rows.iter().enumerate() {
                    if t != (j + 1) * interval {
                        return Err(bad_times(*d));
                    }
                    if y < 0.0 || y.fract() != 0.0 {
                        return Err(CliError::Config(format!(
                            "{}: dataset {d}, t = {t}: counts must be nonnegative integers",
                            path.display()
                        )));
                    }
                    ys.push(y as u64);
                }
                reports.push(ys);
            }
            Ok(Loaded::Epidemic(Problem {
                spec: layout.spec.clone(),
                kernels: layout.kernels(reports)?,
                true_theta: Vec::new(),
                states: Vec::new(),
                initial_theta: layout.prior_means(),
            }))
        }
        c => {
            let layout = lg_layout(cfg, &c)?;
            let mut series = Vec::new();
            for (d, rows) in &obs {
                if rows.iter().enumerate().any(|(j, r)| r.0 != j + 1) {
                    return Err(bad_times(*d));
                }
                series.push(rows.iter().map(|r| r.1).collect());
            }
            Ok(Loaded::Lg(Problem {
                spec: layout.spec.clone(),
                kernels: layout.kernels(series)?,
                true_theta: Vec::new(),
                states: Vec::new(),
                initial_theta: layout.initial_theta.clone(),
            }))
        }
    }
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

#[derive(Serialize)]
struct Provenance<'a> {
    schema_version: u32,
    model: String,
    seed: u64,
    data_seed: u64,
    params: &'a [String],
    /// Stringified with 17 significant digits.
    true_theta: Vec<String>,
}

fn write_data<K: DataKernel>(problem: &Problem<K>, out: &Path) -> Result<(), CliError>
where
    K::State: StateColumns,
{
    let path = out.join("observations.csv");
    let mut w = csv_writer(&path)?;
    write_row(&mut w, &path, &["dataset_id".into(), "t".into(), "y".into()])?;
    for (d, k) in problem.kernels.iter().enumerate() {
        for (t, y) in k.observation_rows() {
            write_row(&mut w, &path, &[d.to_string(), t.to_string(), y])?;
        }
    }
    finish(w, &path)?;

    let path = out.join("truth.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["dataset_id".to_string(), "t".to_string()];
    header.extend(K::State::columns().into_iter().map(String::from));
    write_row(&mut w, &path, &header)?;
    for (d, xs) in problem.states.iter().enumerate() {
        for (t, x) in xs.iter().enumerate() {
            let mut row = vec![d.to_string(), t.to_string()];
            row.extend(x.values().into_iter().map(fmt_f64));
            write_row(&mut w, &path, &row)?;
        }
    }
    finish(w, &path)
}

/// Generate synthetic data for the configured model.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    if cfg.data.source != DataSource::Synthetic {
        return Err(CliError::Config("simulate needs data.source = \"synthetic\"".into()));
    }
    let choice = cfg.model_choice()?;
    let loaded = synthetic(cfg)?;
    create_dir(out)?;
    let (names, theta) = match &loaded {
        Loaded::Lg(p) => {
            write_data(p, out)?;
            (p.spec.names().to_vec(), p.true_theta.clone())
        }
        Loaded::Epidemic(p) => {
            write_data(p, out)?;
            (p.spec.names().to_vec(), p.true_theta.clone())
        }
    };
    write_json(
        &out.join("provenance.json"),
        &Provenance {
            schema_version: MANIFEST_SCHEMA_VERSION,
            model: choice.label(),
            seed: cfg.seed,
            data_seed: data_seed(cfg.seed),
            params: &names,
            true_theta: theta.into_iter().map(fmt_f64).collect(),
        },
    )?;
    info!("wrote synthetic data to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct EventRecord {
    iteration: usize,
    datasets: Vec<usize>,
    message: String,
}

#[derive(Serialize)]
struct ChainRecord {
    chain: usize,
    seed: u64,
    samples_file: Option<String>,
    trajectories_file: Option<String>,
    stored_iterations: usize,
    degenerate_iterations: usize,
    degeneracy_events: Vec<EventRecord>,
    /// Set when the chain stopped without output.
    error: Option<String>,
}

#[derive(Serialize)]
struct Manifest {
    schema_version: u32,
    model: String,
    variant: &'static str,
    particles: usize,
    particles_per_dataset: Option<Vec<usize>>,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    data: String,
    status: &'static str,
    chains: Vec<ChainRecord>,
}

#[derive(Serialize)]
struct Timing {
    wall_seconds: f64,
    chain_seconds: Vec<f64>,
}

fn suffix(chains: usize, k: usize) -> String {
    if chains > 1 {
        format!("_chain{k}")
    } else {
        String::new()
    }
}

fn write_samples<S>(out: &ChainOutput<S>, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, &["iteration".into(), "param".into(), "value".into()])?;
    for (m, theta) in out.iterations.iter().zip(&out.params) {
        for (name, v) in out.param_names.iter().zip(theta) {
            write_row(&mut w, path, &[m.to_string(), name.clone(), fmt_f64(*v)])?;
        }
    }
    finish(w, path)
}

fn write_trajectories<S: StateColumns>(out: &ChainOutput<S>, path: &Path) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["iteration".to_string(), "dataset_id".to_string(), "t".to_string()];
    header.extend(S::columns().into_iter().map(String::from));
    write_row(&mut w, path, &header)?;
    for (m, paths) in out.iterations.iter().zip(&out.trajectories) {
        for (d, xs) in paths.iter().enumerate() {
            for (t, x) in xs.iter().enumerate() {
                let mut row = vec![m.to_string(), d.to_string(), t.to_string()];
                row.extend(x.values().into_iter().map(fmt_f64));
                write_row(&mut w, path, &row)?;
            }
        }
    }
    finish(w, path)
}

fn run_problem<K: DataKernel>(
    cfg: &ExperimentConfig,
    problem: &Problem<K>,
    data_label: String,
    out: &Path,
    opts: &RunOptions,
) -> Result<RunStatus, CliError>
where
    K::State: StateColumns,
{
    let chains = opts.chains.max(1);
    let configs = (0..chains)
        .map(|k| cfg.chain_config(cfg.seed, k, opts.full_budget, &problem.initial_theta))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &configs {
        c.validate(problem.spec.dataset_count(), problem.spec.param_count())?;
    }
    create_dir(out)?;

    let start = Instant::now();
    let results: Vec<(crate::Result<ChainOutput<K::State>>, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| {
                s.spawn(move || {
                    let t0 = Instant::now();
                    let r = run_chain(&problem.spec, &problem.kernels, c);
                    (r, t0.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let wall = start.elapsed().as_secs_f64();

    let mut status = RunStatus::Clean;
    let mut records = Vec::new();
    let mut chain_seconds = Vec::new();
    for (k, ((result, secs), c)) in results.into_iter().zip(&configs).enumerate() {
        chain_seconds.push(secs);
        let sfx = suffix(chains, k);
        match result {
            Ok(output) => {
                let samples = format!("samples{sfx}.csv");
                write_samples(&output, &out.join(&samples))?;
                let trajectories = if c.store_trajectories {
                    let name = format!("trajectories{sfx}.csv");
                    write_trajectories(&output, &out.join(&name))?;
                    Some(name)
                } else {
                    None
                };
                let degenerate_iterations = output.meta.iter().filter(|m| m.degenerate).count();
                // Failed initial filters that a retry recovered are listed in the
                // manifest but do not degrade the run.
                if output.degeneracy.iter().any(|e| e.iteration > 1) {
                    status = RunStatus::Degenerate;
                    warn!("chain {k}: {} degeneracy events", output.degeneracy.len());
                }
                records.push(ChainRecord {
                    chain: k,
                    seed: c.seed,
                    samples_file: Some(samples),
                    trajectories_file: trajectories,
                    stored_iterations: output.stored(),
                    degenerate_iterations,
                    degeneracy_events: output
                        .degeneracy
                        .iter()
                        .map(|e| EventRecord {
                            iteration: e.iteration,
                            datasets: e.datasets.clone(),
                            message: e.message.clone(),
                        })
                        .collect(),
                    error: None,
                });
            }
            Err(e) if e.is_degeneracy() => {
                warn!("chain {k} failed: {e}");
                status = RunStatus::Degenerate;
                records.push(ChainRecord {
                    chain: k,
                    seed: c.seed,
                    samples_file: None,
                    trajectories_file: None,
                    stored_iterations: 0,
                    degenerate_iterations: 0,
                    degeneracy_events: Vec::new(),
                    error: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }

    let c0 = &configs[0];
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            model: cfg.model_choice()?.label(),
            variant: c0.variant.label(),
            particles: c0.particles,
            particles_per_dataset: c0.particles_per_dataset.clone(),
            iterations: c0.iterations,
            burn_in: c0.burn_in,
            seed: cfg.seed,
            data: data_label,
            status: match status {
                RunStatus::Clean => "clean",
                RunStatus::Degenerate => "degenerate",
            },
            chains: records,
        },
    )?;
    write_json(
        &out.join("run_timing.json"),
        &Timing {
            wall_seconds: wall,
            chain_seconds,
        },
    )?;
    Ok(status)
}

/// Run the configured sampler on the configured (or given) data.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<RunStatus, CliError> {
    let csv_path = match (&opts.data, cfg.data.source) {
        (Some(p), _) => Some(p.clone()),
        (None, DataSource::Csv) => Some(
            cfg.data
                .path
                .clone()
                .ok_or_else(|| CliError::Config("data.source = \"csv\" needs data.path".into()))?,
        ),
        (None, DataSource::Synthetic) => None,
    };
    // Reject bad chain settings before loading or simulating anything.
    cfg.chain_config(cfg.seed, 0, opts.full_budget, &[])?;
    let (loaded, label) = match &csv_path {
        Some(p) => (from_csv(cfg, p)?, format!("csv:{}", p.display())),
        None => (synthetic(cfg)?, format!("synthetic:{}", data_seed(cfg.seed))),
    };
    match &loaded {
        Loaded::Lg(p) => run_problem(cfg, p, label, out, opts),
        Loaded::Epidemic(p) => run_problem(cfg, p, label, out, opts),
    }
}

fn diagnostic_row(file: &str, param: &str, metric: &str, lag: Option<usize>, value: f64) -> Vec<String> {
    vec![
        file.to_string(),
        param.to_string(),
        metric.to_string(),
        lag.map(|l| l.to_string()).unwrap_or_default(),
        fmt_f64(value),
    ]
}

/// Autocorrelation, IACT, ESS and summaries per file and parameter, plus
/// improvement factors `iact(baseline) / iact(method)` when both are given.
pub fn cmd_diagnose(files: &[PathBuf], out: &Path, opts: &DiagnoseOptions) -> Result<(), CliError> {
    let mut inputs: Vec<PathBuf> = files.to_vec();
    for p in [&opts.baseline, &opts.method].into_iter().flatten() {
        if !inputs.contains(p) {
            inputs.push(p.clone());
        }
    }
    if inputs.is_empty() {
        return Err(CliError::Config("no sample files given".into()));
    }
    let mut tables = Vec::new();
    for p in &inputs {
        tables.push(read_samples(p)?);
    }
    let mut reference: Vec<&String> = tables[0].params.iter().collect();
    reference.sort();
    for (p, t) in inputs.iter().zip(&tables).skip(1) {
        let mut names: Vec<&String> = t.params.iter().collect();
        names.sort();
        if names != reference {
            return Err(CliError::Config(format!(
                "{} has parameters {names:?}, {} has {reference:?}",
                p.display(),
                inputs[0].display()
            )));
        }
    }
    create_dir(out)?;

    let dpath = out.join("diagnostics.csv");
    let mut dw = csv_writer(&dpath)?;
    write_row(&mut dw, &dpath, &["file", "param", "metric", "lag", "value"].map(String::from))?;
    let hpath = out.join("histograms.csv");
    let mut hw = csv_writer(&hpath)?;
    write_row(&mut hw, &hpath, &["file", "param", "bin", "lower", "upper", "count"].map(String::from))?;

    // iact per (file, param) for the improvement factors.
    let mut iacts: BTreeMap<(usize, String), f64> = BTreeMap::new();
    for (fi, (p, table)) in inputs.iter().zip(&tables).enumerate() {
        let file = p.display().to_string();
        for (name, series) in table.params.iter().zip(&table.series) {
            let n = series.len();
            if n < 2 {
                warn!("{file}: {name} has {n} draws, skipped");
                continue;
            }
            let max_lag = opts.max_lag.min(n - 1);
            match acf(series, max_lag, None) {
                Ok(r) => {
                    for (lag, v) in r.acf.iter().enumerate() {
                        write_row(&mut dw, &dpath, &diagnostic_row(&file, name, "acf", Some(lag), *v))?;
                    }
                    let full = acf(series, DEFAULT_IACT_CAP.min(n - 1), None)?;
                    let tau = (2.0 * full.iact - 1.0).max(1.0 / n as f64);
                    let ess = n as f64 / tau;
                    let summary = summarize(series)?;
                    let mcse = summary.sd / ess.sqrt();
                    for (metric, v) in [("iact", full.iact), ("ess", ess), ("mcse", mcse)] {
                        write_row(&mut dw, &dpath, &diagnostic_row(&file, name, metric, None, v))?;
                    }
                    iacts.insert((fi, name.clone()), full.iact);
                }
                Err(e) => warn!("{file}: {name}: {e}"),
            }
            let s = summarize(series)?;
            for (metric, v) in [
                ("n", s.n as f64),
                ("mean", s.mean),
                ("sd", s.sd),
                ("q025", s.q025),
                ("q50", s.q50),
                ("q975", s.q975),
            ] {
                write_row(&mut dw, &dpath, &diagnostic_row(&file, name, metric, None, v))?;
            }
            for (b, count) in s.histogram.counts.iter().enumerate() {
                write_row(
                    &mut hw,
                    &hpath,
                    &[
                        file.clone(),
                        name.clone(),
                        b.to_string(),
                        fmt_f64(s.histogram.edges[b]),
                        fmt_f64(s.histogram.edges[b + 1]),
                        count.to_string(),
                    ],
                )?;
            }
        }
    }

    if let (Some(b), Some(m)) = (&opts.baseline, &opts.method) {
        let bi = inputs.iter().position(|p| p == b).expect("added above");
        let mi = inputs.iter().position(|p| p == m).expect("added above");
        let file = m.display().to_string();
        for name in &tables[mi].params {
            match (iacts.get(&(bi, name.clone())), iacts.get(&(mi, name.clone()))) {
                (Some(&ib), Some(&im)) => {
                    let f = improvement_factor(ib, im)?;
                    write_row(&mut dw, &dpath, &diagnostic_row(&file, name, "improvement_factor", None, f))?;
                }
                _ => warn!("{name}: no improvement factor, autocorrelation undefined"),
            }
        }
    }
    finish(dw, &dpath)?;
    finish(hw, &hpath)
}
