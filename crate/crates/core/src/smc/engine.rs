use crate::conjugacy::StatIncrement;
use crate::error::{Error, Result};
use crate::rng::{keyed_stream, step_key, substream, CONTROL_STREAM};

use super::resample::{resample_categorical, select_index};
use super::schedule::{Action, Schedule};
use super::{Hyper, SubmodelKernel, Weighting};

pub struct SweepInput<'a, K: SubmodelKernel> {
    /// One kernel per schedule component, in component order.
    pub kernels: &'a [&'a K],
    pub schedule: &'a Schedule,
    pub weighting: Weighting<'a>,
    /// Per-component reference paths; pins the last particle when present.
    pub reference: Option<&'a [Vec<K::State>]>,
    pub particles: usize,
    pub seed: u64,
}

struct StepRecord<S> {
    actions: Vec<(usize, Action)>,
    /// `states[a][i]`: state produced by action `a` for particle `i`.
    states: Vec<Vec<S>>,
    /// Parent of each particle at the previous step; `None` means identity.
    ancestors: Option<Vec<usize>>,
}

/// Full particle history of one sweep.
pub struct ParticleSystem<S> {
    particles: usize,
    param_count: usize,
    lengths: Vec<usize>,
    records: Vec<StepRecord<S>>,
    log_weights: Vec<f64>,
    norm_weights: Vec<f64>,
    stat_sums: Vec<StatIncrement>,
    log_evidence: f64,
}

impl<S: Clone> ParticleSystem<S> {
    pub fn particles(&self) -> usize {
        self.particles
    }

    /// Number of completed global steps.
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// Unnormalized log weights after the latest step (previous normalized
    /// weight plus the latest increment).
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    /// Running estimate of the log marginal likelihood.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    /// Running statistics of particle `i`; empty for fixed-parameter sweeps.
    pub fn stat_sums(&self, i: usize) -> &[StatIncrement] {
        &self.stat_sums[i * self.param_count..(i + 1) * self.param_count]
    }

    pub fn ancestors(&self, step: usize) -> Vec<usize> {
        match &self.records[step].ancestors {
            Some(a) => a.clone(),
            None => (0..self.particles).collect(),
        }
    }

    /// Ancestral path of particle `i`, one state sequence per component
    /// (only the part that has been simulated so far).
    pub fn trajectories(&self, i: usize) -> Vec<Vec<S>> {
        let mut paths: Vec<Vec<S>> = self.lengths.iter().map(|&t| Vec::with_capacity(t + 1)).collect();
        let mut idx = i;
        for rec in self.records.iter().rev() {
            for (a, &(c, _)) in rec.actions.iter().enumerate() {
                paths[c].push(rec.states[a][idx].clone());
            }
            if let Some(anc) = &rec.ancestors {
                idx = anc[idx];
            }
        }
        for p in &mut paths {
            p.reverse();
        }
        paths
    }
}

pub struct SweepOutput<S> {
    pub system: ParticleSystem<S>,
    pub selected: usize,
    /// Selected path per component.
    pub trajectories: Vec<Vec<S>>,
    /// Running statistics of the selected particle (global indexing; empty for
    /// fixed-parameter sweeps).
    pub stats: Vec<StatIncrement>,
}

pub fn run_sweep<K: SubmodelKernel>(input: SweepInput<'_, K>) -> Result<SweepOutput<K::State>> {
    run_sweep_observed(input, |_| {})
}

/// As [`run_sweep`], calling `observe` after every completed step.
pub fn run_sweep_observed<K, F>(input: SweepInput<'_, K>, mut observe: F) -> Result<SweepOutput<K::State>>
where
    K: SubmodelKernel,
    F: FnMut(&ParticleSystem<K::State>),
{
    let SweepInput {
        kernels,
        schedule,
        weighting,
        reference,
        particles: n,
        seed,
    } = input;
    if n == 0 {
        return Err(Error::invalid("at least one particle is required"));
    }
    if kernels.len() != schedule.components() {
        return Err(Error::Dimension {
            expected: schedule.components(),
            got: kernels.len(),
        });
    }
    for (kern, &t_len) in kernels.iter().zip(schedule.lengths()) {
        if kern.horizon() != t_len {
            return Err(Error::invalid(format!("kernel horizon {} but schedule length {t_len}", kern.horizon())));
        }
    }
    if let Some(refs) = reference {
        if refs.len() != kernels.len() {
            return Err(Error::Dimension {
                expected: kernels.len(),
                got: refs.len(),
            });
        }
        for (r, &t_len) in refs.iter().zip(schedule.lengths()) {
            if r.len() != t_len + 1 {
                return Err(Error::Dimension {
                    expected: t_len + 1,
                    got: r.len(),
                });
            }
        }
    }

    let k = match weighting {
        Weighting::Marginal(base) => base.len(),
        Weighting::Fixed(_) => 0,
    };
    let conditional = reference.is_some();
    let pinned = n - 1;
    let uniform = -(n as f64).ln();
    let mut sys = ParticleSystem {
        particles: n,
        param_count: k,
        lengths: schedule.lengths().to_vec(),
        records: Vec::with_capacity(schedule.steps().len()),
        log_weights: vec![uniform; n],
        norm_weights: vec![1.0 / n as f64; n],
        stat_sums: vec![StatIncrement::ZERO; n * k],
        log_evidence: 0.0,
    };
    let mut log_norm = vec![uniform; n];
    let mut inc = vec![0.0; n];

    for (g, plan) in schedule.steps().iter().enumerate() {
        let advancing = plan.iter().any(|(_, a)| matches!(a, Action::Advance(_)));
        let ancestors = if g > 0 && advancing {
            let mut ctl = substream(seed, g as u64, CONTROL_STREAM);
            let a = resample_categorical(&sys.norm_weights, n, conditional, &mut ctl);
            if k > 0 {
                let old = std::mem::take(&mut sys.stat_sums);
                sys.stat_sums.reserve_exact(n * k);
                for &j in &a {
                    sys.stat_sums.extend_from_slice(&old[j * k..(j + 1) * k]);
                }
            }
            log_norm.fill(uniform);
            Some(a)
        } else {
            None
        };

        // Where each advancing component's previous state sits in the last record.
        let prev_slot: Vec<Option<usize>> = plan
            .iter()
            .map(|&(c, action)| match action {
                Action::Enter => None,
                Action::Advance(_) => sys.records.last().and_then(|r| r.actions.iter().position(|&(pc, _)| pc == c)),
            })
            .collect();
        if plan.iter().zip(&prev_slot).any(|(&(_, a), s)| matches!(a, Action::Advance(_)) && s.is_none()) {
            return Err(Error::invalid(format!("component advances at step {g} without a previous state")));
        }

        let mut new_states: Vec<Vec<K::State>> = plan.iter().map(|_| Vec::with_capacity(n)).collect();
        let key = step_key(seed, g as u64);
        for i in 0..n {
            let mut rng = keyed_stream(key, i as u64);
            let is_ref = conditional && i == pinned;
            let parent = ancestors.as_ref().map_or(i, |a| a[i]);
            let st = &mut sys.stat_sums[i * k..(i + 1) * k];
            for (a_idx, &(c, action)) in plan.iter().enumerate() {
                let kern = kernels[c];
                let x = match action {
                    Action::Enter => match reference {
                        Some(r) if is_ref => r[c][0].clone(),
                        _ => kern.sample_initial(&mut rng),
                    },
                    Action::Advance(t) => {
                        let prev_rec = sys.records.last().expect("checked above");
                        let prev = &prev_rec.states[prev_slot[a_idx].expect("checked above")][parent];
                        let x = match reference {
                            Some(r) if is_ref => r[c][t].clone(),
                            _ => match weighting {
                                Weighting::Fixed(theta) => kern.propagate_fixed(t, prev, theta, &mut rng),
                                Weighting::Marginal(base) => {
                                    kern.propagate_marginal(t, prev, &Hyper::new(base, st), &mut rng)
                                }
                            },
                        };
                        if k > 0 {
                            kern.transition_stats(t, prev, &x, st);
                        }
                        x
                    }
                };
                new_states[a_idx].push(x);
            }
            let mut w = 0.0;
            for (a_idx, &(c, action)) in plan.iter().enumerate() {
                if let Action::Advance(t) = action {
                    let kern = kernels[c];
                    let x = &new_states[a_idx][i];
                    let lw = match weighting {
                        Weighting::Fixed(theta) => kern.log_obs_fixed(t, x, theta),
                        Weighting::Marginal(base) => kern.log_obs_marginal(t, x, &Hyper::new(base, st)),
                    };
                    if k > 0 {
                        kern.observation_stats(t, x, st);
                    }
                    w += if lw.is_nan() { f64::NEG_INFINITY } else { lw };
                }
            }
            inc[i] = w;
        }

        for i in 0..n {
            sys.log_weights[i] = log_norm[i] + inc[i];
        }
        if conditional && sys.log_weights[pinned] == f64::NEG_INFINITY {
            return Err(Error::ReferenceRejected { step: g });
        }
        let max = sys.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Degenerate { step: g });
        }
        let mut sum = 0.0;
        for (w, &lw) in sys.norm_weights.iter_mut().zip(&sys.log_weights) {
            *w = (lw - max).exp();
            sum += *w;
        }
        let log_sum = sum.ln();
        if g > 0 && advancing {
            sys.log_evidence += max + log_sum;
        }
        for i in 0..n {
            sys.norm_weights[i] /= sum;
            log_norm[i] = sys.log_weights[i] - max - log_sum;
        }
        sys.records.push(StepRecord {
            actions: plan.clone(),
            states: new_states,
            ancestors,
        });
        observe(&sys);
    }

    let mut ctl = substream(seed, schedule.steps().len() as u64, CONTROL_STREAM);
    let selected = select_index(&sys.norm_weights, &mut ctl);
    let trajectories = sys.trajectories(selected);
    let stats = sys.stat_sums(selected).to_vec();
    if let Some(refs) = reference {
        debug_assert!(
            sys.trajectories(pinned).iter().zip(refs).all(|(p, r)| p == r),
            "pinned particle left its reference path"
        );
    }
    Ok(SweepOutput {
        system: sys,
        selected,
        trajectories,
        stats,
    })
}
