//! Coupled human SEIR / mosquito SEI outbreak model on a daily time step.
//!
//! Humans are integer counts. Mosquito compartments are real-valued because
//! births and deaths are a deterministic `(1 - mu)` scaling; where a mosquito
//! count serves as a number of binomial trials or occupancy cells it is
//! floored. Susceptible counts are implied by the population sizes.
//!
//! Per day, in this order:
//!
//! 1. potentially infectious contacts `K_exp^h ~ Po(b S^h I^m / n^h)` and
//!    `K_exp^m ~ Po(b S^m I^h / n^h)`,
//! 2. infectious contacts `K_inf ~ Bin(K_exp, lambda)` for both species,
//! 3. new exposures as the number of distinct susceptibles hit by `K_inf`,
//! 4. `i^h ~ Bin(E^h, delta^h)`, `r^h ~ Bin(I^h, gamma^h)`,
//!    `i^m ~ Bin(floor(E^m), delta^m)`,
//! 5. mosquito deaths and susceptible births.
//!
//! Every `l` days the reported cases are `Bin(A, rho)` where `A` sums `i^h`
//! over the window.

use rand::Rng;

use crate::conjugacy::{
    betabinomial_logpmf_unchecked, binomial_logpmf, sample_beta_binomial, sample_binomial_approx,
    sample_neg_binomial, sample_occupancy, sample_poisson, HyperParams, StatIncrement, DEFAULT_APPROX_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::rng::ParticleRng;
use crate::smc::{Hyper, SubmodelKernel};

use super::StateColumns;

const INITIAL_STATE_ATTEMPTS: usize = 1000;

/// How the first state of an outbreak is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutbreakKind {
    /// `E ~ Po(15)`, `I - 1 ~ Po(15)`, recovered uniform on what is left.
    DengueYap,
    /// `E ~ Po(2)`, `I - 1 ~ Po(2)`, nobody recovered.
    DengueFais,
    /// `E ~ Po(12)`, `I - 1 ~ Po(12)`, nobody recovered.
    ZikaYap,
    Synthetic {
        exposed_rate: f64,
        infectious_rate: f64,
        prior_immunity: bool,
    },
}

impl OutbreakKind {
    fn rates(&self) -> (f64, f64, bool) {
        match *self {
            OutbreakKind::DengueYap => (15.0, 15.0, true),
            OutbreakKind::DengueFais => (2.0, 2.0, false),
            OutbreakKind::ZikaYap => (12.0, 12.0, false),
            OutbreakKind::Synthetic {
                exposed_rate,
                infectious_rate,
                prior_immunity,
            } => (exposed_rate, infectious_rate, prior_immunity),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OutbreakKind::DengueYap => "dengue_yap",
            OutbreakKind::DengueFais => "dengue_fais",
            OutbreakKind::ZikaYap => "zika_yap",
            OutbreakKind::Synthetic { .. } => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicModel {
    pub n_h: u64,
    /// Mosquitoes per human.
    pub c_scale: f64,
    /// Daily mosquito death rate, equal to the birth rate.
    pub mu: f64,
    /// Days per observation.
    pub interval: usize,
    pub outbreak: OutbreakKind,
    /// Accuracy parameter of the normal approximation to the binomial.
    pub approx_k: f64,
}

impl EpidemicModel {
    pub fn new(n_h: u64, c_scale: f64, interval: usize, outbreak: OutbreakKind) -> Result<Self> {
        let m = EpidemicModel {
            n_h,
            c_scale,
            mu: 1.0 / 7.0,
            interval,
            outbreak,
            approx_k: DEFAULT_APPROX_THRESHOLD,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 {
            return Err(Error::Config("human population must be positive".into()));
        }
        if !(self.c_scale > 0.0) || !self.c_scale.is_finite() {
            return Err(Error::Config("mosquito multiplier must be positive".into()));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Config("mosquito turnover must lie in (0, 1)".into()));
        }
        if self.interval != 1 && self.interval != 7 {
            return Err(Error::Config(format!("observation interval {} is not 1 or 7 days", self.interval)));
        }
        let (re, ri, _) = self.outbreak.rates();
        if !(re >= 0.0 && ri >= 0.0) || !re.is_finite() || !ri.is_finite() {
            return Err(Error::Config("initial-state rates must be nonnegative".into()));
        }
        // Expected initial load plus a wide margin must fit in the population.
        let load = re + ri + 1.0 + 8.0 * (re + ri).sqrt();
        if load >= self.n_h as f64 {
            return Err(Error::Config(format!(
                "initial outbreak rates {re}/{ri} do not fit a population of {}",
                self.n_h
            )));
        }
        Ok(())
    }

    pub fn n_m(&self) -> f64 {
        self.c_scale * self.n_h as f64
    }
}

/// Compartment counts after one day plus that day's transition counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EpidemicState {
    pub exposed_h: u64,
    pub infectious_h: u64,
    pub recovered_h: u64,
    pub exposed_m: f64,
    pub infectious_m: f64,
    pub contacts_h: u64,
    pub contacts_m: u64,
    pub infectious_contacts_h: u64,
    pub infectious_contacts_m: u64,
    pub new_exposed_h: u64,
    pub new_exposed_m: u64,
    pub new_infectious_h: u64,
    pub new_infectious_m: u64,
    /// New human infections since the start of the current observation window.
    pub window_infections: u64,
}

impl EpidemicState {
    pub fn susceptible_h(&self, model: &EpidemicModel) -> u64 {
        model.n_h - self.exposed_h - self.infectious_h - self.recovered_h
    }

    pub fn susceptible_m(&self, model: &EpidemicModel) -> f64 {
        (model.n_m() - self.exposed_m - self.infectious_m).max(0.0)
    }
}

impl StateColumns for EpidemicState {
    fn columns() -> Vec<&'static str> {
        vec![
            "exposed_h",
            "infectious_h",
            "recovered_h",
            "exposed_m",
            "infectious_m",
            "contacts_h",
            "contacts_m",
            "infectious_contacts_h",
            "infectious_contacts_m",
            "new_exposed_h",
            "new_exposed_m",
            "new_infectious_h",
            "new_infectious_m",
            "window_infections",
        ]
    }

    fn values(&self) -> Vec<f64> {
        vec![
            self.exposed_h as f64,
            self.infectious_h as f64,
            self.recovered_h as f64,
            self.exposed_m,
            self.infectious_m,
            self.contacts_h as f64,
            self.contacts_m as f64,
            self.infectious_contacts_h as f64,
            self.infectious_contacts_m as f64,
            self.new_exposed_h as f64,
            self.new_exposed_m as f64,
            self.new_infectious_h as f64,
            self.new_infectious_m as f64,
            self.window_infections as f64,
        ]
    }
}

/// Global parameter indices used by one outbreak.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpidemicBindings {
    pub lambda_h: usize,
    pub lambda_m: usize,
    pub delta_h: usize,
    pub delta_m: usize,
    pub gamma_h: usize,
    pub bite: usize,
    pub report: usize,
}

impl EpidemicBindings {
    pub fn indices(&self) -> [usize; 7] {
        [
            self.lambda_h,
            self.lambda_m,
            self.delta_h,
            self.delta_m,
            self.gamma_h,
            self.bite,
            self.report,
        ]
    }
}

/// Initial state; redraws while exposed plus infectious exceed the population.
pub fn epidemic_initial_state<R: Rng + ?Sized>(model: &EpidemicModel, rng: &mut R) -> Result<EpidemicState> {
    let (re, ri, immunity) = model.outbreak.rates();
    for _ in 0..INITIAL_STATE_ATTEMPTS {
        let e = sample_poisson(re, rng);
        let i = 1 + sample_poisson(ri, rng);
        if e + i > model.n_h {
            continue;
        }
        let r = if immunity { rng.random_range(0..=model.n_h - e - i) } else { 0 };
        return Ok(EpidemicState {
            exposed_h: e,
            infectious_h: i,
            recovered_h: r,
            exposed_m: 0.0,
            infectious_m: 0.0,
            contacts_h: 0,
            contacts_m: 0,
            infectious_contacts_h: 0,
            infectious_contacts_m: 0,
            new_exposed_h: 0,
            new_exposed_m: 0,
            new_infectious_h: 0,
            new_infectious_m: 0,
            window_infections: 0,
        });
    }
    Err(Error::invalid(format!(
        "initial outbreak exceeded the population {} times",
        INITIAL_STATE_ATTEMPTS
    )))
}

/// Rate multipliers of the two contact counts: `b` times these is the Poisson rate.
fn contact_multipliers(model: &EpidemicModel, prev: &EpidemicState) -> (f64, f64) {
    let n_h = model.n_h as f64;
    let s_h = prev.susceptible_h(model) as f64;
    let s_m = prev.susceptible_m(model);
    (s_h * prev.infectious_m / n_h, s_m * prev.infectious_h as f64 / n_h)
}

/// Draws that depend on parameters, supplied either from fixed values or
/// from running hyperparameters.
trait DayDraws {
    fn contacts_h(&mut self, mult: f64) -> u64;
    /// Called after `contacts_h`, so a marginal sampler can fold the first draw in.
    fn contacts_m(&mut self, mult: f64) -> u64;
    fn infectious_contacts_h(&mut self, n: u64) -> u64;
    fn infectious_contacts_m(&mut self, n: u64) -> u64;
    fn incubated_h(&mut self, n: u64) -> u64;
    fn recovered_h(&mut self, n: u64) -> u64;
    fn incubated_m(&mut self, n: u64) -> u64;
    fn rng(&mut self) -> &mut dyn rand::RngCore;
}

struct FixedDraws<'a, R: Rng> {
    theta: &'a [f64],
    bind: EpidemicBindings,
    k: f64,
    rng: &'a mut R,
}

fn binom<R: Rng + ?Sized>(n: u64, p: f64, k: f64, rng: &mut R) -> u64 {
    if !(p > 0.0) {
        return 0;
    }
    sample_binomial_approx(n, p.min(1.0), k, rng).expect("probability clamped")
}

impl<R: Rng> DayDraws for FixedDraws<'_, R> {
    fn contacts_h(&mut self, mult: f64) -> u64 {
        sample_poisson(self.theta[self.bind.bite] * mult, self.rng)
    }
    fn contacts_m(&mut self, mult: f64) -> u64 {
        sample_poisson(self.theta[self.bind.bite] * mult, self.rng)
    }
    fn infectious_contacts_h(&mut self, n: u64) -> u64 {
        binom(n, self.theta[self.bind.lambda_h], self.k, self.rng)
    }
    fn infectious_contacts_m(&mut self, n: u64) -> u64 {
        binom(n, self.theta[self.bind.lambda_m], self.k, self.rng)
    }
    fn incubated_h(&mut self, n: u64) -> u64 {
        binom(n, self.theta[self.bind.delta_h], self.k, self.rng)
    }
    fn recovered_h(&mut self, n: u64) -> u64 {
        binom(n, self.theta[self.bind.gamma_h], self.k, self.rng)
    }
    fn incubated_m(&mut self, n: u64) -> u64 {
        binom(n, self.theta[self.bind.delta_m], self.k, self.rng)
    }
    fn rng(&mut self) -> &mut dyn rand::RngCore {
        self.rng
    }
}

struct MarginalDraws<'a> {
    hyper: &'a Hyper<'a>,
    bind: EpidemicBindings,
    k: f64,
    bite: HyperParams,
    rng: &'a mut ParticleRng,
}

impl DayDraws for MarginalDraws<'_> {
    fn contacts_h(&mut self, mult: f64) -> u64 {
        let x = sample_neg_binomial(mult, self.bite, self.rng);
        self.bite = self.bite + StatIncrement::poisson(x, mult);
        x
    }
    fn contacts_m(&mut self, mult: f64) -> u64 {
        sample_neg_binomial(mult, self.bite, self.rng)
    }
    fn infectious_contacts_h(&mut self, n: u64) -> u64 {
        sample_beta_binomial(n, self.hyper.get(self.bind.lambda_h), self.k, self.rng)
    }
    fn infectious_contacts_m(&mut self, n: u64) -> u64 {
        sample_beta_binomial(n, self.hyper.get(self.bind.lambda_m), self.k, self.rng)
    }
    fn incubated_h(&mut self, n: u64) -> u64 {
        sample_beta_binomial(n, self.hyper.get(self.bind.delta_h), self.k, self.rng)
    }
    fn recovered_h(&mut self, n: u64) -> u64 {
        sample_beta_binomial(n, self.hyper.get(self.bind.gamma_h), self.k, self.rng)
    }
    fn incubated_m(&mut self, n: u64) -> u64 {
        sample_beta_binomial(n, self.hyper.get(self.bind.delta_m), self.k, self.rng)
    }
    fn rng(&mut self) -> &mut dyn rand::RngCore {
        self.rng
    }
}

fn advance_day(model: &EpidemicModel, t: usize, prev: &EpidemicState, draws: &mut impl DayDraws) -> EpidemicState {
    let s_h = prev.susceptible_h(model);
    let s_m = prev.susceptible_m(model);
    let (mult_h, mult_m) = contact_multipliers(model, prev);

    let contacts_h = draws.contacts_h(mult_h);
    let contacts_m = draws.contacts_m(mult_m);
    let inf_h = draws.infectious_contacts_h(contacts_h);
    let inf_m = draws.infectious_contacts_m(contacts_m);
    // No susceptible humans means a zero contact rate, hence no infectious contacts.
    let new_exposed_h = sample_occupancy(inf_h, s_h, draws.rng()).expect("contacts vanish without susceptibles");
    let cells_m = s_m.floor() as u64;
    let new_exposed_m = if cells_m == 0 {
        0
    } else {
        sample_occupancy(inf_m, cells_m, draws.rng()).expect("cells available")
    };
    let new_infectious_h = draws.incubated_h(prev.exposed_h);
    let new_recovered_h = draws.recovered_h(prev.infectious_h);
    let new_infectious_m = draws.incubated_m(prev.exposed_m.floor() as u64);

    let keep = 1.0 - model.mu;
    let exposed_m = keep * (prev.exposed_m + new_exposed_m as f64 - new_infectious_m as f64);
    let infectious_m = keep * (prev.infectious_m + new_infectious_m as f64);
    let window_start = (t - 1) % model.interval == 0;
    let x = EpidemicState {
        exposed_h: prev.exposed_h + new_exposed_h - new_infectious_h,
        infectious_h: prev.infectious_h + new_infectious_h - new_recovered_h,
        recovered_h: prev.recovered_h + new_recovered_h,
        exposed_m,
        infectious_m,
        contacts_h,
        contacts_m,
        infectious_contacts_h: inf_h,
        infectious_contacts_m: inf_m,
        new_exposed_h,
        new_exposed_m,
        new_infectious_h,
        new_infectious_m,
        window_infections: if window_start { 0 } else { prev.window_infections } + new_infectious_h,
    };
    debug_assert!(human_balance_holds(model, prev, &x), "human population not conserved");
    debug_assert!(
        mosquito_balance_residual(model, prev, &x) <= 1e-9 * model.n_m(),
        "mosquito population not conserved"
    );
    x
}

/// True when the day's human bookkeeping is exact: every compartment moves
/// by the recorded transitions and the four compartments sum to `n_h`.
pub fn human_balance_holds(model: &EpidemicModel, prev: &EpidemicState, x: &EpidemicState) -> bool {
    let recovered = match x.recovered_h.checked_sub(prev.recovered_h) {
        Some(r) => r,
        None => return false,
    };
    let total = x.exposed_h + x.infectious_h + x.recovered_h;
    let Some(s_prev) = model.n_h.checked_sub(prev.exposed_h + prev.infectious_h + prev.recovered_h) else {
        return false;
    };
    let Some(s_now) = model.n_h.checked_sub(total) else {
        return false;
    };
    s_prev.checked_sub(x.new_exposed_h) == Some(s_now)
        && prev.exposed_h + x.new_exposed_h == x.exposed_h + x.new_infectious_h
        && prev.infectious_h + x.new_infectious_h == x.infectious_h + recovered
        && s_now + total == model.n_h
}

/// Absolute gap between the susceptible mosquitoes implied by the population
/// size and those obtained by applying the day's transitions, deaths and
/// births to the previous susceptibles. Zero up to floating-point rounding;
/// negative compartments give an infinite gap.
pub fn mosquito_balance_residual(model: &EpidemicModel, prev: &EpidemicState, x: &EpidemicState) -> f64 {
    if x.exposed_m < 0.0 || x.infectious_m < 0.0 {
        return f64::INFINITY;
    }
    let n_m = model.n_m();
    let s_prev = n_m - prev.exposed_m - prev.infectious_m;
    let s_bar = s_prev - x.new_exposed_m as f64;
    if s_bar < -1e-9 * n_m {
        return f64::INFINITY;
    }
    let s_next = (1.0 - model.mu) * s_bar + model.mu * n_m;
    (s_next - (n_m - x.exposed_m - x.infectious_m)).abs()
}

/// Simulate `days` days; returns `days + 1` states and one report per full window.
pub fn epidemic_simulate<R: Rng>(
    model: &EpidemicModel,
    bind: &EpidemicBindings,
    theta: &[f64],
    days: usize,
    rng: &mut R,
) -> Result<(Vec<EpidemicState>, Vec<u64>)> {
    model.validate()?;
    for (name, k) in [
        ("lambda_h", bind.lambda_h),
        ("lambda_m", bind.lambda_m),
        ("delta_h", bind.delta_h),
        ("delta_m", bind.delta_m),
        ("gamma_h", bind.gamma_h),
        ("report", bind.report),
    ] {
        let p = *theta.get(k).ok_or(Error::Dimension { expected: k + 1, got: theta.len() })?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("{name} = {p} is not a probability in (0, 1)")));
        }
    }
    let b = *theta.get(bind.bite).ok_or(Error::Dimension {
        expected: bind.bite + 1,
        got: theta.len(),
    })?;
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::invalid(format!("bite rate {b} must be positive")));
    }
    let mut states = Vec::with_capacity(days + 1);
    let mut reports = Vec::with_capacity(days / model.interval);
    states.push(epidemic_initial_state(model, rng)?);
    for t in 1..=days {
        let prev = states.last().expect("initial state");
        let x = advance_day(
            model,
            t,
            prev,
            &mut FixedDraws {
                theta,
                bind: *bind,
                k: model.approx_k,
                rng: &mut *rng,
            },
        );
        if t % model.interval == 0 {
            reports.push(binom(x.window_infections, theta[bind.report], model.approx_k, rng));
        }
        states.push(x);
    }
    Ok((states, reports))
}

/// One outbreak bound to its parameters and reports.
#[derive(Debug, Clone)]
pub struct EpidemicKernel {
    pub model: EpidemicModel,
    pub bindings: EpidemicBindings,
    params: Vec<usize>,
    reports: Vec<u64>,
}

impl EpidemicKernel {
    /// The horizon is `reports.len() * model.interval` days.
    pub fn new(model: EpidemicModel, bindings: EpidemicBindings, reports: Vec<u64>) -> Result<Self> {
        model.validate()?;
        let mut params = bindings.indices().to_vec();
        params.sort_unstable();
        params.dedup();
        if params.len() != 7 {
            return Err(Error::Config("epidemic parameters must be bound to distinct indices".into()));
        }
        Ok(EpidemicKernel {
            model,
            bindings,
            params,
            reports,
        })
    }

    pub fn reports(&self) -> &[u64] {
        &self.reports
    }

    fn report_at(&self, t: usize) -> Option<u64> {
        (t % self.model.interval == 0).then(|| self.reports[t / self.model.interval - 1])
    }
}

impl SubmodelKernel for EpidemicKernel {
    type State = EpidemicState;

    fn params(&self) -> &[usize] {
        &self.params
    }

    fn horizon(&self) -> usize {
        self.reports.len() * self.model.interval
    }

    fn sample_initial(&self, rng: &mut ParticleRng) -> EpidemicState {
        epidemic_initial_state(&self.model, rng).expect("model validation bounds the initial outbreak")
    }

    fn propagate_fixed(&self, t: usize, prev: &EpidemicState, theta: &[f64], rng: &mut ParticleRng) -> EpidemicState {
        advance_day(
            &self.model,
            t,
            prev,
            &mut FixedDraws {
                theta,
                bind: self.bindings,
                k: self.model.approx_k,
                rng,
            },
        )
    }

    fn log_obs_fixed(&self, t: usize, x: &EpidemicState, theta: &[f64]) -> f64 {
        match self.report_at(t) {
            None => 0.0,
            Some(y) => binomial_logpmf(y, x.window_infections, theta[self.bindings.report]),
        }
    }

    fn propagate_marginal(
        &self,
        t: usize,
        prev: &EpidemicState,
        hyper: &Hyper<'_>,
        rng: &mut ParticleRng,
    ) -> EpidemicState {
        advance_day(
            &self.model,
            t,
            prev,
            &mut MarginalDraws {
                hyper,
                bind: self.bindings,
                k: self.model.approx_k,
                bite: hyper.get(self.bindings.bite),
                rng,
            },
        )
    }

    fn log_obs_marginal(&self, t: usize, x: &EpidemicState, hyper: &Hyper<'_>) -> f64 {
        match self.report_at(t) {
            None => 0.0,
            Some(y) if y > x.window_infections => f64::NEG_INFINITY,
            Some(y) => betabinomial_logpmf_unchecked(y, x.window_infections, hyper.get(self.bindings.report)),
        }
    }

    fn transition_stats(&self, _t: usize, prev: &EpidemicState, x: &EpidemicState, acc: &mut [StatIncrement]) {
        let b = &self.bindings;
        let (mult_h, mult_m) = contact_multipliers(&self.model, prev);
        acc[b.bite] += StatIncrement::poisson(x.contacts_h, mult_h);
        acc[b.bite] += StatIncrement::poisson(x.contacts_m, mult_m);
        acc[b.lambda_h] += StatIncrement::binomial(x.infectious_contacts_h, x.contacts_h);
        acc[b.lambda_m] += StatIncrement::binomial(x.infectious_contacts_m, x.contacts_m);
        acc[b.delta_h] += StatIncrement::binomial(x.new_infectious_h, prev.exposed_h);
        acc[b.gamma_h] += StatIncrement::binomial(x.recovered_h - prev.recovered_h, prev.infectious_h);
        acc[b.delta_m] += StatIncrement::binomial(x.new_infectious_m, prev.exposed_m.floor() as u64);
    }

    fn observation_stats(&self, t: usize, x: &EpidemicState, acc: &mut [StatIncrement]) {
        if let Some(y) = self.report_at(t) {
            // A report above the window total has zero weight; its particle is
            // never kept, so the clamp only avoids an underflow.
            acc[self.bindings.report] += StatIncrement::binomial(y.min(x.window_infections), x.window_infections);
        }
    }
}
