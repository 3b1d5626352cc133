//! Concrete submodels, simulators and the exact Kalman oracle.

pub mod epidemic;
pub mod kalman;
pub mod lg;
pub mod presets;

pub use epidemic::{
    epidemic_initial_state, epidemic_simulate, EpidemicBindings, EpidemicKernel, EpidemicModel, EpidemicState,
    OutbreakKind,
};
pub use kalman::{kalman_filter, kalman_gibbs_oracle, sample_smoothed_path, KalmanFilterOutput};
pub use lg::{lg_simulate, lg_simulate_from, LgKernel, LgModel};

/// Flat numeric view of a state, used for trajectory and ground-truth files.
pub trait StateColumns {
    fn columns() -> Vec<&'static str>;
    fn values(&self) -> Vec<f64>;
}

impl StateColumns for f64 {
    fn columns() -> Vec<&'static str> {
        vec!["x"]
    }

    fn values(&self) -> Vec<f64> {
        vec![*self]
    }
}
