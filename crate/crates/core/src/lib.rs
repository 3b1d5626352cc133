//! Marginalized particle Gibbs samplers for collections of state-space models
//! that are coupled only through shared static parameters.
//!
//! Every shared parameter has a conjugate prior, so the samplers can integrate
//! it out and drive each particle with running sufficient statistics instead
//! of a fixed parameter value. The crate provides
//!
//! * [`conjugacy`]: the three conjugate pairs, their predictive densities and samplers,
//! * [`multissm`]: which dataset uses which parameter, and the index maps between them,
//! * [`smc`]: bootstrap SMC, conditional SMC and the marginalized conditional SMC engine,
//! * [`samplers`]: particle Gibbs and the single, stacked and hybrid marginalized variants,
//! * [`models`]: linear-Gaussian and vector-borne epidemic submodels plus a Kalman oracle,
//! * [`diagnostics`]: autocorrelation, integrated autocorrelation and summaries,
//! * [`cli`]: the `mpgibbs` command line front end.

pub mod cli;
pub mod conjugacy;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod multissm;
pub mod rng;
pub mod samplers;
pub mod smc;

pub use error::{Error, Result};
