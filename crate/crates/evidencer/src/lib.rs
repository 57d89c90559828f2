//! Marginal likelihood (model evidence) estimation for latent-variable
//! models. The core pipeline fits a parametric importance proposal to MCMC
//! posterior output and combines it with exact or unbiased likelihood
//! estimates; harmonic mean, Chib, power posterior and reversible-jump
//! estimators are provided for comparison. Ships an epidemic household
//! hidden-Markov model and two count-time-series models (INAR and Poisson
//! regression with a latent AR process) as built-in applications.

pub mod cli;
pub mod epidemic;
pub mod error;
pub mod evidence;
pub mod mcmc;
pub mod numerics;
pub mod prior;
pub mod proposals;
pub mod timeseries;
pub mod toy;

pub use error::{Error, Result};
