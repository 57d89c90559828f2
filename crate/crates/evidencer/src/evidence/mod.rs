//! Marginal-likelihood estimators: importance sampling from a fitted
//! proposal (the primary method), plus harmonic mean, Chib's method, power
//! posteriors and reversible-jump model comparison for benchmarking, with
//! Monte-Carlo-error machinery throughout.

mod chib;
mod harmonic;
mod is;
mod power;
mod replicate;
mod rjmcmc;

pub use chib::{chib_evidence, ChibBlockKind, ChibConfig, ChibModel};
pub use harmonic::harmonic_mean_evidence;
pub use is::{is_evidence, ExactOracle, LikelihoodOracle, UnbiasedOracle};
pub use power::{
    make_ladder, power_posterior_evidence, LadderScheme, PowerPosteriorConfig, TemperatureLadder,
    TemperedTarget, DEFAULT_LADDER_C,
};
pub use replicate::{replicate_study, replicate_study_with_streams, ReplicateStudy};
pub use rjmcmc::{rjmcmc_bayes_factor, rjmcmc_corrected, RjConfig, RjOutput, RjPair};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A log marginal likelihood estimate with its Monte Carlo standard error
/// and method-specific diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    pub log_ml: f64,
    /// Absent when the method had no budget to estimate it (flagged in
    /// diagnostics).
    pub mc_se: Option<f64>,
    pub method: String,
    pub n_samples: usize,
    pub wall_time_s: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EvidenceEstimate {
    pub fn combined_se(&self, other: &EvidenceEstimate) -> Option<f64> {
        match (self.mc_se, other.mc_se) {
            (Some(a), Some(b)) => Some((a * a + b * b).sqrt()),
            _ => None,
        }
    }
}
