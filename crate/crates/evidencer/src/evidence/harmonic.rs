//! Harmonic mean of posterior likelihoods. Kept as a baseline: consistent
//! but high-variance, and typically biased upward on finite samples.

use super::EvidenceEstimate;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, mean_var};
use std::collections::BTreeMap;
use std::time::Instant;

const N_BATCHES: usize = 20;

/// Evidence estimate from a trace of log P(x | y_i, theta_i) values along a
/// converged posterior chain: log_ml = log N - logsumexp(-l_i). The standard
/// error comes from nonoverlapping batch means of the per-batch estimates on
/// the log scale.
pub fn harmonic_mean_evidence(chain_loglik_trace: &[f64]) -> Result<EvidenceEstimate> {
    if chain_loglik_trace.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let start = Instant::now();
    let n = chain_loglik_trace.len();
    let log_ml = hm_estimate(chain_loglik_trace)?;

    let mc_se = if n >= 2 * N_BATCHES {
        let batch_len = n / N_BATCHES;
        let batch_estimates: Vec<f64> = (0..N_BATCHES)
            .map(|b| hm_estimate(&chain_loglik_trace[b * batch_len..(b + 1) * batch_len]))
            .collect::<Result<_>>()?;
        let (_, var) = mean_var(&batch_estimates);
        Some((var / N_BATCHES as f64).sqrt())
    } else {
        None
    };

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert(
        "min_loglik".into(),
        chain_loglik_trace.iter().cloned().fold(f64::INFINITY, f64::min),
    );
    if mc_se.is_none() {
        diagnostics.insert("mc_se_absent".into(), 1.0);
    }

    Ok(EvidenceEstimate {
        log_ml,
        mc_se,
        method: "hm".into(),
        n_samples: n,
        wall_time_s: start.elapsed().as_secs_f64(),
        diagnostics,
    })
}

fn hm_estimate(trace: &[f64]) -> Result<f64> {
    let neg: Vec<f64> = trace.iter().map(|l| -l).collect();
    Ok((trace.len() as f64).ln() - log_sum_exp(&neg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_returns_the_constant() {
        let est = harmonic_mean_evidence(&[-7.25; 100]).unwrap();
        assert!((est.log_ml + 7.25).abs() < 1e-12);
    }

    #[test]
    fn two_point_trace_hand_value() {
        // HM of {1, 3} = 2*3/(3+1) = 1.5.
        let est = harmonic_mean_evidence(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((est.log_ml - 1.5f64.ln()).abs() < 1e-12);
        assert!(est.mc_se.is_none());
        assert_eq!(est.diagnostics["mc_se_absent"], 1.0);
    }

    #[test]
    fn empty_trace_errors() {
        assert!(matches!(
            harmonic_mean_evidence(&[]),
            Err(Error::EmptyAggregation)
        ));
    }

    #[test]
    fn batch_se_present_on_long_traces() {
        let trace: Vec<f64> = (0..400).map(|i| -5.0 - 0.01 * (i % 7) as f64).collect();
        let est = harmonic_mean_evidence(&trace).unwrap();
        assert!(est.mc_se.unwrap() > 0.0);
        assert!(est.log_ml.is_finite());
    }
}
