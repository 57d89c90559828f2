//! Stage 3 of the pipeline: the importance-sampled evidence estimate from a
//! fitted proposal density, with an exact or unbiased likelihood oracle.

use super::EvidenceEstimate;
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, RngStream};
use crate::prior::PriorSpec;
use crate::proposals::Proposal;
use rand::RngCore;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

/// Evaluator of log pi(x | theta), exact or unbiased on the natural scale.
pub trait LikelihoodOracle: Sync {
    fn log_likelihood_estimate(&self, theta: &[f64], rng: &mut RngStream) -> f64;
    /// When set, repeated evaluation at the same theta returns the same
    /// value and the estimator carries no likelihood noise.
    fn is_exact(&self) -> bool;
}

/// Deterministic likelihood wrapper.
pub struct ExactOracle<F: Fn(&[f64]) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> LikelihoodOracle for ExactOracle<F> {
    fn log_likelihood_estimate(&self, theta: &[f64], _rng: &mut RngStream) -> f64 {
        (self.0)(theta)
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Stochastic unbiased likelihood wrapper (e.g. a particle filter).
pub struct UnbiasedOracle<F: Fn(&[f64], &mut RngStream) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64], &mut RngStream) -> f64 + Sync> LikelihoodOracle for UnbiasedOracle<F> {
    fn log_likelihood_estimate(&self, theta: &[f64], rng: &mut RngStream) -> f64 {
        (self.0)(theta, rng)
    }

    fn is_exact(&self) -> bool {
        false
    }
}

/// Importance-sampling evidence estimate over `n` draws from `q`:
/// log_ml = logsumexp_i( ll_i + log prior_i - log q_i ) - log n.
///
/// Draws outside the prior support get weight zero without touching the
/// oracle, which keeps the estimator unbiased while allowing proposals whose
/// support exceeds the prior's. Draw i owns the i-th substream, and the
/// reduction is in index order, so results are independent of the parallel
/// schedule.
pub fn is_evidence(
    oracle: &dyn LikelihoodOracle,
    prior: &PriorSpec,
    q: &Proposal,
    n: usize,
    rng: &mut RngStream,
    method_tag: &str,
) -> Result<EvidenceEstimate> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 draws, got {n}")));
    }
    let start = Instant::now();
    let salt = rng.next_u64();
    let base = rng.substream(salt);
    let log_w: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut draw_rng = base.substream(i as u64);
            let theta = q.sample(&mut draw_rng);
            let lp = prior.log_prior(&theta);
            if lp == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let ll = oracle.log_likelihood_estimate(&theta, &mut draw_rng);
            ll + lp - q.logpdf(&theta)
        })
        .collect();

    summarize_log_weights(&log_w, method_tag, start.elapsed().as_secs_f64())
}

/// Build the estimate and delta-method standard error from log weights.
pub(crate) fn summarize_log_weights(
    log_w: &[f64],
    method_tag: &str,
    wall_time_s: f64,
) -> Result<EvidenceEstimate> {
    let n = log_w.len();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::SupportMismatch);
    }
    let lse = log_sum_exp(log_w)?;
    let log_ml = lse - (n as f64).ln();

    // Natural-scale weights shifted by the max keep the ratios exact.
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let w_mean = w.iter().sum::<f64>() / n as f64;
    let w_var = w.iter().map(|x| (x - w_mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    // Delta method: sd(log P) ~ sd(w) / (sqrt(n) * mean(w)).
    let mc_se = w_var.sqrt() / ((n as f64).sqrt() * w_mean);

    let w_sum: f64 = w.iter().sum();
    let max_norm = w.iter().cloned().fold(0.0, f64::max) / w_sum;
    let ess = w_sum * w_sum / w.iter().map(|x| x * x).sum::<f64>();
    let n_zero = w.iter().filter(|&&x| x == 0.0).count();

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("max_normalized_weight".into(), max_norm);
    diagnostics.insert("effective_sample_size".into(), ess);
    diagnostics.insert("zero_weight_draws".into(), n_zero as f64);

    Ok(EvidenceEstimate {
        log_ml,
        mc_se: Some(mc_se),
        method: method_tag.to_string(),
        n_samples: n,
        wall_time_s,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use crate::prior::Dist1d;
    use crate::proposals::ProposalFamily;

    fn toy_prior() -> PriorSpec {
        PriorSpec::new(vec![("theta".into(), Dist1d::Normal { mean: 0.0, sd: 1.0 })]).unwrap()
    }

    fn toy_data() -> Vec<f64> {
        vec![
            0.93, 1.45, 0.12, 1.02, 0.77, 1.31, 0.58, 0.95, 1.68, 0.44, 1.11, 0.86, 1.23, 0.67,
            1.05, 0.31, 1.52, 0.89, 1.17, 0.73,
        ]
    }

    fn analytic_log_ml(data: &[f64]) -> f64 {
        let n = data.len() as f64;
        let s: f64 = data.iter().sum();
        let ss: f64 = data.iter().map(|x| x * x).sum();
        -0.5 * n * crate::numerics::LN_2PI - 0.5 * (n + 1.0).ln() - 0.5 * ss
            + s * s / (2.0 * (n + 1.0))
    }

    fn loglik(data: Vec<f64>) -> impl Fn(&[f64]) -> f64 + Sync {
        move |theta: &[f64]| {
            let t = theta[0];
            let n = data.len() as f64;
            let sq: f64 = data.iter().map(|x| (x - t) * (x - t)).sum();
            -0.5 * n * crate::numerics::LN_2PI - 0.5 * sq
        }
    }

    #[test]
    fn optimal_proposal_is_exact_for_any_n() {
        let data = toy_data();
        let n = data.len() as f64;
        let s: f64 = data.iter().sum();
        let post_mean = s / (n + 1.0);
        let post_var = 1.0 / (n + 1.0);
        let q = Proposal::from_moments(
            ProposalFamily::N1,
            vec!["theta".into()],
            vec![post_mean],
            Matrix::identity(1).scaled(post_var),
            None,
        )
        .unwrap();
        let oracle = ExactOracle(loglik(data.clone()));
        let truth = analytic_log_ml(&data);
        for n_draws in [2usize, 10, 100, 1000] {
            let mut rng = RngStream::new(61, n_draws as u64);
            let est = is_evidence(&oracle, &toy_prior(), &q, n_draws, &mut rng, "is_n1").unwrap();
            assert!(
                (est.log_ml - truth).abs() < 1e-10,
                "n={n_draws}: {} vs {truth}",
                est.log_ml
            );
            assert!(est.mc_se.unwrap() < 1e-10);
        }
    }

    #[test]
    fn all_zero_weights_is_support_mismatch() {
        // Prior supported on (0,1); proposal far outside it.
        let prior =
            PriorSpec::new(vec![("p".into(), Dist1d::Beta { a: 1.0, b: 1.0 })]).unwrap();
        let q = Proposal::from_moments(
            ProposalFamily::N1,
            vec!["p".into()],
            vec![50.0],
            Matrix::identity(1).scaled(0.01),
            None,
        )
        .unwrap();
        let oracle = ExactOracle(|_: &[f64]| 0.0);
        let mut rng = RngStream::new(62, 0);
        assert!(matches!(
            is_evidence(&oracle, &prior, &q, 100, &mut rng, "is_n1"),
            Err(Error::SupportMismatch)
        ));
    }

    #[test]
    fn mix_proposal_recovers_analytic_marginal() {
        let data = toy_data();
        let truth = analytic_log_ml(&data);
        // Deliberately offset fit: the estimator must still be correct,
        // only less efficient.
        let q = Proposal::from_moments(
            ProposalFamily::Mix,
            vec!["theta".into()],
            vec![0.8],
            Matrix::identity(1).scaled(0.08),
            Some(toy_prior()),
        )
        .unwrap();
        let oracle = ExactOracle(loglik(data));
        let mut rng = RngStream::new(63, 0);
        let est = is_evidence(&oracle, &toy_prior(), &q, 20_000, &mut rng, "is_mix").unwrap();
        let se = est.mc_se.unwrap();
        assert!(
            (est.log_ml - truth).abs() < 3.0 * se,
            "{} vs {truth} (se {se})",
            est.log_ml
        );
        assert!(est.diagnostics.contains_key("max_normalized_weight"));
    }

    #[test]
    fn zero_weight_draws_are_legal() {
        // Positive-support prior with a proposal straddling zero: negative
        // draws get weight zero, the estimate stays correct.
        let prior = PriorSpec::new(vec![("r".into(), Dist1d::exponential(1.0))]).unwrap();
        // Likelihood constant: marginal = 1, log = 0.
        let oracle = ExactOracle(|_: &[f64]| 0.0);
        let q = Proposal::from_moments(
            ProposalFamily::N1,
            vec!["r".into()],
            vec![0.3],
            Matrix::identity(1),
            None,
        )
        .unwrap();
        let mut rng = RngStream::new(64, 0);
        let est = is_evidence(&oracle, &prior, &q, 50_000, &mut rng, "is_n1").unwrap();
        assert!(est.diagnostics["zero_weight_draws"] > 0.0);
        let se = est.mc_se.unwrap();
        assert!(est.log_ml.abs() < 3.0 * se, "{} (se {se})", est.log_ml);
    }

    #[test]
    fn deterministic_given_stream() {
        let data = toy_data();
        let q = Proposal::from_moments(
            ProposalFamily::N1,
            vec!["theta".into()],
            vec![0.9],
            Matrix::identity(1).scaled(0.05),
            None,
        )
        .unwrap();
        let oracle = ExactOracle(loglik(data));
        let run = || {
            let mut rng = RngStream::new(65, 1);
            is_evidence(&oracle, &toy_prior(), &q, 5_000, &mut rng, "is_n1")
                .unwrap()
                .log_ml
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn unbiased_on_natural_scale() {
        // Mean of exp(log_ml) over replicates hits the analytic marginal
        // within 3 SEs of the replicate mean.
        let data: Vec<f64> = toy_data().into_iter().take(6).collect();
        let truth = analytic_log_ml(&data).exp();
        let q = Proposal::from_moments(
            ProposalFamily::Mix,
            vec!["theta".into()],
            vec![0.7],
            Matrix::identity(1).scaled(0.2),
            Some(toy_prior()),
        )
        .unwrap();
        let oracle = ExactOracle(loglik(data));
        let reps = 200;
        let vals: Vec<f64> = (0..reps)
            .map(|r| {
                let mut rng = RngStream::new(66, r as u64);
                is_evidence(&oracle, &toy_prior(), &q, 400, &mut rng, "is_mix")
                    .unwrap()
                    .log_ml
                    .exp()
            })
            .collect();
        let (mean, var) = crate::numerics::mean_var(&vals);
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - truth).abs() < 3.0 * se,
            "natural-scale mean {mean} vs {truth} (se {se})"
        );
    }

    #[test]
    fn variance_law_halves_when_n_quadruples() {
        let data = toy_data();
        let q = Proposal::from_moments(
            ProposalFamily::Mix,
            vec!["theta".into()],
            vec![0.85],
            Matrix::identity(1).scaled(0.1),
            Some(toy_prior()),
        )
        .unwrap();
        let oracle = ExactOracle(loglik(data));
        let sd_at = |n_draws: usize, seed: u64| {
            let vals: Vec<f64> = (0..60)
                .map(|r| {
                    let mut rng = RngStream::new(seed, r as u64);
                    is_evidence(&oracle, &toy_prior(), &q, n_draws, &mut rng, "is_mix")
                        .unwrap()
                        .log_ml
                })
                .collect();
            let (_, var) = crate::numerics::mean_var(&vals);
            var.sqrt()
        };
        let sd_small = sd_at(500, 67);
        let sd_big = sd_at(2_000, 68);
        let ratio = sd_small / sd_big;
        assert!(
            (1.5..=2.5).contains(&ratio),
            "sd ratio {ratio} (sd {sd_small} vs {sd_big})"
        );
    }
}
