//! Repeated independent estimation runs with fresh seeds, giving the
//! empirical Monte Carlo spread that the per-run standard errors are
//! checked against.

use super::EvidenceEstimate;
use crate::error::{Error, Result};
use crate::numerics::{mean_var, RngStream};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateStudy {
    pub estimates: Vec<EvidenceEstimate>,
    pub mean_log_ml: f64,
    pub empirical_sd: f64,
}

impl ReplicateStudy {
    fn from_estimates(estimates: Vec<EvidenceEstimate>) -> Self {
        let vals: Vec<f64> = estimates.iter().map(|e| e.log_ml).collect();
        let (mean, var) = mean_var(&vals);
        Self {
            estimates,
            mean_log_ml: mean,
            empirical_sd: var.sqrt(),
        }
    }

    pub fn mean_reported_se(&self) -> Option<f64> {
        let ses: Vec<f64> = self.estimates.iter().filter_map(|e| e.mc_se).collect();
        if ses.is_empty() {
            None
        } else {
            Some(ses.iter().sum::<f64>() / ses.len() as f64)
        }
    }
}

/// Run `r` independent replicates of an estimator, each on its own derived
/// stream, in parallel with index-ordered reduction.
pub fn replicate_study<F>(run: F, r: usize, rng: &mut RngStream) -> Result<ReplicateStudy>
where
    F: Fn(usize, RngStream) -> Result<EvidenceEstimate> + Sync,
{
    if r < 2 {
        return Err(Error::Config(format!("need at least 2 replicates, got {r}")));
    }
    let salt = rng.next_u64();
    let base = rng.substream(salt);
    let streams: Vec<RngStream> = (0..r).map(|i| base.substream(i as u64)).collect();
    replicate_study_with_streams(run, streams)
}

/// Same as [`replicate_study`] but with caller-supplied streams; passing
/// duplicate streams deliberately yields zero empirical spread, which the
/// misuse-guard test relies on.
pub fn replicate_study_with_streams<F>(
    run: F,
    streams: Vec<RngStream>,
) -> Result<ReplicateStudy>
where
    F: Fn(usize, RngStream) -> Result<EvidenceEstimate> + Sync,
{
    if streams.len() < 2 {
        return Err(Error::Config("need at least 2 replicates".into()));
    }
    let estimates: Result<Vec<EvidenceEstimate>> = streams
        .into_par_iter()
        .enumerate()
        .map(|(i, stream)| run(i, stream))
        .collect();
    Ok(ReplicateStudy::from_estimates(estimates?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn fake_estimate(log_ml: f64) -> EvidenceEstimate {
        EvidenceEstimate {
            log_ml,
            mc_se: Some(0.1),
            method: "test".into(),
            n_samples: 1,
            wall_time_s: 0.0,
            diagnostics: BTreeMap::new(),
        }
    }

    #[test]
    fn identical_streams_give_zero_sd() {
        let s = RngStream::new(91, 5);
        let study = replicate_study_with_streams(
            |_, mut stream| {
                let v = rand::RngCore::next_u64(&mut stream) as f64 / u64::MAX as f64;
                Ok(fake_estimate(v))
            },
            vec![s.clone(), s.clone()],
        )
        .unwrap();
        assert_eq!(study.empirical_sd, 0.0);
    }

    #[test]
    fn distinct_streams_spread() {
        let mut rng = RngStream::new(92, 0);
        let study = replicate_study(
            |_, mut stream| {
                let v = rand::RngCore::next_u64(&mut stream) as f64 / u64::MAX as f64;
                Ok(fake_estimate(v))
            },
            8,
            &mut rng,
        )
        .unwrap();
        assert!(study.empirical_sd > 0.0);
        assert_eq!(study.estimates.len(), 8);
    }

    #[test]
    fn too_few_replicates_rejected() {
        let mut rng = RngStream::new(93, 0);
        assert!(replicate_study(|_, _| Ok(fake_estimate(0.0)), 1, &mut rng).is_err());
    }
}
