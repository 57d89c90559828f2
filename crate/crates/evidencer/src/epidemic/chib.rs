//! Chib adapter for the epidemic sampler. The posterior ordinate is
//! factorized as pi(y*|x) pi(theta1*|x,y*) pi(pi1*|x,y*,theta1*)
//! pi(pi2*|x,y*,theta1*,pi1*), with theta1 (all rates and w) a
//! Metropolis-Hastings block handled by the Chib-Jeliazkov identity under a
//! proposal frozen from the adapted main run, and the initial-probability
//! blocks exact Beta conditionals given y*.

use super::sampler::EpiSampler;
use crate::evidence::{ChibBlockKind, ChibModel};
use crate::numerics::{mvn_logpdf, mvn_sample, Matrix, RngStream};

pub struct EpiChib {
    sampler: EpiSampler,
    frozen: Option<Matrix>,
    star: Option<Star>,
}

struct Star {
    values: Vec<f64>,
    paths: Vec<Vec<u32>>,
    log_post: f64,
    complete_ll: f64,
}

impl EpiChib {
    pub fn new(sampler: EpiSampler) -> Self {
        Self {
            sampler,
            frozen: None,
            star: None,
        }
    }

    pub fn sampler(&self) -> &EpiSampler {
        &self.sampler
    }

    fn star(&self) -> &Star {
        self.star.as_ref().expect("main run selects theta* first")
    }

    fn star_block(&self) -> Vec<f64> {
        let star = self.star();
        star.values[self.sampler.variant().rwm_indices()].to_vec()
    }

    fn frozen_chol(&mut self) -> Matrix {
        if self.frozen.is_none() {
            self.frozen = Some(self.sampler.proposal_chol());
        }
        self.frozen.clone().unwrap()
    }
}

impl ChibModel for EpiChib {
    fn n_blocks(&self) -> usize {
        3
    }

    fn block_kind(&self, j: usize) -> ChibBlockKind {
        match j {
            0 => ChibBlockKind::MetropolisHastings,
            _ => ChibBlockKind::Gibbs,
        }
    }

    fn has_latent(&self) -> bool {
        true
    }

    fn sweep(&mut self, first_free: usize, latent_free: bool, rng: &mut RngStream) {
        if latent_free {
            self.sampler.refresh_latent(rng);
        }
        if first_free <= 1 {
            self.sampler.pi_gibbs_one(0, rng);
        }
        if first_free <= 2 {
            self.sampler.pi_gibbs_one(1, rng);
        }
        if first_free == 0 {
            if latent_free {
                // Main run: adaptive proposal.
                self.sampler.rwm_block(rng);
            } else {
                let chol = self.frozen_chol();
                self.sampler.rwm_block_frozen(&chol, rng);
            }
        }
    }

    fn log_posterior_current(&self) -> f64 {
        crate::mcmc::Sweep::log_posterior(&self.sampler)
    }

    fn consider_star(&mut self) {
        let lp = self.log_posterior_current();
        if self.star.as_ref().map_or(true, |s| lp > s.log_post) {
            self.star = Some(Star {
                values: self.sampler.current_values().to_vec(),
                paths: self.sampler.current_paths().to_vec(),
                log_post: lp,
                complete_ll: self.sampler.complete_loglik(),
            });
        }
    }

    fn current_params(&self) -> Vec<f64> {
        self.sampler.current_values().to_vec()
    }

    fn set_params(&mut self, theta: &[f64]) {
        self.sampler.set_values(theta);
    }

    fn clamp_to_star(&mut self, first_free: usize) {
        let star_values = self.star().values.clone();
        let star_paths = self.star().paths.clone();
        self.sampler.set_paths(star_paths);
        let variant = self.sampler.variant();
        let rwm = variant.rwm_indices();
        let (pi1, pi2) = variant.pi_indices();
        let mut values = self.sampler.current_values().to_vec();
        if first_free >= 1 {
            values[rwm.clone()].copy_from_slice(&star_values[rwm]);
        }
        if first_free >= 2 {
            values[pi1] = star_values[pi1];
        }
        if first_free >= 3 {
            values[pi2] = star_values[pi2];
        }
        self.sampler.set_values(&values);
    }

    fn log_complete_at_star(&self) -> f64 {
        self.star().complete_ll
    }

    fn log_prior_at_star(&self) -> f64 {
        self.sampler.prior().log_prior(&self.star().values)
    }

    fn latent_log_conditional_at_star(&mut self) -> f64 {
        let paths = self.star().paths.clone();
        self.sampler.latent_conditional_of(&paths)
    }

    fn gibbs_log_conditional(&mut self, j: usize) -> f64 {
        let (pi1, pi2) = self.sampler.variant().pi_indices();
        let star = self.star();
        match j {
            1 => self.sampler.pi_conditional_logpdf(0, star.values[pi1]),
            2 => self.sampler.pi_conditional_logpdf(1, star.values[pi2]),
            _ => unreachable!("block 0 is Metropolis-Hastings"),
        }
    }

    fn mh_numerator(&mut self, j: usize) -> f64 {
        debug_assert_eq!(j, 0);
        let chol = self.frozen_chol();
        let star_block = self.star_block();
        let current = self.sampler.rwm_block_values();
        let delta = self.sampler.block_target(&star_block) - self.sampler.block_target(&current);
        delta.min(0.0) + mvn_logpdf(&star_block, &current, &chol).expect("fitted dims")
    }

    fn mh_denominator(&mut self, j: usize, rng: &mut RngStream) -> f64 {
        debug_assert_eq!(j, 0);
        let chol = self.frozen_chol();
        let star_block = self.star_block();
        let proposal = mvn_sample(&star_block, &chol, rng);
        let delta =
            self.sampler.block_target(&proposal) - self.sampler.block_target(&star_block);
        delta.min(0.0)
    }
}
