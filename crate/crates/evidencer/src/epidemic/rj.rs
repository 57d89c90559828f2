//! Reversible jump between the full model M1 (separate community rates for
//! children and adults) and the nested M2 (a single rate). The down move
//! pools k = (L1 k1 + L2 k2)/(L1 + L2); the up move draws U ~ N(0, sigma^2)
//! and sets k1 = k + u/L1, k2 = k - u/L2, where L1 and L2 are the total
//! numbers of children and adults in the panel. The Jacobians are
//! L1 L2/(L1+L2) and its reciprocal.

use super::sampler::EpiSampler;
use super::{EpiPriors, EpiVariant, HouseholdSeries};
use crate::error::Result;
use crate::evidence::RjPair;
use crate::mcmc::{ChainOutput, Sweep};
use crate::numerics::{RngStream, LN_2PI};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub struct EpiRjPair {
    m1: EpiSampler,
    m2: EpiSampler,
    indicator: usize,
    priors: [f64; 2],
    sigma: f64,
    l1: f64,
    l2: f64,
}

impl EpiRjPair {
    pub fn new(
        data: Vec<HouseholdSeries>,
        priors: &EpiPriors,
        delta_t: f64,
        sigma: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let l1 = data.iter().map(|s| s.household.n_children()).sum::<usize>() as f64;
        let l2 = data.iter().map(|s| s.household.size()).sum::<usize>() as f64 - l1;
        let m1 = EpiSampler::new(data.clone(), EpiVariant::M1, priors, delta_t, rng)?;
        let m2 = EpiSampler::new(data, EpiVariant::M2, priors, delta_t, rng)?;
        Ok(Self {
            m1,
            m2,
            indicator: 0,
            priors: [0.5, 0.5],
            sigma,
            l1,
            l2,
        })
    }

    /// Default jump scale from an M1 pilot chain: the standard deviation of
    /// u* = L1 L2 (k1 - k2) / (L1 + L2) along the chain.
    pub fn pilot_sigma(chain: &ChainOutput, l1: f64, l2: f64) -> f64 {
        let k1 = chain.column_by_name("k1").expect("M1 chain");
        let k2 = chain.column_by_name("k2").expect("M1 chain");
        let us: Vec<f64> = k1
            .iter()
            .zip(&k2)
            .map(|(a, b)| l1 * l2 * (a - b) / (l1 + l2))
            .collect();
        let (_, var) = crate::numerics::mean_var(&us);
        var.sqrt().max(1e-10)
    }

    pub fn counts(&self) -> (f64, f64) {
        (self.l1, self.l2)
    }

    pub fn active(&self) -> &EpiSampler {
        if self.indicator == 0 {
            &self.m1
        } else {
            &self.m2
        }
    }

    fn log_aux_density(&self, u: f64) -> f64 {
        -0.5 * LN_2PI - self.sigma.ln() - 0.5 * (u / self.sigma).powi(2)
    }

    fn log_jacobian_down(&self) -> f64 {
        (self.l1 * self.l2 / (self.l1 + self.l2)).ln()
    }

    /// Map an M1 parameter vector to M2 (pooled k), returning the implied
    /// auxiliary value u*.
    pub fn map_down(&self, values_m1: &[f64]) -> (Vec<f64>, f64) {
        let (k1, k2) = (values_m1[0], values_m1[1]);
        let k = (self.l1 * k1 + self.l2 * k2) / (self.l1 + self.l2);
        let u = self.l1 * self.l2 * (k1 - k2) / (self.l1 + self.l2);
        let mut values = Vec::with_capacity(values_m1.len() - 1);
        values.push(k);
        values.extend_from_slice(&values_m1[2..]);
        (values, u)
    }

    /// Map an M2 parameter vector plus auxiliary u to M1.
    pub fn map_up(&self, values_m2: &[f64], u: f64) -> Vec<f64> {
        let k = values_m2[0];
        let mut values = Vec::with_capacity(values_m2.len() + 1);
        values.push(k + u / self.l1);
        values.push(k - u / self.l2);
        values.extend_from_slice(&values_m2[1..]);
        values
    }

    /// Log acceptance ratio of the M1 -> M2 move at the given M1 state,
    /// using the active sampler's latent statistics. Returns the mapped M2
    /// vector and the implied u*.
    pub fn log_accept_12(&self, values_m1: &[f64]) -> (f64, Vec<f64>, f64) {
        let stats = self.active().stats();
        let delta_t = self.active().delta_t();
        let (values_m2, u) = self.map_down(values_m1);
        let post1 = self.m1.prior().log_prior(values_m1)
            + stats.loglik(&EpiVariant::M1.to_theta(values_m1, delta_t));
        let post2 = self.m2.prior().log_prior(&values_m2)
            + stats.loglik(&EpiVariant::M2.to_theta(&values_m2, delta_t));
        let log_a = (post2 + self.priors[1].ln()) - (post1 + self.priors[0].ln())
            + self.log_aux_density(u)
            + self.log_jacobian_down();
        (log_a, values_m2, u)
    }

    /// Log acceptance ratio of the M2 -> M1 move with auxiliary u.
    pub fn log_accept_21(&self, values_m2: &[f64], u: f64) -> (f64, Vec<f64>) {
        let stats = self.active().stats();
        let delta_t = self.active().delta_t();
        let values_m1 = self.map_up(values_m2, u);
        let post2 = self.m2.prior().log_prior(values_m2)
            + stats.loglik(&EpiVariant::M2.to_theta(values_m2, delta_t));
        let post1 = self.m1.prior().log_prior(&values_m1)
            + stats.loglik(&EpiVariant::M1.to_theta(&values_m1, delta_t));
        let log_a = (post1 + self.priors[0].ln()) - (post2 + self.priors[1].ln())
            - self.log_aux_density(u)
            - self.log_jacobian_down();
        (log_a, values_m1)
    }
}

impl RjPair for EpiRjPair {
    fn model_priors(&self) -> [f64; 2] {
        self.priors
    }

    fn set_model_priors(&mut self, priors: [f64; 2]) {
        self.priors = priors;
    }

    fn indicator(&self) -> usize {
        self.indicator
    }

    fn within_sweep(&mut self, rng: &mut RngStream) {
        if self.indicator == 0 {
            self.m1.sweep(0, rng);
        } else {
            self.m2.sweep(0, rng);
        }
    }

    fn try_jump(&mut self, rng: &mut RngStream) -> bool {
        if self.indicator == 0 {
            let values_m1 = self.m1.current_values().to_vec();
            let (log_a, values_m2, _) = self.log_accept_12(&values_m1);
            if rng.random::<f64>().ln() < log_a {
                let paths = self.m1.current_paths().to_vec();
                self.m2.set_paths(paths);
                self.m2.set_values(&values_m2);
                self.indicator = 1;
                return true;
            }
            false
        } else {
            let u = Normal::new(0.0, self.sigma)
                .expect("positive sigma")
                .sample(rng);
            let values_m2 = self.m2.current_values().to_vec();
            let (log_a, values_m1) = self.log_accept_21(&values_m2, u);
            if rng.random::<f64>().ln() < log_a {
                let paths = self.m2.current_paths().to_vec();
                self.m1.set_paths(paths);
                self.m1.set_values(&values_m1);
                self.indicator = 0;
                return true;
            }
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::simulate::{simulate_epidemic, EpiDesign, MissingnessSpec};
    use super::super::EpiTheta;

    #[test]
    fn acceptance_ratio_reciprocity() {
        // A12(theta) + A21(mapped theta, u*) = 0 exactly: posteriors,
        // model priors, auxiliary density and Jacobians all cancel.
        let mut rng = RngStream::new(150, 0);
        let design = EpiDesign::scaled(8, 8);
        let (data, _) = simulate_epidemic(
            &design,
            &EpiTheta::study_truth(7.0),
            &MissingnessSpec::none(),
            &mut rng,
        );
        let pair = EpiRjPair::new(data, &EpiPriors::default(), 7.0, 0.5, &mut rng).unwrap();
        for trial in 0..50 {
            let scale = 0.01 + 0.002 * trial as f64;
            let values_m1: Vec<f64> = (0..11)
                .map(|i| {
                    if i >= 9 {
                        0.2 + 0.01 * (trial % 7) as f64
                    } else {
                        scale * (1.0 + (i as f64) * 0.3)
                    }
                })
                .collect();
            let (a12, values_m2, u) = pair.log_accept_12(&values_m1);
            let (a21, back) = pair.log_accept_21(&values_m2, u);
            assert!(
                (a12 + a21).abs() < 1e-10,
                "reciprocity violated: {a12} + {a21}"
            );
            for (x, y) in values_m1.iter().zip(&back) {
                assert!((x - y).abs() < 1e-12, "round trip moved parameters");
            }
        }
    }

    #[test]
    fn map_round_trip() {
        let mut rng = RngStream::new(151, 0);
        let design = EpiDesign::scaled(5, 6);
        let (data, _) = simulate_epidemic(
            &design,
            &EpiTheta::study_truth(7.0),
            &MissingnessSpec::none(),
            &mut rng,
        );
        let pair = EpiRjPair::new(data, &EpiPriors::default(), 7.0, 0.3, &mut rng).unwrap();
        let values_m1 = vec![0.02, 0.006, 0.05, 0.1, 0.01, 0.05, 0.02, 0.05, 1.2, 0.4, 0.1];
        let (values_m2, u) = pair.map_down(&values_m1);
        let back = pair.map_up(&values_m2, u);
        for (a, b) in values_m1.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
