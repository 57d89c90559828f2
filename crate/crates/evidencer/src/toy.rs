//! Built-in conjugate normal test model: x_i ~ N(theta, 1) with
//! theta ~ N(0, 1). Everything is available in closed form - posterior,
//! marginal likelihood, exact posterior proposal - which makes it the
//! calibration target for every estimator in the crate.

use crate::evidence::{ChibBlockKind, ChibModel, ExactOracle, TemperedTarget};
use crate::mcmc::BasicSweeper;
use crate::numerics::{Matrix, RngStream, LN_2PI};
use crate::prior::{Dist1d, PriorSpec};
use crate::proposals::{Proposal, ProposalFamily};
use rand_distr::{Distribution, Normal, StandardNormal};

#[derive(Debug, Clone)]
pub struct ConjugateNormalToy {
    data: Vec<f64>,
    prior: PriorSpec,
    // Chib state
    theta: f64,
    star: Option<(f64, f64)>, // (theta*, log posterior at star)
}

impl ConjugateNormalToy {
    pub fn new(data: Vec<f64>) -> Self {
        let prior =
            PriorSpec::new(vec![("theta".into(), Dist1d::Normal { mean: 0.0, sd: 1.0 })])
                .expect("single name");
        Self {
            data,
            prior,
            theta: 0.0,
            star: None,
        }
    }

    pub fn simulate(n: usize, theta: f64, rng: &mut RngStream) -> Self {
        let noise = Normal::new(theta, 1.0).expect("valid normal");
        let data: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
        Self::new(data)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn log_likelihood(&self, theta: f64) -> f64 {
        let n = self.data.len() as f64;
        let sq: f64 = self.data.iter().map(|x| (x - theta).powi(2)).sum();
        -0.5 * n * LN_2PI - 0.5 * sq
    }

    pub fn posterior_mean_var(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let s: f64 = self.data.iter().sum();
        (s / (n + 1.0), 1.0 / (n + 1.0))
    }

    pub fn log_posterior_pdf(&self, theta: f64) -> f64 {
        let (m, v) = self.posterior_mean_var();
        -0.5 * LN_2PI - 0.5 * v.ln() - 0.5 * (theta - m).powi(2) / v
    }

    pub fn analytic_log_marginal(&self) -> f64 {
        let n = self.data.len() as f64;
        let s: f64 = self.data.iter().sum();
        let ss: f64 = self.data.iter().map(|x| x * x).sum();
        -0.5 * n * LN_2PI - 0.5 * (n + 1.0).ln() - 0.5 * ss + s * s / (2.0 * (n + 1.0))
    }

    pub fn sweeper(&self) -> BasicSweeper<impl Fn(&[f64]) -> f64 + '_> {
        BasicSweeper::new(self.prior.clone(), move |t: &[f64]| self.log_likelihood(t[0]), None)
    }

    pub fn oracle(&self) -> ExactOracle<impl Fn(&[f64]) -> f64 + Sync + '_> {
        ExactOracle(move |t: &[f64]| self.log_likelihood(t[0]))
    }

    /// The optimal importance proposal: q = exact posterior.
    pub fn exact_posterior_proposal(&self) -> Proposal {
        let (m, v) = self.posterior_mean_var();
        Proposal::from_moments(
            ProposalFamily::N1,
            vec!["theta".into()],
            vec![m],
            Matrix::identity(1).scaled(v),
            None,
        )
        .expect("posterior variance is positive")
    }
}

impl TemperedTarget for ConjugateNormalToy {
    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        ConjugateNormalToy::log_likelihood(self, theta[0])
    }
}

// Single Gibbs block whose full conditional is the exact posterior.
impl ChibModel for ConjugateNormalToy {
    fn n_blocks(&self) -> usize {
        1
    }

    fn block_kind(&self, _j: usize) -> ChibBlockKind {
        ChibBlockKind::Gibbs
    }

    fn sweep(&mut self, first_free: usize, _latent_free: bool, rng: &mut RngStream) {
        if first_free == 0 {
            let (m, v) = self.posterior_mean_var();
            let z: f64 = StandardNormal.sample(rng);
            self.theta = m + v.sqrt() * z;
        }
    }

    fn log_posterior_current(&self) -> f64 {
        self.prior.log_prior(&[self.theta]) + self.log_likelihood(self.theta)
    }

    fn consider_star(&mut self) {
        let lp = self.log_posterior_current();
        if self.star.map_or(true, |(_, best)| lp > best) {
            self.star = Some((self.theta, lp));
        }
    }

    fn current_params(&self) -> Vec<f64> {
        vec![self.theta]
    }

    fn set_params(&mut self, theta: &[f64]) {
        self.theta = theta[0];
    }

    fn clamp_to_star(&mut self, first_free: usize) {
        if first_free > 0 {
            self.theta = self.star.expect("star selected").0;
        }
    }

    fn log_complete_at_star(&self) -> f64 {
        self.log_likelihood(self.star.expect("star selected").0)
    }

    fn log_prior_at_star(&self) -> f64 {
        self.prior.log_prior(&[self.star.expect("star selected").0])
    }

    fn gibbs_log_conditional(&mut self, _j: usize) -> f64 {
        self.log_posterior_pdf(self.star.expect("star selected").0)
    }

    fn mh_numerator(&mut self, _j: usize) -> f64 {
        unreachable!("toy has no MH block")
    }

    fn mh_denominator(&mut self, _j: usize, _rng: &mut RngStream) -> f64 {
        unreachable!("toy has no MH block")
    }
}
