//! Importance proposal densities fitted to posterior draws: four normal
//! families with inflated covariance, a normal/prior mixture, and four
//! Student-t families.

use crate::error::{Error, Result};
use crate::mcmc::ChainOutput;
use crate::numerics::{
    log_sum_exp, mvn_logpdf, mvn_sample, mvt_logpdf, mvt_sample, sample_moments, Matrix, RngStream,
};
use crate::prior::PriorSpec;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposalFamily {
    N1,
    N2,
    N3,
    N4,
    Mix,
    T4,
    T6,
    T8,
    T10,
}

impl ProposalFamily {
    pub fn all() -> [ProposalFamily; 9] {
        use ProposalFamily::*;
        [N1, N2, N3, N4, Mix, T4, T6, T8, T10]
    }

    pub fn tag(&self) -> &'static str {
        use ProposalFamily::*;
        match self {
            N1 => "is_n1",
            N2 => "is_n2",
            N3 => "is_n3",
            N4 => "is_n4",
            Mix => "is_mix",
            T4 => "is_t4",
            T6 => "is_t6",
            T8 => "is_t8",
            T10 => "is_t10",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        use ProposalFamily::*;
        Some(match tag {
            "is_n1" => N1,
            "is_n2" => N2,
            "is_n3" => N3,
            "is_n4" => N4,
            "is_mix" => Mix,
            "is_t4" => T4,
            "is_t6" => T6,
            "is_t8" => T8,
            "is_t10" => T10,
            _ => return None,
        })
    }

    fn normal_inflation(&self) -> Option<f64> {
        use ProposalFamily::*;
        match self {
            N1 => Some(1.0),
            N2 => Some(2.0),
            N3 => Some(3.0),
            N4 => Some(4.0),
            _ => None,
        }
    }

    fn dof(&self) -> Option<f64> {
        use ProposalFamily::*;
        match self {
            T4 => Some(4.0),
            T6 => Some(6.0),
            T8 => Some(8.0),
            T10 => Some(10.0),
            _ => None,
        }
    }
}

/// Which mixture component produced a draw (test and diagnostic use).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixComponent {
    Parametric,
    Prior,
}

/// Fitted importance density q(theta).
///
/// For the t families the fitted covariance is used directly as the scale
/// matrix, so the realized covariance is d/(d-2) times the fitted one,
/// i.e. tails and spread are both inflated.
#[derive(Debug, Clone)]
pub struct Proposal {
    family: ProposalFamily,
    names: Vec<String>,
    mean: Vec<f64>,
    cov: Matrix,
    /// Cholesky of the sampling covariance (normal families) or of the
    /// scale matrix (t families).
    chol: Matrix,
    prior: Option<PriorSpec>,
    normal_weight: f64,
}

pub const DEFAULT_MIX_NORMAL_WEIGHT: f64 = 0.95;

/// Fit a proposal of the given family to retained chain draws. `prior` is
/// required for the mixture family and ignored otherwise.
pub fn fit_proposal(
    chain: &ChainOutput,
    family: ProposalFamily,
    prior: Option<&PriorSpec>,
) -> Result<Proposal> {
    let (mean, cov) = sample_moments(&chain.draws)?;
    Proposal::from_moments(family, chain.names.clone(), mean, cov, prior.cloned())
}

impl Proposal {
    pub fn from_moments(
        family: ProposalFamily,
        names: Vec<String>,
        mean: Vec<f64>,
        cov: Matrix,
        prior: Option<PriorSpec>,
    ) -> Result<Self> {
        if family == ProposalFamily::Mix && prior.is_none() {
            return Err(Error::Config(
                "mixture proposal requires a prior with a sampler".into(),
            ));
        }
        let sampling_cov = match family.normal_inflation() {
            Some(j) => cov.scaled(j),
            None => cov.clone(),
        };
        let chol = sampling_cov.cholesky()?;
        Ok(Self {
            family,
            names,
            mean,
            cov,
            chol,
            prior,
            normal_weight: DEFAULT_MIX_NORMAL_WEIGHT,
        })
    }

    /// Override the mixture's parametric-component weight (default 0.95).
    pub fn with_mix_weight(mut self, w: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&w) || w <= 0.0 {
            return Err(Error::Config(format!("mixture weight {w} outside (0,1)")));
        }
        self.normal_weight = w;
        Ok(self)
    }

    pub fn family(&self) -> ProposalFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Fitted covariance Sigma (before family-specific inflation).
    pub fn fitted_cov(&self) -> &Matrix {
        &self.cov
    }

    /// Covariance actually stored for sampling: j*Sigma for the normal
    /// families, Sigma for mixture's normal component and the t scale.
    pub fn stored_cov(&self) -> Matrix {
        match self.family.normal_inflation() {
            Some(j) => self.cov.scaled(j),
            None => self.cov.clone(),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.sample_with_component(rng).0
    }

    pub fn sample_with_component(&self, rng: &mut RngStream) -> (Vec<f64>, MixComponent) {
        if let Some(dof) = self.family.dof() {
            return (
                mvt_sample(&self.mean, &self.chol, dof, rng),
                MixComponent::Parametric,
            );
        }
        if self.family == ProposalFamily::Mix {
            let u: f64 = rng.random();
            if u < self.normal_weight {
                return (
                    mvn_sample(&self.mean, &self.chol, rng),
                    MixComponent::Parametric,
                );
            }
            let prior = self.prior.as_ref().expect("checked at fit");
            return (prior.sample(rng), MixComponent::Prior);
        }
        (
            mvn_sample(&self.mean, &self.chol, rng),
            MixComponent::Parametric,
        )
    }

    pub fn logpdf(&self, theta: &[f64]) -> f64 {
        if let Some(dof) = self.family.dof() {
            return mvt_logpdf(theta, &self.mean, &self.chol, dof).expect("fitted dims");
        }
        let normal = mvn_logpdf(theta, &self.mean, &self.chol).expect("fitted dims");
        if self.family == ProposalFamily::Mix {
            let prior = self.prior.as_ref().expect("checked at fit");
            let terms = [
                self.normal_weight.ln() + normal,
                (1.0 - self.normal_weight).ln() + prior.log_prior(theta),
            ];
            return log_sum_exp(&terms).expect("two terms");
        }
        normal
    }

    /// Summary for run reports: family tag, mean, fitted covariance.
    pub fn summary(&self) -> serde_json::Value {
        let d = self.dim();
        let cov_rows: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| self.cov[(i, j)]).collect())
            .collect();
        serde_json::json!({
            "family": self.family.tag(),
            "names": self.names,
            "mean": self.mean,
            "cov": cov_rows,
            "mix_normal_weight": if self.family == ProposalFamily::Mix {
                Some(self.normal_weight)
            } else {
                None
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean_var;
    use crate::prior::Dist1d;
    use std::collections::BTreeMap;

    fn chain_from_draws(draws: Vec<Vec<f64>>, names: Vec<String>) -> ChainOutput {
        ChainOutput {
            names,
            log_post: vec![0.0; draws.len()],
            cond_loglik: None,
            acceptance: BTreeMap::new(),
            n_iter: draws.len(),
            n_burnin: 0,
            thin: 1,
            root_seed: 0,
            stream_id: 0,
            wall_time_s: 0.0,
            draws,
        }
    }

    fn unit_prior() -> PriorSpec {
        PriorSpec::new(vec![("x".into(), Dist1d::Normal { mean: 0.0, sd: 1.0 })]).unwrap()
    }

    #[test]
    fn n2_stores_doubled_covariance() {
        let draws = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let chain = chain_from_draws(draws, vec!["x".into()]);
        let q = fit_proposal(&chain, ProposalFamily::N2, None).unwrap();
        let c = q.fitted_cov()[(0, 0)];
        assert!((q.stored_cov()[(0, 0)] - 2.0 * c).abs() < 1e-14);
    }

    #[test]
    fn mix_logpdf_is_weighted_sum() {
        let draws = vec![vec![0.1], vec![-0.2], vec![0.3], vec![0.05]];
        let chain = chain_from_draws(draws, vec!["x".into()]);
        let prior = unit_prior();
        let q = fit_proposal(&chain, ProposalFamily::Mix, Some(&prior)).unwrap();
        let theta = [0.5];
        let normal = mvn_logpdf(&theta, q.mean(), &q.stored_cov().cholesky().unwrap()).unwrap();
        let expected = (0.95 * normal.exp() + 0.05 * prior.log_prior(&theta).exp()).ln();
        assert!((q.logpdf(&theta) - expected).abs() < 1e-12);
    }

    #[test]
    fn mix_requires_prior() {
        let draws = vec![vec![0.1], vec![-0.2], vec![0.3]];
        let chain = chain_from_draws(draws, vec!["x".into()]);
        assert!(matches!(
            fit_proposal(&chain, ProposalFamily::Mix, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn degenerate_chain_fails_spd() {
        let draws = vec![vec![1.0, 2.0]; 10];
        let chain = chain_from_draws(draws, vec!["a".into(), "b".into()]);
        assert!(matches!(
            fit_proposal(&chain, ProposalFamily::N1, None),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn n1_sampling_moments() {
        let q = Proposal::from_moments(
            ProposalFamily::N1,
            vec!["x".into()],
            vec![0.0],
            Matrix::identity(1),
            None,
        )
        .unwrap();
        let mut rng = RngStream::new(51, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| q.sample(&mut rng)[0]).collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.02, "mean {m}");
        assert!((0.97..=1.03).contains(&v), "var {v}");
    }

    #[test]
    fn t4_covariance_inflated_by_two() {
        let q = Proposal::from_moments(
            ProposalFamily::T4,
            vec!["x".into()],
            vec![0.0],
            Matrix::identity(1),
            None,
        )
        .unwrap();
        let mut rng = RngStream::new(52, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| q.sample(&mut rng)[0]).collect();
        let (_, v) = mean_var(&xs);
        assert!((v - 2.0).abs() < 0.2, "t4 empirical variance {v}");
    }

    #[test]
    fn mix_prior_component_frequency() {
        let prior = unit_prior();
        let q = Proposal::from_moments(
            ProposalFamily::Mix,
            vec!["x".into()],
            vec![0.0],
            Matrix::identity(1),
            Some(prior),
        )
        .unwrap();
        let mut rng = RngStream::new(53, 0);
        let n = 100_000;
        let prior_draws = (0..n)
            .filter(|_| q.sample_with_component(&mut rng).1 == MixComponent::Prior)
            .count();
        let frac = prior_draws as f64 / n as f64;
        assert!((0.045..=0.055).contains(&frac), "prior fraction {frac}");
    }

    #[test]
    fn mix_floor_far_in_tail() {
        // Far from the fitted mean the normal term vanishes and the mixture
        // approaches log(0.05) + log prior.
        let prior = PriorSpec::new(vec![(
            "x".into(),
            Dist1d::Normal { mean: 0.0, sd: 100.0 },
        )])
        .unwrap();
        let q = Proposal::from_moments(
            ProposalFamily::Mix,
            vec!["x".into()],
            vec![0.0],
            Matrix::identity(1).scaled(0.01),
            Some(prior.clone()),
        )
        .unwrap();
        let theta = [50.0];
        let expected = 0.05f64.ln() + prior.log_prior(&theta);
        assert!((q.logpdf(&theta) - expected).abs() < 1e-9);
    }

    #[test]
    fn mix_dominates_scaled_prior_everywhere() {
        // q(theta) >= 0.05 * prior(theta) pointwise.
        let prior = unit_prior();
        let q = Proposal::from_moments(
            ProposalFamily::Mix,
            vec!["x".into()],
            vec![0.3],
            Matrix::identity(1).scaled(0.2),
            Some(prior.clone()),
        )
        .unwrap();
        let mut rng = RngStream::new(54, 0);
        for _ in 0..1000 {
            let theta = [rng.random_range(-8.0..8.0)];
            let floor = 0.05f64.ln() + prior.log_prior(&theta);
            assert!(
                q.logpdf(&theta) >= floor - 1e-12,
                "mixture fell below prior floor at {theta:?}"
            );
        }
    }

    #[test]
    fn t10_heavier_than_n1_in_tail() {
        let mk = |fam| {
            Proposal::from_moments(fam, vec!["x".into()], vec![0.0], Matrix::identity(1), None)
                .unwrap()
        };
        let n1 = mk(ProposalFamily::N1);
        let t10 = mk(ProposalFamily::T10);
        assert!(t10.logpdf(&[5.0]) > n1.logpdf(&[5.0]));
    }

    #[test]
    fn n1_logpdf_at_mean() {
        let q = Proposal::from_moments(
            ProposalFamily::N1,
            vec!["x".into()],
            vec![0.0],
            Matrix::identity(1),
            None,
        )
        .unwrap();
        assert!((q.logpdf(&[0.0]) + 0.9189385).abs() < 1e-6);
    }

    #[test]
    fn every_family_normalizes_on_grid() {
        let prior = unit_prior();
        for fam in ProposalFamily::all() {
            let q = Proposal::from_moments(
                fam,
                vec!["x".into()],
                vec![0.2],
                Matrix::identity(1).scaled(0.7),
                Some(prior.clone()),
            )
            .unwrap();
            let h = 0.005;
            let mut total = 0.0;
            let mut x = -40.0;
            while x < 40.0 {
                total += q.logpdf(&[x]).exp() * h;
                x += h;
            }
            assert!((total - 1.0).abs() < 1e-3, "{}: total {total}", fam.tag());
        }
    }

    #[test]
    fn pairwise_importance_reweighting_consistency() {
        // Draw from family A, weight by B/A: recovers the mean of B.
        let prior = unit_prior();
        let families = ProposalFamily::all();
        let mk = |fam| {
            Proposal::from_moments(
                fam,
                vec!["x".into()],
                vec![0.4],
                Matrix::identity(1).scaled(0.5),
                Some(prior.clone()),
            )
            .unwrap()
        };
        let mean_of = |q: &Proposal| {
            // All families here are symmetric about the fitted mean except
            // the mixture, whose prior component is centred at 0.
            if q.family() == ProposalFamily::Mix {
                0.95 * 0.4
            } else {
                0.4
            }
        };
        let mut rng = RngStream::new(55, 0);
        for fa in families {
            let qa = mk(fa);
            for fb in families {
                if fa == fb {
                    continue;
                }
                let qb = mk(fb);
                // Narrow-to-wide pairs have heavy-tailed weights, so the SE
                // comes from independent batch replicates of the weighted
                // mean rather than an ESS formula.
                let n_batches = 20;
                let per_batch = 3_000;
                let mut batch_means = Vec::with_capacity(n_batches);
                for _ in 0..n_batches {
                    let mut logw = Vec::with_capacity(per_batch);
                    let mut xs = Vec::with_capacity(per_batch);
                    for _ in 0..per_batch {
                        let x = qa.sample(&mut rng);
                        logw.push(qb.logpdf(&x) - qa.logpdf(&x));
                        xs.push(x[0]);
                    }
                    let lse = log_sum_exp(&logw).unwrap();
                    let est: f64 = logw
                        .iter()
                        .zip(&xs)
                        .map(|(l, xi)| (l - lse).exp() * xi)
                        .sum();
                    batch_means.push(est);
                }
                let (est, var) = mean_var(&batch_means);
                let se = (var / n_batches as f64).sqrt();
                let target = mean_of(&qb);
                // 4 sigma rather than 3: 72 simultaneous pair checks need a
                // multiplicity allowance to keep the test seed-stable.
                assert!(
                    (est - target).abs() < 4.0 * se.max(2e-3),
                    "{} -> {}: est {est}, target {target}, se {se}",
                    fa.tag(),
                    fb.tag()
                );
            }
        }
    }
}
