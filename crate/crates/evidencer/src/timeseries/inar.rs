//! INAR(p): counts evolve by binomial thinning of the last p values plus
//! Poisson innovations. The transition pmf is a finite convolution, so the
//! likelihood is exact; posterior sampling is direct adaptive random-walk
//! Metropolis against it.

use super::CountSeries;
use crate::error::{Error, Result};
use crate::evidence::{ExactOracle, TemperedTarget};
use crate::mcmc::{run_chain, BasicSweeper, ChainOutput, McmcConfig};
use crate::numerics::RngStream;
use crate::prior::{Dist1d, PriorSpec};
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Thinning and innovation parameters, either constant or linked to
/// covariates: alpha_i^t = logistic(z_t' beta_i), lambda^t = exp(z_t' gamma).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InarParams {
    Plain { alpha: Vec<f64>, lambda: f64 },
    Covariate { beta: Vec<Vec<f64>>, gamma: Vec<f64> },
}

impl InarParams {
    pub fn order(&self) -> usize {
        match self {
            InarParams::Plain { alpha, .. } => alpha.len(),
            InarParams::Covariate { beta, .. } => beta.len(),
        }
    }

    /// Per-time (alpha_1..alpha_p, lambda).
    pub fn at_time(&self, z: Option<&[f64]>) -> (Vec<f64>, f64) {
        match self {
            InarParams::Plain { alpha, lambda } => (alpha.clone(), *lambda),
            InarParams::Covariate { beta, gamma } => {
                let z = z.expect("covariate model needs covariate rows");
                let alphas = beta
                    .iter()
                    .map(|b| {
                        let eta: f64 = b.iter().zip(z).map(|(c, v)| c * v).sum();
                        1.0 / (1.0 + (-eta).exp())
                    })
                    .collect();
                let eta_l: f64 = gamma.iter().zip(z).map(|(c, v)| c * v).sum();
                (alphas, eta_l.exp())
            }
        }
    }
}

fn log_poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)
}

/// Binomial(n, p) pmf over 0..=n in natural scale.
fn binomial_pmf_row(n: u64, p: f64) -> Vec<f64> {
    let n_us = n as usize;
    let mut row = vec![0.0; n_us + 1];
    if p <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if p >= 1.0 {
        row[n_us] = 1.0;
        return row;
    }
    // Log-space fill, stable for any n that fits a count series.
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let lgn = ln_gamma(n as f64 + 1.0);
    for (k, slot) in row.iter_mut().enumerate() {
        let kf = k as f64;
        *slot = (lgn - ln_gamma(kf + 1.0) - ln_gamma(n as f64 - kf + 1.0)
            + kf * lp
            + (n as f64 - kf) * lq)
            .exp();
    }
    row
}

/// log P(X_t = x_t | history), where `history[j-1]` = x_{t-j}. The
/// convolution over thinning outcomes is evaluated by dynamic programming
/// over the partial survivor sum, truncated at x_t.
pub fn inar_transition_logpmf(x_t: u64, history: &[u64], alphas: &[f64], lambda: f64) -> f64 {
    debug_assert_eq!(history.len(), alphas.len());
    let cap = x_t as usize;
    // dp[m] = P(sum of thinned survivors so far = m), m <= x_t.
    let mut dp = vec![0.0f64; cap + 1];
    dp[0] = 1.0;
    for (j, (&h, &a)) in history.iter().zip(alphas).enumerate() {
        let _ = j;
        if h == 0 {
            continue;
        }
        let pmf = binomial_pmf_row(h, a);
        let mut next = vec![0.0f64; cap + 1];
        for m in 0..=cap {
            let base = dp[m];
            if base == 0.0 {
                continue;
            }
            let kmax = (cap - m).min(h as usize);
            for (k, pk) in pmf.iter().take(kmax + 1).enumerate() {
                next[m + k] += base * pk;
            }
        }
        dp = next;
    }
    let mut total = 0.0;
    for (m, &pm) in dp.iter().enumerate() {
        if pm > 0.0 {
            total += pm * log_poisson_pmf(x_t - m as u64, lambda).exp();
        }
    }
    if total <= 0.0 {
        f64::NEG_INFINITY
    } else {
        total.ln()
    }
}

/// INAR model bound to a series: conditions on the first p observations.
#[derive(Debug, Clone)]
pub struct InarModel {
    pub series: CountSeries,
    pub p: usize,
    pub covariate_link: bool,
    prior: PriorSpec,
}

impl InarModel {
    pub fn new(series: CountSeries, p: usize, covariate_link: bool) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("INAR order must be at least 1".into()));
        }
        if series.len() <= p {
            return Err(Error::Config(format!(
                "series length {} leaves no observations after conditioning on {p} initial values",
                series.len()
            )));
        }
        if covariate_link && series.covariates.is_none() {
            return Err(Error::Config(
                "covariate-linked INAR needs covariate rows".into(),
            ));
        }
        let prior = if covariate_link {
            let width = series.covariate_width();
            let mut comps = Vec::new();
            for i in 1..=p {
                for c in 0..width {
                    comps.push((
                        format!("beta{i}_{c}"),
                        Dist1d::Normal { mean: 0.0, sd: 1.0 },
                    ));
                }
            }
            for c in 0..width {
                comps.push((format!("gamma_{c}"), Dist1d::Normal { mean: 0.0, sd: 1.0 }));
            }
            PriorSpec::new(comps)?
        } else {
            let mut comps = Vec::new();
            for i in 1..=p {
                comps.push((format!("alpha{i}"), Dist1d::Uniform { lo: 0.0, hi: 1.0 }));
            }
            comps.push(("lambda".to_string(), Dist1d::exponential(1.0)));
            PriorSpec::new(comps)?
        };
        Ok(Self {
            series,
            p,
            covariate_link,
            prior,
        })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn params_from_values(&self, values: &[f64]) -> InarParams {
        if self.covariate_link {
            let width = self.series.covariate_width();
            let beta: Vec<Vec<f64>> = (0..self.p)
                .map(|i| values[i * width..(i + 1) * width].to_vec())
                .collect();
            let gamma = values[self.p * width..(self.p + 1) * width].to_vec();
            InarParams::Covariate { beta, gamma }
        } else {
            InarParams::Plain {
                alpha: values[..self.p].to_vec(),
                lambda: values[self.p],
            }
        }
    }

    pub fn loglik_values(&self, values: &[f64]) -> f64 {
        inar_loglik(&self.series, self.p, &self.params_from_values(values))
    }

    pub fn oracle(&self) -> ExactOracle<impl Fn(&[f64]) -> f64 + Sync + '_> {
        ExactOracle(move |v: &[f64]| self.loglik_values(v))
    }

    pub fn sweeper(&self) -> BasicSweeper<impl Fn(&[f64]) -> f64 + '_> {
        BasicSweeper::new(self.prior.clone(), move |v: &[f64]| self.loglik_values(v), None)
    }
}

impl TemperedTarget for InarModel {
    fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.loglik_values(theta)
    }
}

/// Exact conditional log likelihood of the observations after the first p.
pub fn inar_loglik(series: &CountSeries, p: usize, params: &InarParams) -> f64 {
    debug_assert_eq!(params.order(), p);
    let counts = &series.counts;
    let mut total = 0.0;
    let mut history = vec![0u64; p];
    for t in p..counts.len() {
        for j in 0..p {
            history[j] = counts[t - 1 - j];
        }
        let z = series.covariates.as_ref().map(|rows| rows[t].as_slice());
        let (alphas, lambda) = params.at_time(z);
        total += inar_transition_logpmf(counts[t], &history, &alphas, lambda);
        if total == f64::NEG_INFINITY {
            return total;
        }
    }
    total
}

/// Posterior sampling by direct-likelihood adaptive random walk.
pub fn inar_mcmc(
    model: &InarModel,
    config: &McmcConfig,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    let mut sweeper = model.sweeper();
    run_chain(&mut sweeper, config, rng)
}

/// Forward-simulate an INAR(p) series of total length `n` (the first p
/// values seed the recursion from iid Poisson innovations).
pub fn simulate_inar(
    params: &InarParams,
    n: usize,
    covariates: Option<Vec<Vec<f64>>>,
    rng: &mut RngStream,
) -> Result<CountSeries> {
    let p = params.order();
    if n <= p {
        return Err(Error::Config(format!(
            "series length {n} must exceed the order {p}"
        )));
    }
    let mut counts: Vec<u64> = Vec::with_capacity(n);
    for t in 0..n {
        let z = covariates.as_ref().map(|rows| rows[t].as_slice());
        let (alphas, lambda) = params.at_time(z);
        let mut x = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive lambda").sample(rng) as u64
        } else {
            0
        };
        if t >= p {
            for (j, &a) in alphas.iter().enumerate() {
                let h = counts[t - 1 - j];
                if h > 0 && a > 0.0 {
                    x += if a >= 1.0 {
                        h
                    } else {
                        Binomial::new(h, a).expect("valid binomial").sample(rng)
                    };
                }
            }
        }
        counts.push(x);
    }
    let series = CountSeries::new(counts)?;
    match covariates {
        Some(rows) => series.with_covariates(rows),
        None => Ok(series),
    }
}
