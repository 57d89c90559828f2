//! Poisson regression with a latent AR(p) process: X_t ~ Po(mu_t e^{Y_t}),
//! Y_t = sum a_i Y_{t-i} + e_t with e_t ~ N(0, 1/tau). The likelihood is
//! intractable, so evidence estimation runs a bootstrap particle filter as
//! the unbiased likelihood oracle; posterior sampling augments with the
//! latent path.

use super::CountSeries;
use crate::error::{Error, Result};
use crate::evidence::UnbiasedOracle;
use crate::mcmc::{run_chain, AdaptiveRwm, ChainOutput, McmcConfig, ScalarAutotune, Sweep};
use crate::numerics::{log_sum_exp, mvn_logpdf, mvn_sample, Matrix, RngStream, LN_2PI};
use crate::prior::{Dist1d, PriorSpec};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Stationary law of p consecutive latent values: companion matrix A,
/// innovation matrix S (only S_11 = 1/tau nonzero), and the solution of
/// Sigma = A Sigma A' + S.
#[derive(Debug, Clone)]
pub struct ArStationary {
    pub companion: Matrix,
    pub innovation: Matrix,
    pub cov: Matrix,
}

impl ArStationary {
    pub fn residual(&self) -> f64 {
        let asa = self
            .companion
            .matmul(&self.cov)
            .matmul(&self.companion.transpose());
        let mut rhs = asa;
        for i in 0..rhs.rows() {
            for j in 0..rhs.cols() {
                rhs[(i, j)] += self.innovation[(i, j)];
            }
        }
        self.cov.max_abs_diff(&rhs)
    }
}

/// Solve the stationary covariance by doubling: Sigma = sum_j A^j S (A^j)'.
pub fn ar_stationary_covariance(a: &[f64], tau: f64) -> Result<ArStationary> {
    let p = a.len();
    if p == 0 || tau <= 0.0 {
        return Err(Error::Config("AR order must be >= 1 and tau > 0".into()));
    }
    let mut companion = Matrix::zeros(p, p);
    for (j, &aj) in a.iter().enumerate() {
        companion[(0, j)] = aj;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    let mut innovation = Matrix::zeros(p, p);
    innovation[(0, 0)] = 1.0 / tau;

    let mut cov = innovation.clone();
    let mut power = companion.clone();
    for _ in 0..200 {
        let updated = {
            let aca = power.matmul(&cov).matmul(&power.transpose());
            let mut next = cov.clone();
            for i in 0..p {
                for j in 0..p {
                    next[(i, j)] += aca[(i, j)];
                }
            }
            next
        };
        cov = updated;
        power = power.matmul(&power);
        let pnorm = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| power[(i, j)].abs())
            .fold(0.0, f64::max);
        let cnorm = (0..p)
            .flat_map(|i| (0..p).map(move |j| (i, j)))
            .map(|(i, j)| cov[(i, j)].abs())
            .fold(0.0, f64::max);
        if !cnorm.is_finite() || cnorm > 1e12 / tau.max(1e-12) {
            return Err(Error::Numerical(format!(
                "AR coefficients {a:?} are not stationary"
            )));
        }
        if pnorm < 1e-200 {
            let out = ArStationary {
                companion,
                innovation,
                cov,
            };
            if out.residual() < 1e-12 {
                return Ok(out);
            }
            return Err(Error::Numerical(format!(
                "stationary solve residual {} too large",
                out.residual()
            )));
        }
    }
    Err(Error::Numerical(format!(
        "AR coefficients {a:?} are not stationary (doubling did not converge)"
    )))
}

/// Parameters of the observation and latent processes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PoisRegParams {
    /// No covariates: mu_t = phi.
    Conjugate { phi: f64, a: Vec<f64>, tau: f64 },
    /// mu_t = exp(z_t' beta).
    Regression {
        beta: Vec<f64>,
        a: Vec<f64>,
        tau: f64,
    },
}

impl PoisRegParams {
    pub fn order(&self) -> usize {
        match self {
            PoisRegParams::Conjugate { a, .. } | PoisRegParams::Regression { a, .. } => a.len(),
        }
    }

    fn a(&self) -> &[f64] {
        match self {
            PoisRegParams::Conjugate { a, .. } | PoisRegParams::Regression { a, .. } => a,
        }
    }

    fn tau(&self) -> f64 {
        match self {
            PoisRegParams::Conjugate { tau, .. } | PoisRegParams::Regression { tau, .. } => *tau,
        }
    }

    fn log_mu(&self, z: Option<&[f64]>) -> f64 {
        match self {
            PoisRegParams::Conjugate { phi, .. } => phi.ln(),
            PoisRegParams::Regression { beta, .. } => {
                let z = z.expect("regression model needs covariates");
                beta.iter().zip(z).map(|(b, v)| b * v).sum()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoisRegPriors {
    /// Gamma(shape, rate) on phi in the conjugate (no-covariate) model.
    pub phi: (f64, f64),
    /// iid N(0, sd^2) on regression coefficients.
    pub beta_sd: f64,
    /// N(0, sd^2) truncated to (-1, 1) per AR coefficient.
    pub a_sd: f64,
    /// Gamma(shape, rate) on tau.
    pub tau: (f64, f64),
}

impl Default for PoisRegPriors {
    fn default() -> Self {
        Self {
            phi: (1.0, 1.0),
            beta_sd: 1.0,
            a_sd: 1.0,
            tau: (1.0, 1.0),
        }
    }
}

/// Model binding: series (or none, for prior-only runs), AR order, priors.
#[derive(Debug, Clone)]
pub struct PoisRegModel {
    series: Option<CountSeries>,
    pub p: usize,
    pub priors: PoisRegPriors,
    prior_spec: PriorSpec,
}

impl PoisRegModel {
    pub fn new(series: CountSeries, p: usize, priors: PoisRegPriors) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("AR order must be at least 1".into()));
        }
        let prior_spec = build_prior_spec(Some(&series), p, &priors)?;
        Ok(Self {
            series: Some(series),
            p,
            priors,
            prior_spec,
        })
    }

    /// Degenerate model with no observations: every update reduces to its
    /// prior, which the prior-recovery test exercises.
    pub fn prior_only(p: usize, priors: PoisRegPriors) -> Result<Self> {
        let prior_spec = build_prior_spec(None, p, &priors)?;
        Ok(Self {
            series: None,
            p,
            priors,
            prior_spec,
        })
    }

    pub fn series(&self) -> Option<&CountSeries> {
        self.series.as_ref()
    }

    pub fn n(&self) -> usize {
        self.series.as_ref().map_or(0, |s| s.len())
    }

    pub fn has_covariates(&self) -> bool {
        self.series
            .as_ref()
            .map_or(false, |s| s.covariates.is_some())
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior_spec
    }

    pub fn n_mean_params(&self) -> usize {
        if self.has_covariates() {
            self.series.as_ref().unwrap().covariate_width()
        } else {
            1
        }
    }

    pub fn params_from_values(&self, values: &[f64]) -> PoisRegParams {
        let nm = self.n_mean_params();
        let a = values[nm..nm + self.p].to_vec();
        let tau = values[nm + self.p];
        if self.has_covariates() {
            PoisRegParams::Regression {
                beta: values[..nm].to_vec(),
                a,
                tau,
            }
        } else {
            PoisRegParams::Conjugate {
                phi: values[0],
                a,
                tau,
            }
        }
    }

    /// Unbiased likelihood oracle: a fresh particle filter run per call.
    pub fn oracle(&self, particles: usize) -> UnbiasedOracle<impl Fn(&[f64], &mut RngStream) -> f64 + Sync + '_> {
        UnbiasedOracle(move |values: &[f64], rng: &mut RngStream| {
            let series = self.series.as_ref().expect("oracle needs data");
            let params = self.params_from_values(values);
            particle_filter_loglik(series, &params, particles, rng).0
        })
    }
}

fn build_prior_spec(
    series: Option<&CountSeries>,
    p: usize,
    priors: &PoisRegPriors,
) -> Result<PriorSpec> {
    let mut comps = Vec::new();
    match series {
        Some(s) if s.covariates.is_some() => {
            for c in 0..s.covariate_width() {
                comps.push((
                    format!("beta{}", c + 1),
                    Dist1d::Normal {
                        mean: 0.0,
                        sd: priors.beta_sd,
                    },
                ));
            }
        }
        _ => {
            comps.push((
                "mu".to_string(),
                Dist1d::Gamma {
                    shape: priors.phi.0,
                    rate: priors.phi.1,
                },
            ));
        }
    }
    for i in 1..=p {
        comps.push((
            format!("a{i}"),
            Dist1d::TruncNormal {
                mean: 0.0,
                sd: priors.a_sd,
                lo: -1.0,
                hi: 1.0,
            },
        ));
    }
    comps.push((
        "tau".to_string(),
        Dist1d::Gamma {
            shape: priors.tau.0,
            rate: priors.tau.1,
        },
    ));
    PriorSpec::new(comps)
}

/// Bootstrap particle filter estimate of log pi(x | theta). Multinomial
/// resampling happens at the start of every step; the running product of
/// per-step mean weights is unbiased for the likelihood on the natural
/// scale. Returns the log estimate and, on total weight collapse, the step
/// at which it happened (the estimate is then -inf).
pub fn particle_filter_loglik(
    series: &CountSeries,
    params: &PoisRegParams,
    particles: usize,
    rng: &mut RngStream,
) -> (f64, Option<usize>) {
    assert!(particles >= 1, "need at least one particle");
    let n = series.len();
    if n == 0 {
        return (0.0, None);
    }
    let p = params.order();
    let tau = params.tau();
    let stationary = match ar_stationary_covariance(params.a(), tau) {
        Ok(s) => s,
        // Nonstationary coefficients have no initial law: zero likelihood.
        Err(_) => return (f64::NEG_INFINITY, Some(0)),
    };
    let chol = match stationary.cov.cholesky() {
        Ok(c) => c,
        Err(_) => return (f64::NEG_INFINITY, Some(0)),
    };
    let zero = vec![0.0; p];
    // Window ordered oldest..newest: (y_{t-p}, ..., y_{t-1}).
    let mut windows: Vec<Vec<f64>> = (0..particles)
        .map(|_| mvn_sample(&zero, &chol, rng))
        .collect();
    let mut log_weights = vec![-(particles as f64).ln(); particles];
    let mut log_lik = 0.0;
    let sd = (1.0 / tau).sqrt();
    let a = params.a();

    let mut cumulative = vec![0.0; particles];
    let mut next_windows = windows.clone();
    for t in 0..n {
        // Multinomial ancestor draw proportional to the previous weights.
        let max_lw = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (c, lw) in cumulative.iter_mut().zip(&log_weights) {
            total += (lw - max_lw).exp();
            *c = total;
        }
        let z_row = series.covariates.as_ref().map(|rows| rows[t].as_slice());
        let log_mu = params.log_mu(z_row);
        let x = series.counts[t] as f64;
        let log_fact = ln_gamma(x + 1.0);
        for j in 0..particles {
            let u: f64 = rng.random::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= u).min(particles - 1);
            let ancestor = &windows[k];
            let mean: f64 = (0..p).map(|i| a[i] * ancestor[p - 1 - i]).sum();
            let e: f64 = StandardNormal.sample(rng);
            let y = mean + sd * e;
            let w = &mut next_windows[j];
            for i in 0..p - 1 {
                w[i] = ancestor[i + 1];
            }
            w[p - 1] = y;
            let eta = log_mu + y;
            log_weights[j] = x * eta - eta.exp() - log_fact;
        }
        std::mem::swap(&mut windows, &mut next_windows);
        let step = log_sum_exp(&log_weights).expect("nonempty") - (particles as f64).ln();
        if step == f64::NEG_INFINITY {
            return (f64::NEG_INFINITY, Some(t + 1));
        }
        log_lik += step;
    }
    (log_lik, None)
}

/// Data-augmentation sampler: mu (or beta) update, joint (a, tau) proposals
/// from their ignore-y_IN conditionals accepted with the y_IN density
/// ratio, then per-coordinate autotuned random walks over the latent path.
pub struct PoisRegSampler {
    model: PoisRegModel,
    mean_values: Vec<f64>,
    a: Vec<f64>,
    tau: f64,
    y: Vec<f64>,
    y_in: Vec<f64>,
    stationary_chol: Matrix,
    beta_rwm: Option<AdaptiveRwm>,
    y_tuners: Vec<ScalarAutotune>,
    a_accept: (u64, u64),
    tau_accept: (u64, u64),
}

impl PoisRegSampler {
    pub fn new(model: PoisRegModel, rng: &mut RngStream) -> Result<Self> {
        let p = model.p;
        let n = model.n();
        let mean_values = if model.has_covariates() {
            vec![0.0; model.n_mean_params()]
        } else {
            // Start phi near the sample mean.
            vec![model
                .series()
                .map(|s| s.mean().max(0.1))
                .unwrap_or(1.0)]
        };
        let a = vec![0.2; p];
        let tau = 2.0;
        let stationary_chol = ar_stationary_covariance(&a, tau)?.cov.cholesky()?;
        let y_in = if n > 0 {
            mvn_sample(&vec![0.0; p], &stationary_chol, rng)
        } else {
            Vec::new()
        };
        let y = vec![0.0; n];
        let y_tuners = (0..n + if n > 0 { p } else { 0 })
            .map(|_| ScalarAutotune::new(0.5))
            .collect();
        let beta_rwm = if model.has_covariates() {
            Some(AdaptiveRwm::new(&vec![0.2; model.n_mean_params()]))
        } else {
            None
        };
        Ok(Self {
            model,
            mean_values,
            a,
            tau,
            y,
            y_in,
            stationary_chol,
            beta_rwm,
            y_tuners,
            a_accept: (0, 0),
            tau_accept: (0, 0),
        })
    }

    pub fn model(&self) -> &PoisRegModel {
        &self.model
    }

    fn n(&self) -> usize {
        self.model.n()
    }

    /// Latent value at time index t-j (1-based t in 1..=n, lag j >= 1).
    fn lag(&self, t: usize, j: usize) -> f64 {
        if t > j {
            self.y[t - j - 1]
        } else {
            // time t-j in 1-p..=0 maps to y_in[(t-j) + p - 1]
            self.y_in[t + self.model.p - j - 1]
        }
    }

    fn predictor(&self, t: usize) -> f64 {
        (1..=self.model.p).map(|j| self.a[j - 1] * self.lag(t, j)).sum()
    }

    fn log_mu_at(&self, t: usize) -> f64 {
        let series = self.model.series().expect("data present");
        match series.covariates.as_ref() {
            Some(rows) => rows[t - 1]
                .iter()
                .zip(&self.mean_values)
                .map(|(z, b)| z * b)
                .sum(),
            None => self.mean_values[0].ln(),
        }
    }

    fn y_in_logpdf(&self, a: &[f64], tau: f64) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        match ar_stationary_covariance(a, tau) {
            Ok(st) => match st.cov.cholesky() {
                Ok(chol) => {
                    mvn_logpdf(&self.y_in, &vec![0.0; self.model.p], &chol).expect("dims")
                }
                Err(_) => f64::NEG_INFINITY,
            },
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn ssr(&self, a: &[f64]) -> f64 {
        let mut ssr = 0.0;
        for t in 1..=self.n() {
            let pred: f64 = (1..=self.model.p).map(|j| a[j - 1] * self.lag(t, j)).sum();
            ssr += (self.y[t - 1] - pred).powi(2);
        }
        ssr
    }

    fn mean_update(&mut self, rng: &mut RngStream) {
        if self.n() == 0 {
            if self.model.has_covariates() {
                return;
            }
            let (shape, rate) = self.model.priors.phi;
            self.mean_values[0] = GammaDist::new(shape, 1.0 / rate)
                .expect("valid gamma")
                .sample(rng);
            return;
        }
        if self.model.has_covariates() {
            let series = self.model.series().unwrap().clone();
            let y = self.y.clone();
            let sd = self.model.priors.beta_sd;
            let target = move |beta: &[f64]| {
                let mut ll = 0.0;
                for (t, (&x, row)) in series
                    .counts
                    .iter()
                    .zip(series.covariates.as_ref().unwrap())
                    .enumerate()
                {
                    let eta: f64 =
                        row.iter().zip(beta).map(|(z, b)| z * b).sum::<f64>() + y[t];
                    ll += x as f64 * eta - eta.exp();
                }
                ll - beta.iter().map(|b| 0.5 * (b / sd).powi(2)).sum::<f64>()
            };
            let rwm = self.beta_rwm.as_mut().expect("regression model");
            let mut block = self.mean_values.clone();
            let mut lp = target(&block);
            rwm.step(&mut block, &mut lp, target, rng);
            self.mean_values = block;
        } else {
            // Conjugate Gamma draw for phi.
            let (shape, rate) = self.model.priors.phi;
            let series = self.model.series().unwrap();
            let sum_x: u64 = series.counts.iter().sum();
            let sum_ey: f64 = self.y.iter().map(|y| y.exp()).sum();
            self.mean_values[0] = GammaDist::new(shape + sum_x as f64, 1.0 / (rate + sum_ey))
                .expect("valid gamma")
                .sample(rng);
        }
    }

    fn a_update(&mut self, rng: &mut RngStream) {
        let p = self.model.p;
        let prior_var = self.model.priors.a_sd.powi(2);
        // S_a = (C_a^-1 + tau Y'Y)^-1, M_a = S_a (C_a^-1 m_a + tau Y'y).
        let mut precision = Matrix::zeros(p, p);
        for i in 0..p {
            precision[(i, i)] = 1.0 / prior_var;
        }
        let mut rhs = vec![0.0; p];
        for t in 1..=self.n() {
            let row: Vec<f64> = (1..=p).map(|j| self.lag(t, j)).collect();
            for i in 0..p {
                for j in 0..p {
                    precision[(i, j)] += self.tau * row[i] * row[j];
                }
                rhs[i] += self.tau * row[i] * self.y[t - 1];
            }
        }
        let chol = precision.cholesky().expect("SPD precision");
        let tmp = chol.solve_lower(&rhs);
        let mean = chol.solve_lower_transpose(&tmp);
        // Draw from N(mean, precision^-1): mean + L^-T z.
        let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let offset = chol.solve_lower_transpose(&z);
        let proposal: Vec<f64> = mean.iter().zip(&offset).map(|(m, o)| m + o).collect();

        self.a_accept.1 += 1;
        // Outside the truncated prior box the target is zero; outside the
        // stationarity region the y_IN density is undefined. Both reject.
        if proposal.iter().any(|v| v.abs() >= 1.0) {
            return;
        }
        let log_ratio = self.y_in_logpdf(&proposal, self.tau) - self.y_in_logpdf(&self.a, self.tau);
        if rng.random::<f64>().ln() < log_ratio {
            self.a = proposal;
            self.a_accept.0 += 1;
            self.refresh_stationary();
        }
    }

    fn tau_update(&mut self, rng: &mut RngStream) {
        let (shape, rate) = self.model.priors.tau;
        let post_shape = shape + self.n() as f64 / 2.0;
        let post_rate = rate + 0.5 * self.ssr(&self.a);
        let proposal = GammaDist::new(post_shape, 1.0 / post_rate)
            .expect("valid gamma")
            .sample(rng);
        self.tau_accept.1 += 1;
        let log_ratio = self.y_in_logpdf(&self.a, proposal) - self.y_in_logpdf(&self.a, self.tau);
        if rng.random::<f64>().ln() < log_ratio {
            self.tau = proposal;
            self.tau_accept.0 += 1;
            self.refresh_stationary();
        }
    }

    fn refresh_stationary(&mut self) {
        if let Ok(st) = ar_stationary_covariance(&self.a, self.tau) {
            if let Ok(chol) = st.cov.cholesky() {
                self.stationary_chol = chol;
            }
        }
    }

    fn y_in_coord_update(&mut self, rng: &mut RngStream) {
        let p = self.model.p;
        let n = self.n();
        for idx in 0..p {
            let mut tuner = self.y_tuners[n + idx].clone();
            let mut value = self.y_in[idx];
            let mut lp = self.y_in_coord_target(idx, value);
            let this = &*self;
            tuner.step(
                &mut value,
                &mut lp,
                |v| this.y_in_coord_target(idx, v),
                rng,
            );
            self.y_in[idx] = value;
            self.y_tuners[n + idx] = tuner;
        }
    }

    fn y_in_coord_target(&self, idx: usize, value: f64) -> f64 {
        let p = self.model.p;
        let mut y_in = self.y_in.clone();
        y_in[idx] = value;
        let zero = vec![0.0; p];
        let base = mvn_logpdf(&y_in, &zero, &self.stationary_chol).expect("dims");
        // Forward terms touching y_in: t = 1..=min(p, n).
        let mut ll = base;
        for t in 1..=p.min(self.n()) {
            let mut pred = 0.0;
            for j in 1..=p {
                let v = if t > j {
                    self.y[t - j - 1]
                } else {
                    y_in[t + p - j - 1]
                };
                pred += self.a[j - 1] * v;
            }
            let resid = self.y[t - 1] - pred;
            ll += -0.5 * self.tau * resid * resid;
        }
        ll
    }

    fn y_coord_update(&mut self, rng: &mut RngStream) {
        let n = self.n();
        let p = self.model.p;
        let series_counts: Vec<f64> = self
            .model
            .series()
            .unwrap()
            .counts
            .iter()
            .map(|&c| c as f64)
            .collect();
        for t in 1..=n {
            let x = series_counts[t - 1];
            let log_mu = self.log_mu_at(t);
            let pred_t = self.predictor(t);
            let mut tuner = self.y_tuners[t - 1].clone();
            let mut value = self.y[t - 1];
            let this = &*self;
            let target = |v: f64| {
                let eta = log_mu + v;
                let mut ll = x * eta - eta.exp();
                let resid = v - pred_t;
                ll += -0.5 * this.tau * resid * resid;
                // Downstream terms where y_t is a lag.
                for s in (t + 1)..=(t + p).min(n) {
                    let mut pred = 0.0;
                    for j in 1..=p {
                        let lagged = if s - j == t { v } else { this.lag(s, j) };
                        pred += this.a[j - 1] * lagged;
                    }
                    let r = this.y[s - 1] - pred;
                    ll += -0.5 * this.tau * r * r;
                }
                ll
            };
            let mut lp = target(value);
            tuner.step(&mut value, &mut lp, target, rng);
            self.y[t - 1] = value;
            self.y_tuners[t - 1] = tuner;
        }
    }

    pub fn values_vec(&self) -> Vec<f64> {
        let mut v = self.mean_values.clone();
        v.extend_from_slice(&self.a);
        v.push(self.tau);
        v
    }
}

impl Sweep for PoisRegSampler {
    fn names(&self) -> Vec<String> {
        self.model.prior().names()
    }

    fn values(&self) -> Vec<f64> {
        self.values_vec()
    }

    fn log_posterior(&self) -> f64 {
        let prior = self.model.prior().log_prior(&self.values_vec());
        if self.n() == 0 {
            return prior;
        }
        let mut ll = self.y_in_logpdf(&self.a, self.tau);
        ll += 0.5 * self.n() as f64 * (self.tau.ln() - LN_2PI);
        ll += -0.5 * self.tau * self.ssr(&self.a);
        for t in 1..=self.n() {
            let x = self.model.series().unwrap().counts[t - 1] as f64;
            let eta = self.log_mu_at(t) + self.y[t - 1];
            ll += x * eta - eta.exp() - ln_gamma(x + 1.0);
        }
        prior + ll
    }

    fn conditional_loglik(&mut self) -> f64 {
        // Given the latent path, observations are independent Poissons.
        let mut ll = 0.0;
        for t in 1..=self.n() {
            let x = self.model.series().unwrap().counts[t - 1] as f64;
            let eta = self.log_mu_at(t) + self.y[t - 1];
            ll += x * eta - eta.exp() - ln_gamma(x + 1.0);
        }
        ll
    }

    fn sweep(&mut self, _iteration: usize, rng: &mut RngStream) {
        self.mean_update(rng);
        self.a_update(rng);
        self.tau_update(rng);
        if self.n() > 0 {
            self.y_in_coord_update(rng);
            self.y_coord_update(rng);
        }
    }

    fn acceptance(&self) -> Vec<(String, f64)> {
        let frac = |(acc, tot): (u64, u64)| {
            if tot == 0 {
                1.0
            } else {
                acc as f64 / tot as f64
            }
        };
        let mut out = vec![
            ("a_block".to_string(), frac(self.a_accept)),
            ("tau_block".to_string(), frac(self.tau_accept)),
        ];
        if let Some(rwm) = &self.beta_rwm {
            out.push(("beta_block".to_string(), rwm.acceptance_rate()));
        }
        if !self.y_tuners.is_empty() {
            let mean_rate = self
                .y_tuners
                .iter()
                .map(|t| t.acceptance_rate())
                .sum::<f64>()
                / self.y_tuners.len() as f64;
            out.push(("y_scalar".to_string(), mean_rate));
        }
        out
    }
}

/// Run the data-augmentation chain.
pub fn poisreg_mcmc(
    model: &PoisRegModel,
    config: &McmcConfig,
    rng: &mut RngStream,
) -> Result<(ChainOutput, PoisRegSampler)> {
    let mut sampler = PoisRegSampler::new(model.clone(), rng)?;
    let chain = run_chain(&mut sampler, config, rng)?;
    Ok((chain, sampler))
}

/// Forward simulation: y_IN from the stationary law, the AR recursion, and
/// Poisson observations.
pub fn simulate_poisreg(
    params: &PoisRegParams,
    n: usize,
    covariates: Option<Vec<Vec<f64>>>,
    rng: &mut RngStream,
) -> Result<CountSeries> {
    if n == 0 {
        return Err(Error::Config("series length must be positive".into()));
    }
    let p = params.order();
    let tau = params.tau();
    let stationary = ar_stationary_covariance(params.a(), tau)?;
    let chol = stationary.cov.cholesky()?;
    let mut window = mvn_sample(&vec![0.0; p], &chol, rng);
    let sd = (1.0 / tau).sqrt();
    let mut counts = Vec::with_capacity(n);
    for t in 0..n {
        let mean: f64 = (0..p).map(|i| params.a()[i] * window[p - 1 - i]).sum();
        let e: f64 = StandardNormal.sample(rng);
        let y = mean + sd * e;
        window.rotate_left(1);
        window[p - 1] = y;
        let z = covariates.as_ref().map(|rows| rows[t].as_slice());
        let rate = (params.log_mu(z) + y).exp();
        let x = if rate > 0.0 {
            Poisson::new(rate).expect("positive rate").sample(rng) as u64
        } else {
            0
        };
        counts.push(x);
    }
    let series = CountSeries::new(counts)?;
    match covariates {
        Some(rows) => series.with_covariates(rows),
        None => Ok(series),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean_var;

    #[test]
    fn stationary_p1_closed_form() {
        let st = ar_stationary_covariance(&[0.6], 2.5).unwrap();
        let expected = 1.0 / (2.5 * (1.0 - 0.36));
        assert!((st.cov[(0, 0)] - expected).abs() < 1e-14);
        assert!(st.residual() < 1e-13);
    }

    #[test]
    fn stationary_zero_coefficients() {
        // p = 1: Sigma collapses to the innovation matrix S.
        let st1 = ar_stationary_covariance(&[0.0], 4.0).unwrap();
        assert!(st1.cov.max_abs_diff(&st1.innovation) < 1e-15);
        // p = 2: iid latent values, Sigma = (1/tau) I.
        let st2 = ar_stationary_covariance(&[0.0, 0.0], 4.0).unwrap();
        assert!(st2.cov.max_abs_diff(&Matrix::identity(2).scaled(0.25)) < 1e-15);
    }

    #[test]
    fn stationary_p2_matches_truncated_series() {
        let a = [0.5, -0.3];
        let tau = 1.7;
        let st = ar_stationary_covariance(&a, tau).unwrap();
        // Direct 200-term sum of A^j S A^j'.
        let mut total = Matrix::zeros(2, 2);
        let mut power = Matrix::identity(2);
        for _ in 0..200 {
            let term = power.matmul(&st.innovation).matmul(&power.transpose());
            for i in 0..2 {
                for j in 0..2 {
                    total[(i, j)] += term[(i, j)];
                }
            }
            power = power.matmul(&st.companion);
        }
        assert!(st.cov.max_abs_diff(&total) < 1e-10);
        assert!(st.residual() < 1e-12);
    }

    #[test]
    fn nonstationary_rejected() {
        assert!(ar_stationary_covariance(&[1.0], 1.0).is_err());
        assert!(ar_stationary_covariance(&[1.2], 1.0).is_err());
        assert!(ar_stationary_covariance(&[0.9, 0.9], 1.0).is_err());
    }

    #[test]
    fn pf_empty_series_is_zero() {
        let model = PoisRegModel::prior_only(1, PoisRegPriors::default()).unwrap();
        let _ = model; // n = 0 is handled before the filter runs
        let series = CountSeries::new(vec![1]).unwrap();
        let trimmed = CountSeries {
            counts: vec![],
            covariates: None,
        };
        let params = PoisRegParams::Conjugate {
            phi: 1.0,
            a: vec![0.5],
            tau: 2.0,
        };
        let mut rng = RngStream::new(170, 0);
        let (ll, fail) = particle_filter_loglik(&trimmed, &params, 64, &mut rng);
        assert_eq!(ll, 0.0);
        assert!(fail.is_none());
        drop(series);
    }

    #[test]
    fn pf_degenerate_latent_process_matches_poisson() {
        // tau huge: y ~ 0, the likelihood is a plain Poisson product.
        let series = CountSeries::new(vec![2, 0, 3, 1]).unwrap();
        let params = PoisRegParams::Conjugate {
            phi: 1.5,
            a: vec![0.4],
            tau: 1e8,
        };
        let mut rng = RngStream::new(171, 0);
        let (ll, _) = particle_filter_loglik(&series, &params, 512, &mut rng);
        let exact: f64 = series
            .counts
            .iter()
            .map(|&x| {
                let xf = x as f64;
                xf * 1.5f64.ln() - 1.5 - ln_gamma(xf + 1.0)
            })
            .sum();
        assert!((ll - exact).abs() < 1e-3, "pf {ll} vs exact {exact}");
    }

    #[test]
    fn pf_variance_shrinks_with_particles() {
        let mut rng = RngStream::new(172, 0);
        let params = PoisRegParams::Conjugate {
            phi: 1.0,
            a: vec![0.6],
            tau: 2.0,
        };
        let series = simulate_poisreg(&params, 12, None, &mut rng).unwrap();
        let spread = |m: usize, seed: u64| {
            let vals: Vec<f64> = (0..500)
                .map(|i| {
                    let mut r = RngStream::new(seed, i);
                    particle_filter_loglik(&series, &params, m, &mut r).0
                })
                .collect();
            let (_, var) = mean_var(&vals);
            var.sqrt()
        };
        let sd_small = spread(64, 173);
        let sd_big = spread(1024, 174);
        assert!(
            sd_big < sd_small,
            "sd at M=1024 ({sd_big}) not below sd at M=64 ({sd_small})"
        );
    }

    #[test]
    fn ignore_yin_conditionals_match_brute_force() {
        // Fix a latent path; the Gibbs-proposal densities for a and tau must
        // match the normalized product of the complete-data terms excluding
        // the y_IN factor, checked on a grid.
        let mut rng = RngStream::new(175, 0);
        let params = PoisRegParams::Conjugate {
            phi: 1.2,
            a: vec![0.5],
            tau: 2.0,
        };
        let series = simulate_poisreg(&params, 25, None, &mut rng).unwrap();
        let model = PoisRegModel::new(series, 1, PoisRegPriors::default()).unwrap();
        let mut sampler = PoisRegSampler::new(model, &mut rng).unwrap();
        // Use a dispersed latent state.
        for (i, y) in sampler.y.iter_mut().enumerate() {
            *y = 0.3 * ((i as f64 * 0.7).sin());
        }
        sampler.y_in[0] = 0.25;

        // Brute force for a on a grid (excluding the y_IN factor and the
        // truncation, which only renormalizes within the grid).
        let n = sampler.n();
        let prior_var = sampler.model.priors.a_sd.powi(2);
        let mut precision = 1.0 / prior_var;
        let mut rhs = 0.0;
        for t in 1..=n {
            let lag = sampler.lag(t, 1);
            precision += sampler.tau * lag * lag;
            rhs += sampler.tau * lag * sampler.y[t - 1];
        }
        let s_a = 1.0 / precision;
        let m_a = s_a * rhs;

        // The grid spans the untruncated Gaussian's support; the proposal
        // density in (6) is the untruncated conditional, truncation enters
        // only through the accept step.
        let step = 0.002;
        let grid: Vec<f64> = (0..4000).map(|i| -4.0 + step * i as f64).collect();
        let target = |a: f64| {
            let mut lp = -0.5 * a * a / prior_var;
            for t in 1..=n {
                let r = sampler.y[t - 1] - a * sampler.lag(t, 1);
                lp += -0.5 * sampler.tau * r * r;
            }
            lp
        };
        let lps: Vec<f64> = grid.iter().map(|&a| target(a)).collect();
        let lse = crate::numerics::log_sum_exp(&lps).unwrap();
        for (i, &a) in grid.iter().enumerate() {
            let brute = (lps[i] - lse).exp() / step;
            let gauss =
                (-0.5 * (a - m_a).powi(2) / s_a).exp() / (2.0 * std::f64::consts::PI * s_a).sqrt();
            assert!(
                (brute - gauss).abs() < 1e-6 * (1.0 + gauss),
                "a = {a}: brute {brute} vs gaussian {gauss}"
            );
        }

        // Brute force for tau on a grid.
        let (shape, rate) = sampler.model.priors.tau;
        let post_shape = shape + n as f64 / 2.0;
        let post_rate = rate + 0.5 * sampler.ssr(&sampler.a.clone());
        let tau_grid: Vec<f64> = (1..6000).map(|i| 0.01 * i as f64).collect();
        let tau_target = |tau: f64| {
            // Gamma(1,1) prior plus n/2 log tau - tau/2 SSR.
            -tau + 0.5 * n as f64 * tau.ln() - 0.5 * tau * sampler.ssr(&sampler.a.clone())
        };
        let lps: Vec<f64> = tau_grid.iter().map(|&t| tau_target(t)).collect();
        let lse = crate::numerics::log_sum_exp(&lps).unwrap();
        for (i, &tau) in tau_grid.iter().enumerate() {
            let brute = (lps[i] - lse).exp() / 0.01;
            let gamma_pdf = (post_shape * post_rate.ln() - ln_gamma(post_shape)
                + (post_shape - 1.0) * tau.ln()
                - post_rate * tau)
                .exp();
            assert!(
                (brute - gamma_pdf).abs() < 1e-6 * (1.0 + gamma_pdf),
                "tau = {tau}: brute {brute} vs gamma {gamma_pdf}"
            );
        }
    }

    #[test]
    fn prior_only_run_recovers_prior_moments() {
        let model = PoisRegModel::prior_only(1, PoisRegPriors::default()).unwrap();
        let mut rng = RngStream::new(176, 0);
        let (chain, _) =
            poisreg_mcmc(&model, &McmcConfig::new(20_000, 1_000, 1), &mut rng).unwrap();
        let tau = chain.column_by_name("tau").unwrap();
        let (m, v) = mean_var(&tau);
        // Exp(1) prior: mean 1, variance 1.
        assert!((m - 1.0).abs() < 0.05, "tau prior mean {m}");
        assert!((v - 1.0).abs() < 0.15, "tau prior var {v}");
        let mu = chain.column_by_name("mu").unwrap();
        let (mm, _) = mean_var(&mu);
        assert!((mm - 1.0).abs() < 0.05, "mu prior mean {mm}");
        let a = chain.column_by_name("a1").unwrap();
        assert!(a.iter().all(|v| v.abs() < 1.0));
        let (am, _) = mean_var(&a);
        assert!(am.abs() < 0.05, "a prior mean {am}");
    }

    #[test]
    fn posterior_recovers_simulation_truth() {
        let truth = PoisRegParams::Conjugate {
            phi: 1.0,
            a: vec![0.55],
            tau: 2.0,
        };
        let mut rng = RngStream::new(177, 0);
        let series = simulate_poisreg(&truth, 250, None, &mut rng).unwrap();
        let model = PoisRegModel::new(series, 1, PoisRegPriors::default()).unwrap();
        let (chain, _) =
            poisreg_mcmc(&model, &McmcConfig::new(8_000, 2_000, 1), &mut rng).unwrap();
        for (name, value) in [("mu", 1.0), ("a1", 0.55), ("tau", 2.0)] {
            let mut col = chain.column_by_name(name).unwrap();
            col.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let lo = col[(col.len() as f64 * 0.005) as usize];
            let hi = col[(col.len() as f64 * 0.995) as usize];
            assert!(
                (lo..=hi).contains(&value),
                "{name}: truth {value} outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn simulate_degenerate_latent_is_poisson() {
        let params = PoisRegParams::Conjugate {
            phi: 3.0,
            a: vec![0.5],
            tau: 1e8,
        };
        let mut rng = RngStream::new(178, 0);
        let series = simulate_poisreg(&params, 8_000, None, &mut rng).unwrap();
        let vals: Vec<f64> = series.counts.iter().map(|&c| c as f64).collect();
        let (m, v) = mean_var(&vals);
        let se = (v / vals.len() as f64).sqrt();
        assert!((m - 3.0).abs() < 3.0 * se, "mean {m}");
    }
}
