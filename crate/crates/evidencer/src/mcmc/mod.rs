//! Generic MCMC engine: the chain runner handles burn-in, thinning, storage,
//! NaN aborts and seed provenance; models plug in as [`Sweep`]
//! implementations built from [`AdaptiveRwm`] / [`ScalarAutotune`] blocks and
//! their own Gibbs updates.

mod adapt;

pub use adapt::{AdaptiveRwm, ScalarAutotune};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::prior::{PriorSpec, Support};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Ordered named parameter vector with per-coordinate support descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    names: Vec<String>,
    values: Vec<f64>,
    supports: Vec<Support>,
}

impl ParamVector {
    pub fn new(names: Vec<String>, values: Vec<f64>, supports: Vec<Support>) -> Result<Self> {
        if names.len() != values.len() || names.len() != supports.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: values.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n) {
                return Err(Error::Config(format!("duplicate parameter name {n}")));
            }
        }
        for (i, (&v, s)) in values.iter().zip(&supports).enumerate() {
            if !s.contains(v) {
                return Err(Error::Config(format!(
                    "value {v} outside support of {}",
                    names[i]
                )));
            }
        }
        Ok(Self {
            names,
            values,
            supports,
        })
    }

    pub fn from_prior_spec(prior: &PriorSpec, values: Vec<f64>) -> Result<Self> {
        Self::new(prior.names(), values, prior.supports())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn supports(&self) -> &[Support] {
        &self.supports
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub n_burnin: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Record the conditional log likelihood of the observed data per
    /// retained draw (the harmonic-mean input). Costs an extra evaluation
    /// per retained draw for latent-variable models.
    #[serde(default)]
    pub record_conditional_loglik: bool,
}

fn default_thin() -> usize {
    1
}

impl McmcConfig {
    pub fn new(n_iter: usize, n_burnin: usize, thin: usize) -> Self {
        Self {
            n_iter,
            n_burnin,
            thin,
            record_conditional_loglik: false,
        }
    }

    pub fn with_conditional_loglik(mut self) -> Self {
        self.record_conditional_loglik = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if self.n_iter < self.n_burnin {
            return Err(Error::Config(format!(
                "n_iter {} < n_burnin {}",
                self.n_iter, self.n_burnin
            )));
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.n_burnin) / self.thin
    }
}

/// Retained MCMC draws plus acceptance diagnostics and seed provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    /// Unnormalized log posterior at each retained draw.
    pub log_post: Vec<f64>,
    /// log P(x | y_i, theta_i) per retained draw, when requested.
    pub cond_loglik: Option<Vec<f64>>,
    pub acceptance: BTreeMap<String, f64>,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub root_seed: u64,
    pub stream_id: u64,
    pub wall_time_s: f64,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.column(j))
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for draw in &self.draws {
            for (m, v) in mean.iter_mut().zip(draw) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.draws.len().max(1) as f64;
        }
        mean
    }

    /// Index of the highest-log-posterior retained draw; ties broken by
    /// first occurrence.
    pub fn map_index(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &lp) in self.log_post.iter().enumerate() {
            if best.map_or(true, |(_, b)| lp > b) {
                best = Some((i, lp));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Persist draws as CSV (header = parameter names) with a JSON sidecar
    /// holding acceptance rates, seed and timing.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(&self.names)?;
        for draw in &self.draws {
            w.write_record(draw.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        let sidecar = csv_path.with_extension("meta.json");
        let meta = serde_json::json!({
            "acceptance": self.acceptance,
            "n_iter": self.n_iter,
            "n_burnin": self.n_burnin,
            "thin": self.thin,
            "root_seed": self.root_seed,
            "stream_id": self.stream_id,
            "wall_time_s": self.wall_time_s,
            "n_draws": self.n_draws(),
        });
        let mut f = std::fs::File::create(sidecar)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// One full MCMC sweep over all blocks of a model. The chain runner owns
/// scheduling; the model owns its update structure.
pub trait Sweep {
    fn names(&self) -> Vec<String>;
    fn values(&self) -> Vec<f64>;
    /// Unnormalized log posterior of the current state (complete-data
    /// posterior for latent-variable models).
    fn log_posterior(&self) -> f64;
    /// log P(x | y, theta) at the current state; the plain log likelihood
    /// when there is no latent state.
    fn conditional_loglik(&mut self) -> f64;
    fn sweep(&mut self, iteration: usize, rng: &mut RngStream);
    fn acceptance(&self) -> Vec<(String, f64)>;
    /// Called after each retained draw; models use it to track snapshots
    /// (e.g. the highest-posterior state for Chib's method).
    fn on_retained(&mut self, _draw_index: usize) {}
}

/// Run a chain: burn-in, thinning, storage, NaN abort, acceptance
/// aggregation and timing. Draw count is floor((n_iter - n_burnin)/thin).
pub fn run_chain<S: Sweep>(
    sweeper: &mut S,
    config: &McmcConfig,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    config.validate()?;
    let start = Instant::now();
    let lp0 = sweeper.log_posterior();
    if lp0 == f64::NEG_INFINITY {
        return Err(Error::ZeroPriorSupport);
    }
    if lp0.is_nan() {
        return Err(Error::NanEncountered { iteration: 0 });
    }
    let n_retained = config.n_retained();
    let mut draws = Vec::with_capacity(n_retained);
    let mut log_post = Vec::with_capacity(n_retained);
    let mut cond_loglik = if config.record_conditional_loglik {
        Some(Vec::with_capacity(n_retained))
    } else {
        None
    };
    for it in 0..config.n_iter {
        sweeper.sweep(it, rng);
        let lp = sweeper.log_posterior();
        if lp.is_nan() {
            return Err(Error::NanEncountered { iteration: it });
        }
        if it >= config.n_burnin && (it - config.n_burnin + 1) % config.thin == 0 {
            draws.push(sweeper.values());
            log_post.push(lp);
            if let Some(trace) = cond_loglik.as_mut() {
                trace.push(sweeper.conditional_loglik());
            }
            sweeper.on_retained(draws.len() - 1);
        }
    }
    let acceptance: BTreeMap<String, f64> = sweeper.acceptance().into_iter().collect();
    Ok(ChainOutput {
        names: sweeper.names(),
        draws,
        log_post,
        cond_loglik,
        acceptance,
        n_iter: config.n_iter,
        n_burnin: config.n_burnin,
        thin: config.thin,
        root_seed: rng.root_seed(),
        stream_id: rng.stream_id(),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Plain evaluator-based target: a prior spec plus a log-likelihood closure,
/// sampled with a single joint adaptive random-walk block. Covers conjugate
/// test targets and power-posterior rungs.
pub struct BasicSweeper<L>
where
    L: Fn(&[f64]) -> f64,
{
    prior: PriorSpec,
    log_lik: L,
    /// Likelihood tempering exponent; 1 for the ordinary posterior.
    pub temper: f64,
    theta: Vec<f64>,
    lp_cache: f64,
    rwm: AdaptiveRwm,
}

impl<L> BasicSweeper<L>
where
    L: Fn(&[f64]) -> f64,
{
    pub fn new(prior: PriorSpec, log_lik: L, init: Option<Vec<f64>>) -> Self {
        let theta = init.unwrap_or_else(|| prior.init_values());
        let rwm = AdaptiveRwm::new(&prior.nominal_sds());
        let mut s = Self {
            prior,
            log_lik,
            temper: 1.0,
            theta,
            lp_cache: f64::NEG_INFINITY,
            rwm,
        };
        s.lp_cache = s.log_target(&s.theta.clone());
        s
    }

    pub fn with_temper(mut self, t: f64) -> Self {
        self.temper = t;
        self.lp_cache = self.log_target(&self.theta.clone());
        self
    }

    pub fn set_temper(&mut self, t: f64) {
        self.temper = t;
        self.lp_cache = self.log_target(&self.theta.clone());
    }

    fn log_target(&self, theta: &[f64]) -> f64 {
        let lp = self.prior.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        lp + self.temper * (self.log_lik)(theta)
    }

    pub fn current_loglik(&self) -> f64 {
        (self.log_lik)(&self.theta)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

impl<L> Sweep for BasicSweeper<L>
where
    L: Fn(&[f64]) -> f64,
{
    fn names(&self) -> Vec<String> {
        self.prior.names()
    }

    fn values(&self) -> Vec<f64> {
        self.theta.clone()
    }

    fn log_posterior(&self) -> f64 {
        if self.rwm.saw_nan() {
            return f64::NAN;
        }
        self.lp_cache
    }

    fn conditional_loglik(&mut self) -> f64 {
        self.current_loglik()
    }

    fn sweep(&mut self, _iteration: usize, rng: &mut RngStream) {
        let prior = self.prior.clone();
        let temper = self.temper;
        let lik = &self.log_lik;
        self.rwm.step(
            &mut self.theta,
            &mut self.lp_cache,
            |t| {
                let lp = prior.log_prior(t);
                if lp == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    lp + temper * lik(t)
                }
            },
            rng,
        );
    }

    fn acceptance(&self) -> Vec<(String, f64)> {
        vec![("joint".into(), self.rwm.acceptance_rate())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::Dist1d;

    fn toy_prior() -> PriorSpec {
        PriorSpec::new(vec![("theta".into(), Dist1d::Normal { mean: 0.0, sd: 1.0 })]).unwrap()
    }

    fn toy_loglik(data: Vec<f64>) -> impl Fn(&[f64]) -> f64 {
        move |theta: &[f64]| {
            let t = theta[0];
            data.iter().map(|x| -0.5 * (x - t) * (x - t)).sum::<f64>()
        }
    }

    #[test]
    fn conjugate_posterior_mean_recovered() {
        let mut rng = RngStream::new(41, 0);
        let data: Vec<f64> = (0..20).map(|i| 0.8 + 0.1 * (i as f64 % 5.0)).collect();
        let s: f64 = data.iter().sum();
        let n = data.len() as f64;
        let post_mean = s / (n + 1.0);
        let post_var = 1.0 / (n + 1.0);

        let mut sweeper = BasicSweeper::new(toy_prior(), toy_loglik(data), None);
        let config = McmcConfig::new(20_000, 2_000, 1);
        let out = run_chain(&mut sweeper, &config, &mut rng).unwrap();
        assert_eq!(out.n_draws(), 18_000);
        let draws = out.column(0);
        let (mean, _) = crate::numerics::mean_var(&draws);
        // 3 SEs with a generous autocorrelation allowance.
        let se = crate::numerics::batch_means_se(&draws, 20);
        assert!(
            (mean - post_mean).abs() < 3.0 * se.max((post_var / n) .sqrt() * 0.3),
            "mean {mean} vs analytic {post_mean} (se {se})"
        );
    }

    #[test]
    fn zero_retained_chain_is_valid() {
        let mut rng = RngStream::new(42, 0);
        let mut sweeper = BasicSweeper::new(toy_prior(), |_: &[f64]| 0.0, None);
        let config = McmcConfig::new(50, 50, 1);
        let out = run_chain(&mut sweeper, &config, &mut rng).unwrap();
        assert_eq!(out.n_draws(), 0);
        assert_eq!(out.n_iter, 50);
        assert_eq!(out.n_burnin, 50);
        assert!(out.acceptance.contains_key("joint"));
    }

    #[test]
    fn thinning_count_matches_floor() {
        let mut rng = RngStream::new(43, 0);
        let mut sweeper = BasicSweeper::new(toy_prior(), |_: &[f64]| 0.0, None);
        let config = McmcConfig::new(107, 10, 10);
        let out = run_chain(&mut sweeper, &config, &mut rng).unwrap();
        assert_eq!(out.n_draws(), (107 - 10) / 10);
    }

    #[test]
    fn zero_prior_support_start_errors() {
        let mut rng = RngStream::new(44, 0);
        let prior =
            PriorSpec::new(vec![("a".into(), Dist1d::exponential(1.0))]).unwrap();
        let mut sweeper = BasicSweeper::new(prior, |_: &[f64]| 0.0, Some(vec![-1.0]));
        let config = McmcConfig::new(10, 0, 1);
        assert!(matches!(
            run_chain(&mut sweeper, &config, &mut rng),
            Err(Error::ZeroPriorSupport)
        ));
    }

    #[test]
    fn nan_target_aborts_with_iteration() {
        let mut rng = RngStream::new(45, 0);
        let mut sweeper = BasicSweeper::new(
            toy_prior(),
            |t: &[f64]| if t[0] > 0.5 { f64::NAN } else { 0.0 },
            Some(vec![0.0]),
        );
        let config = McmcConfig::new(5_000, 0, 1);
        match run_chain(&mut sweeper, &config, &mut rng) {
            Err(Error::NanEncountered { .. }) => {}
            other => panic!("expected NaN abort, got {:?}", other.map(|o| o.n_draws())),
        }
    }

    #[test]
    fn identical_seed_bitwise_identical_output() {
        let data: Vec<f64> = vec![0.3, -0.2, 1.4, 0.9];
        let run = || {
            let mut rng = RngStream::new(46, 3);
            let mut sweeper = BasicSweeper::new(toy_prior(), toy_loglik(data.clone()), None);
            let config = McmcConfig::new(500, 100, 2);
            run_chain(&mut sweeper, &config, &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.log_post, b.log_post);
        assert_eq!(a.acceptance, b.acceptance);
    }

    #[test]
    fn chain_moments_match_importance_sampling() {
        // Marginal-moment cross-check against an independent self-normalized
        // importance sampling estimate with the prior as proposal.
        let mut rng = RngStream::new(47, 0);
        let data = vec![0.5, 1.5, 0.9, 1.1, 0.2, 0.8];
        let lik = toy_loglik(data.clone());
        let mut sweeper = BasicSweeper::new(toy_prior(), toy_loglik(data.clone()), None);
        let config = McmcConfig::new(40_000, 4_000, 1);
        let out = run_chain(&mut sweeper, &config, &mut rng).unwrap();
        let draws = out.column(0);
        let (chain_mean, _) = crate::numerics::mean_var(&draws);
        let chain_se = crate::numerics::batch_means_se(&draws, 20);

        let prior = toy_prior();
        let mut is_rng = RngStream::new(48, 0);
        let n = 200_000;
        let mut ws = Vec::with_capacity(n);
        let mut ts = Vec::with_capacity(n);
        for _ in 0..n {
            let t = prior.sample(&mut is_rng);
            ws.push(lik(&t));
            ts.push(t[0]);
        }
        let lse = crate::numerics::log_sum_exp(&ws).unwrap();
        let weights: Vec<f64> = ws.iter().map(|w| (w - lse).exp()).collect();
        let is_mean: f64 = weights.iter().zip(&ts).map(|(w, t)| w * t).sum();
        let ess: f64 = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let is_var: f64 = weights
            .iter()
            .zip(&ts)
            .map(|(w, t)| w * (t - is_mean).powi(2))
            .sum();
        let is_se = (is_var / ess).sqrt();

        let combined = (chain_se.powi(2) + is_se.powi(2)).sqrt();
        assert!(
            (chain_mean - is_mean).abs() < 3.0 * combined,
            "chain {chain_mean} vs IS {is_mean} (combined se {combined})"
        );
    }

    #[test]
    fn acceptance_within_bounds_after_adaptation() {
        let mut rng = RngStream::new(49, 0);
        let data = vec![1.0, 2.0, 1.5];
        let mut sweeper = BasicSweeper::new(toy_prior(), toy_loglik(data), None);
        let config = McmcConfig::new(20_000, 1_000, 1);
        let out = run_chain(&mut sweeper, &config, &mut rng).unwrap();
        let rate = out.acceptance["joint"];
        assert!((0.05..=0.95).contains(&rate), "acceptance {rate}");
    }

    #[test]
    fn param_vector_validation() {
        let ok = ParamVector::new(
            vec!["a".into(), "b".into()],
            vec![0.5, -1.0],
            vec![Support::Positive, Support::Unbounded],
        );
        assert!(ok.is_ok());
        let bad_support = ParamVector::new(
            vec!["a".into()],
            vec![-0.5],
            vec![Support::Positive],
        );
        assert!(bad_support.is_err());
        let dup = ParamVector::new(
            vec!["a".into(), "a".into()],
            vec![0.5, 0.7],
            vec![Support::Positive, Support::Positive],
        );
        assert!(dup.is_err());
    }
}
