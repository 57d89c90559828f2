use crate::numerics::{Matrix, RngStream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Adaptive random-walk Metropolis block.
///
/// Proposals are multivariate normal. Until `adapt_start` iterations have
/// been seen, the proposal covariance is the diagonal seeded from
/// (2.38/sqrt(d)) * initial scales; afterwards it is
/// (2.38^2/d) * running covariance + 1e-6 I, with the running moments
/// updated under diminishing 1/t weights so ergodicity is preserved.
#[derive(Debug, Clone)]
pub struct AdaptiveRwm {
    dim: usize,
    /// Iteration at which moment accumulation begins (the cold-start
    /// samples would otherwise dominate the 1/t-weighted moments).
    warmup_end: usize,
    /// Iteration at which the adapted proposal takes over.
    adapt_start: usize,
    ridge: f64,
    t_total: usize,
    t_window: usize,
    mean: Vec<f64>,
    cov: Matrix,
    chol: Matrix,
    accepted: u64,
    proposed: u64,
    saw_nan: bool,
}

impl AdaptiveRwm {
    pub fn new(init_scales: &[f64]) -> Self {
        let dim = init_scales.len();
        let factor = 2.38 / (dim as f64).sqrt();
        let mut chol = Matrix::zeros(dim, dim);
        for i in 0..dim {
            chol[(i, i)] = factor * init_scales[i].max(1e-8);
        }
        Self {
            dim,
            warmup_end: 50,
            adapt_start: 100,
            ridge: 1e-6,
            t_total: 0,
            t_window: 0,
            mean: vec![0.0; dim],
            cov: Matrix::zeros(dim, dim),
            chol,
            accepted: 0,
            proposed: 0,
            saw_nan: false,
        }
    }

    /// Sticky flag: set when any target evaluation produced NaN, so the
    /// chain runner can abort with the iteration index.
    pub fn saw_nan(&self) -> bool {
        self.saw_nan
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Current proposal covariance Cholesky factor (frozen copy). Chib's
    /// method uses this to fix the proposal density of reduced runs.
    pub fn proposal_chol(&self) -> Matrix {
        self.chol.clone()
    }

    /// Adapted running covariance estimate.
    pub fn running_cov(&self) -> Matrix {
        self.cov.clone()
    }

    /// One Metropolis step on `theta` against `log_target`, using and
    /// refreshing the cached value `lp`. Returns whether the proposal was
    /// accepted. Out-of-support proposals are rejected through the target
    /// returning -inf.
    pub fn step<F>(
        &mut self,
        theta: &mut [f64],
        lp: &mut f64,
        mut log_target: F,
        rng: &mut RngStream,
    ) -> bool
    where
        F: FnMut(&[f64]) -> f64,
    {
        debug_assert_eq!(theta.len(), self.dim);
        let mut proposal = theta.to_vec();
        let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[(i, j)] * z[j];
            }
            proposal[i] += s;
        }
        let lp_new = log_target(&proposal);
        if lp_new.is_nan() {
            self.saw_nan = true;
        }
        let accept = {
            let log_u: f64 = rng.random::<f64>().ln();
            log_u < lp_new - *lp
        };
        self.proposed += 1;
        if accept {
            self.accepted += 1;
            theta.copy_from_slice(&proposal);
            *lp = lp_new;
        }
        self.update_moments(theta);
        accept
    }

    /// Evaluate the proposal log density q(to | from); the proposal is
    /// symmetric so the order does not matter.
    pub fn proposal_logpdf(&self, from: &[f64], to: &[f64]) -> f64 {
        crate::numerics::mvn_logpdf(to, from, &self.chol).expect("dims checked")
    }

    /// Draw from the proposal centred at `from`.
    pub fn propose_from(&self, from: &[f64], rng: &mut RngStream) -> Vec<f64> {
        crate::numerics::mvn_sample(from, &self.chol, rng)
    }

    fn update_moments(&mut self, theta: &[f64]) {
        self.t_total += 1;
        if self.t_total <= self.warmup_end {
            return;
        }
        self.t_window += 1;
        let w = 1.0 / self.t_window as f64;
        let mut centered = vec![0.0; self.dim];
        for i in 0..self.dim {
            centered[i] = theta[i] - self.mean[i];
            self.mean[i] += w * centered[i];
        }
        for i in 0..self.dim {
            for j in 0..=i {
                // Rank-1 online covariance with diminishing weight.
                let upd = centered[i] * (theta[j] - self.mean[j]);
                self.cov[(i, j)] += w * (upd - self.cov[(i, j)]);
                self.cov[(j, i)] = self.cov[(i, j)];
            }
        }
        if self.t_total >= self.adapt_start && self.t_window >= 2 {
            let factor = 2.38f64.powi(2) / self.dim as f64;
            let mut prop = self.cov.scaled(factor);
            for i in 0..self.dim {
                prop[(i, i)] += self.ridge;
            }
            if let Ok(l) = prop.cholesky() {
                self.chol = l;
            }
        }
    }
}

/// Robbins-Monro autotuner for scalar random-walk updates, targeting 0.44
/// acceptance: log-scale += c * t^-0.6 * (accept - 0.44).
#[derive(Debug, Clone)]
pub struct ScalarAutotune {
    log_scale: f64,
    t: u64,
    c: f64,
    target: f64,
    accepted: u64,
    proposed: u64,
}

impl ScalarAutotune {
    pub fn new(init_scale: f64) -> Self {
        Self {
            log_scale: init_scale.max(1e-12).ln(),
            t: 0,
            c: 1.0,
            target: 0.44,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn step<F>(
        &mut self,
        y: &mut f64,
        lp: &mut f64,
        mut log_target: F,
        rng: &mut RngStream,
    ) -> bool
    where
        F: FnMut(f64) -> f64,
    {
        let z: f64 = StandardNormal.sample(rng);
        let proposal = *y + self.scale() * z;
        let lp_new = log_target(proposal);
        let accept = {
            let log_u: f64 = rng.random::<f64>().ln();
            log_u < lp_new - *lp
        };
        self.proposed += 1;
        if accept {
            self.accepted += 1;
            *y = proposal;
            *lp = lp_new;
        }
        self.t += 1;
        let gamma = self.c * (self.t as f64).powf(-0.6);
        self.log_scale += gamma * ((accept as u8 as f64) - self.target);
        accept
    }
}
