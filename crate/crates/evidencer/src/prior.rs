//! Independent-product priors built from standard scalar distributions.
//! Every prior in the shipped models is a product of these, which is what
//! lets the mixture proposal and the power-posterior t=0 rung sample the
//! prior exactly.

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma as GammaDist, Normal as NormalDist};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

/// Support descriptor for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Unbounded,
    Positive,
    Interval(f64, f64),
}

impl Support {
    pub fn contains(&self, v: f64) -> bool {
        match *self {
            Support::Unbounded => v.is_finite(),
            Support::Positive => v > 0.0 && v.is_finite(),
            Support::Interval(a, b) => v >= a && v <= b,
        }
    }
}

/// A scalar prior distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Dist1d {
    Gamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    /// Normal(mean, sd) truncated to (lo, hi), normalized.
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
    /// Inverse-moment ("non-local") prior on a positive scale factor, with
    /// density zero at 1. Fixed shape kappa = nu = 1; only tau varies.
    NonlocalScale { tau: f64 },
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl Dist1d {
    pub fn exponential(rate: f64) -> Self {
        Dist1d::Gamma { shape: 1.0, rate }
    }

    pub fn support(&self) -> Support {
        match *self {
            Dist1d::Gamma { .. } => Support::Positive,
            Dist1d::Beta { .. } => Support::Interval(0.0, 1.0),
            Dist1d::Uniform { lo, hi } => Support::Interval(lo, hi),
            Dist1d::Normal { .. } => Support::Unbounded,
            Dist1d::TruncNormal { lo, hi, .. } => Support::Interval(lo, hi),
            Dist1d::NonlocalScale { .. } => Support::Positive,
        }
    }

    pub fn logpdf(&self, x: f64) -> f64 {
        match *self {
            Dist1d::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            Dist1d::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                // Endpoint care: x=0 with a=1 is fine, with a>1 density 0.
                let t1 = if a == 1.0 { 0.0 } else { (a - 1.0) * x.ln() };
                let t2 = if b == 1.0 { 0.0 } else { (b - 1.0) * (1.0 - x).ln() };
                t1 + t2 - ln_beta(a, b)
            }
            Dist1d::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
            Dist1d::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * (crate::numerics::LN_2PI) - sd.ln() - 0.5 * z * z
            }
            Dist1d::TruncNormal { mean, sd, lo, hi } => {
                if x < lo || x > hi {
                    return f64::NEG_INFINITY;
                }
                let z = (x - mean) / sd;
                let mass = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
                -0.5 * (crate::numerics::LN_2PI) - sd.ln() - 0.5 * z * z - mass.ln()
            }
            Dist1d::NonlocalScale { tau } => {
                // kappa = nu = 1:
                //   pi(w) = sqrt(tau/pi) / w * (ln w)^-2 * exp(-tau/(ln w)^2)
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let lw = x.ln();
                if lw == 0.0 {
                    return f64::NEG_INFINITY;
                }
                0.5 * (tau / std::f64::consts::PI).ln() - x.ln() - 2.0 * lw.abs().ln()
                    - tau / (lw * lw)
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Dist1d::Gamma { shape, rate } => GammaDist::new(shape, 1.0 / rate)
                .expect("valid gamma")
                .sample(rng),
            Dist1d::Beta { a, b } => BetaDist::new(a, b).expect("valid beta").sample(rng),
            Dist1d::Uniform { lo, hi } => rng.random_range(lo..hi),
            Dist1d::Normal { mean, sd } => NormalDist::new(mean, sd)
                .expect("valid normal")
                .sample(rng),
            Dist1d::TruncNormal { mean, sd, lo, hi } => {
                let dist = NormalDist::new(mean, sd).expect("valid normal");
                // Rejection is fine for the mild truncations used here.
                loop {
                    let x = dist.sample(rng);
                    if x > lo && x < hi {
                        return x;
                    }
                }
            }
            Dist1d::NonlocalScale { tau } => {
                // If v ~ N(0, 1/(2 tau)) then w = exp(1/v) has the target
                // density (change of variables through s = ln w = 1/v).
                let v: f64 = NormalDist::new(0.0, (0.5 / tau).sqrt())
                    .expect("valid normal")
                    .sample(rng);
                (1.0 / v).exp()
            }
        }
    }

    /// Nominal scale used to seed random-walk proposals before adaptation.
    pub fn nominal_sd(&self) -> f64 {
        match *self {
            Dist1d::Gamma { shape, rate } => shape.sqrt() / rate,
            Dist1d::Beta { a, b } => (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt(),
            Dist1d::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
            Dist1d::Normal { sd, .. } => sd,
            Dist1d::TruncNormal { sd, .. } => sd,
            // Heavy-tailed (infinite variance); any O(1) seed works.
            Dist1d::NonlocalScale { .. } => 1.0,
        }
    }

    /// An interior point with positive density, used to initialize chains.
    pub fn init_value(&self) -> f64 {
        match *self {
            Dist1d::Gamma { shape, rate } => (shape / rate).max(0.05),
            Dist1d::Beta { a, b } => a / (a + b),
            Dist1d::Uniform { lo, hi } => 0.5 * (lo + hi),
            Dist1d::Normal { mean, .. } => mean,
            Dist1d::TruncNormal { mean, lo, hi, .. } => mean.clamp(
                lo + 0.1 * (hi - lo),
                hi - 0.1 * (hi - lo),
            ),
            // Density vanishes at 1; start off the null point.
            Dist1d::NonlocalScale { .. } => 1.5,
        }
    }
}

/// Named product of independent scalar priors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorSpec {
    components: Vec<(String, Dist1d)>,
}

impl PriorSpec {
    pub fn new(components: Vec<(String, Dist1d)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &components {
            if !seen.insert(name.clone()) {
                return Err(Error::Config(format!("duplicate parameter name {name}")));
            }
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.components.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn dist(&self, i: usize) -> &Dist1d {
        &self.components[i].1
    }

    pub fn supports(&self) -> Vec<Support> {
        self.components.iter().map(|(_, d)| d.support()).collect()
    }

    pub fn log_prior(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.components.len());
        self.components
            .iter()
            .zip(values)
            .map(|((_, d), &v)| d.logpdf(v))
            .sum()
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.components.iter().map(|(_, d)| d.sample(rng)).collect()
    }

    pub fn nominal_sds(&self) -> Vec<f64> {
        self.components.iter().map(|(_, d)| d.nominal_sd()).collect()
    }

    pub fn init_values(&self) -> Vec<f64> {
        self.components.iter().map(|(_, d)| d.init_value()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mean_var;

    #[test]
    fn gamma_logpdf_matches_exponential() {
        let d = Dist1d::exponential(1.0);
        assert!((d.logpdf(2.0) - (-2.0)).abs() < 1e-12);
        assert_eq!(d.logpdf(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn beta_uniform_is_flat() {
        let d = Dist1d::Beta { a: 1.0, b: 1.0 };
        assert!(d.logpdf(0.3).abs() < 1e-12);
        assert_eq!(d.logpdf(1.5), f64::NEG_INFINITY);
    }

    #[test]
    fn trunc_normal_normalizes() {
        let d = Dist1d::TruncNormal {
            mean: 0.0,
            sd: 1.0,
            lo: -1.0,
            hi: 1.0,
        };
        let h = 0.0005;
        let mut total = 0.0;
        let mut x = -1.0 + h / 2.0;
        while x < 1.0 {
            total += d.logpdf(x).exp() * h;
            x += h;
        }
        assert!((total - 1.0).abs() < 1e-3, "total={total}");
    }

    #[test]
    fn samples_match_moments() {
        let mut rng = RngStream::new(21, 0);
        let cases = vec![
            (Dist1d::Gamma { shape: 2.0, rate: 4.0 }, 0.5, 0.125),
            (Dist1d::Beta { a: 2.0, b: 2.0 }, 0.5, 0.05),
            (Dist1d::Uniform { lo: -1.0, hi: 3.0 }, 1.0, 4.0 / 3.0),
            (Dist1d::Normal { mean: -2.0, sd: 0.5 }, -2.0, 0.25),
        ];
        for (d, want_mean, want_var) in cases {
            let xs: Vec<f64> = (0..200_000).map(|_| d.sample(&mut rng)).collect();
            let (m, v) = mean_var(&xs);
            let se = (want_var / xs.len() as f64).sqrt();
            assert!((m - want_mean).abs() < 4.0 * se, "{d:?}: mean {m}");
            assert!((v - want_var).abs() < 0.05 * want_var.max(0.1), "{d:?}: var {v}");
        }
    }

    #[test]
    fn nonlocal_scale_zero_at_one_and_infinity() {
        let d = Dist1d::NonlocalScale { tau: 0.173 };
        assert_eq!(d.logpdf(1.0), f64::NEG_INFINITY);
        assert!(d.logpdf(1e12) < -20.0);
        assert_eq!(d.logpdf(0.0), f64::NEG_INFINITY);
        assert_eq!(d.logpdf(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn nonlocal_scale_normalizes() {
        // Integrate in s = ln w space where the density is smooth:
        // pi(w) dw = sqrt(tau/pi) s^-2 exp(-tau/s^2) ds. The s-density has
        // quadratic tails, so the grid must run far out: the mass beyond S
        // is 2*sqrt(tau/pi)/S.
        let d = Dist1d::NonlocalScale { tau: 0.173 };
        let mut total = 0.0;
        let mut add_range = |lo: f64, hi: f64, h: f64| {
            let mut s = lo + h / 2.0;
            while s < hi {
                if s.abs() > 1e-12 {
                    let w = s.exp();
                    // density in s = density in w * dw/ds = pi(w) * w
                    total += (d.logpdf(w) + s).exp() * h;
                }
                s += h;
            }
        };
        add_range(-10.0, 10.0, 1e-4);
        add_range(10.0, 3000.0, 0.01);
        add_range(-3000.0, -10.0, 0.01);
        assert!((total - 1.0).abs() < 1e-3, "total={total}");
    }

    #[test]
    fn nonlocal_scale_sampler_matches_density() {
        // Compare sampled CDF against numeric CDF at a few points.
        let d = Dist1d::NonlocalScale { tau: 0.173 };
        let mut rng = RngStream::new(22, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut rng)).collect();
        for cut in [0.5, 0.9, 1.2, 3.0] {
            let empirical = xs.iter().filter(|&&x| x < cut).count() as f64 / xs.len() as f64;
            let h = 0.0005;
            let mut cdf = 0.0;
            let mut s = -40.0;
            while s < cut.ln() {
                if s.abs() > 1e-9 {
                    cdf += (d.logpdf(s.exp()) + s).exp() * h;
                }
                s += h;
            }
            assert!(
                (empirical - cdf).abs() < 0.01,
                "cut={cut}: empirical {empirical} vs cdf {cdf}"
            );
        }
    }

    #[test]
    fn prior_spec_rejects_duplicate_names() {
        let err = PriorSpec::new(vec![
            ("a".into(), Dist1d::exponential(1.0)),
            ("a".into(), Dist1d::exponential(1.0)),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn prior_spec_log_prior_sums() {
        let p = PriorSpec::new(vec![
            ("a".into(), Dist1d::exponential(1.0)),
            ("b".into(), Dist1d::Uniform { lo: 0.0, hi: 2.0 }),
        ])
        .unwrap();
        let lp = p.log_prior(&[1.0, 1.0]);
        assert!((lp - (-1.0 + (-(2f64.ln())))).abs() < 1e-12);
        assert_eq!(p.log_prior(&[-1.0, 1.0]), f64::NEG_INFINITY);
    }
}
