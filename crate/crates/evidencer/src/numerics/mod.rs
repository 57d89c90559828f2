//! Probability and linear-algebra kernels shared by every sampler. All
//! density arithmetic is done in log space; `-inf` is a legal log density
//! meaning zero support.

mod matrix;
mod rng;

pub use matrix::Matrix;
pub use rng::RngStream;

use crate::error::{Error, Result};
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.8378770664093453;

/// log(sum(exp(v))) for log-scale values, stable under shifts.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// log(mean(exp(v))).
pub fn log_mean_exp(values: &[f64]) -> Result<f64> {
    Ok(log_sum_exp(values)? - (values.len() as f64).ln())
}

/// Multivariate normal log density at `x`, with `chol` the lower Cholesky
/// factor of the covariance.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], chol: &Matrix) -> Result<f64> {
    let d = mean.len();
    if x.len() != d || chol.rows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let z = chol.solve_lower(&diff);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * (d as f64 * LN_2PI + chol.chol_log_det() + quad))
}

/// Multivariate Student t log density with `dof` degrees of freedom and
/// `scale_chol` the lower Cholesky factor of the scale matrix. The realized
/// covariance is dof/(dof-2) times the scale matrix when dof > 2.
pub fn mvt_logpdf(x: &[f64], mean: &[f64], scale_chol: &Matrix, dof: f64) -> Result<f64> {
    if dof <= 0.0 {
        return Err(Error::Config(format!(
            "t degrees of freedom must be positive, got {dof}"
        )));
    }
    let d = mean.len();
    if x.len() != d || scale_chol.rows() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let z = scale_chol.solve_lower(&diff);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    let df = dof;
    let dd = d as f64;
    Ok(ln_gamma((df + dd) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * dd * (df * std::f64::consts::PI).ln()
        - 0.5 * scale_chol.chol_log_det()
        - 0.5 * (df + dd) * (quad / df).ln_1p())
}

/// Draw from N(mean, L L^T) where `chol` = L.
pub fn mvn_sample(mean: &[f64], chol: &Matrix, rng: &mut RngStream) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let lz = chol_times(chol, &z);
    mean.iter().zip(&lz).map(|(m, v)| m + v).collect()
}

/// Draw from the multivariate t with the given scale Cholesky factor.
pub fn mvt_sample(mean: &[f64], scale_chol: &Matrix, dof: f64, rng: &mut RngStream) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let lz = chol_times(scale_chol, &z);
    let chi2 = Gamma::new(dof / 2.0, 2.0).unwrap().sample(rng);
    let factor = (dof / chi2).sqrt();
    mean.iter().zip(&lz).map(|(m, v)| m + factor * v).collect()
}

fn chol_times(chol: &Matrix, z: &[f64]) -> Vec<f64> {
    let d = z.len();
    let mut out = vec![0.0; d];
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..=i {
            s += chol[(i, j)] * z[j];
        }
        out[i] = s;
    }
    out
}

/// Sample mean and unbiased covariance (n-1 denominator) of `samples`, each
/// of dimension d. Requires at least d+1 samples.
pub fn sample_moments(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let d = samples[0].len();
    if n < d + 1 {
        return Err(Error::TooFewSamples { needed: d + 1, got: n });
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::zeros(d, d);
    for s in samples {
        for i in 0..d {
            let di = s[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok((mean, cov))
}

/// Mean and unbiased variance of a scalar slice.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Batch-means standard error of the mean of a (possibly autocorrelated)
/// trace, using `n_batches` nonoverlapping batches.
pub fn batch_means_se(trace: &[f64], n_batches: usize) -> f64 {
    let n = trace.len();
    if n < 2 * n_batches || n_batches < 2 {
        // Too short to batch: fall back to iid SE.
        let (_, var) = mean_var(trace);
        return (var / n.max(1) as f64).sqrt();
    }
    let batch_len = n / n_batches;
    let means: Vec<f64> = (0..n_batches)
        .map(|b| {
            let chunk = &trace[b * batch_len..(b + 1) * batch_len];
            chunk.iter().sum::<f64>() / batch_len as f64
        })
        .collect();
    let (_, var) = mean_var(&means);
    (var / n_batches as f64).sqrt()
}
