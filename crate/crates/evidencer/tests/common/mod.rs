//! Shared test oracles, independent of the library's estimation paths.

#![allow(dead_code)]

use evidencer::numerics::RngStream;

/// Gauss-Hermite nodes and weights for integrals against exp(-x^2):
/// int f(x) exp(-x^2) dx ~ sum w_i f(x_i).
///
/// Nodes by Newton iteration on the orthonormal Hermite recurrence;
/// weights are Christoffel numbers 1 / sum_{k<n} p_k(x)^2, which stay
/// well-scaled at any order used here.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut z = 0.0f64;
    for i in 0..m {
        // Initial guesses per the classic gauher scheme, largest root first.
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        // Newton: p_n(z) = 0 with p_n'(z) = sqrt(2n) p_{n-1}(z).
        for _ in 0..120 {
            let (pn, pn1) = hermite_pair(n, z);
            let dz = pn / ((2.0 * n as f64).sqrt() * pn1);
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        let w = 1.0 / christoffel_sum(n, z);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// (p_n(x), p_{n-1}(x)) for orthonormal Hermite polynomials w.r.t.
/// exp(-x^2).
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut pm1 = std::f64::consts::PI.powf(-0.25);
    let mut p = 2f64.sqrt() * x * pm1;
    if n == 1 {
        return (p, pm1);
    }
    for k in 1..n {
        let next =
            x * (2.0 / (k as f64 + 1.0)).sqrt() * p - (k as f64 / (k as f64 + 1.0)).sqrt() * pm1;
        pm1 = p;
        p = next;
    }
    (p, pm1)
}

fn christoffel_sum(n: usize, x: f64) -> f64 {
    let mut pm1 = std::f64::consts::PI.powf(-0.25);
    let mut p = 2f64.sqrt() * x * pm1;
    let mut total = pm1 * pm1 + p * p;
    for k in 1..n - 1 {
        let next =
            x * (2.0 / (k as f64 + 1.0)).sqrt() * p - (k as f64 / (k as f64 + 1.0)).sqrt() * pm1;
        pm1 = p;
        p = next;
        total += p * p;
    }
    total
}

/// Expectation of f under N(mean, sd^2) by Gauss-Hermite.
pub fn gh_expect(nodes: &[f64], weights: &[f64], mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    nodes
        .iter()
        .zip(weights)
        .map(|(&t, &w)| w * f(mean + sd * sqrt2 * t))
        .sum::<f64>()
        * inv_sqrt_pi
}

pub fn poisson_pmf(x: u64, rate: f64) -> f64 {
    let xf = x as f64;
    (xf * rate.ln() - rate - statrs_ln_gamma(xf + 1.0)).exp()
}

// Small standalone ln-gamma (Lanczos) so the oracle does not depend on the
// crate's numeric helpers.
pub fn statrs_ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - statrs_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, &g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Exact likelihood of a p=1 Poisson-regression instance by nested
/// Gauss-Hermite quadrature over the latent values.
pub fn poisreg_exact_lik_gh(counts: &[u64], phi: f64, a: f64, tau: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_hermite(order);
    let sd0 = (1.0 / (tau * (1.0 - a * a))).sqrt();
    let sd = (1.0 / tau).sqrt();
    fn level(
        counts: &[u64],
        t: usize,
        mean: f64,
        sd: f64,
        sd_next: f64,
        a: f64,
        phi: f64,
        nodes: &[f64],
        weights: &[f64],
    ) -> f64 {
        let sqrt2 = std::f64::consts::SQRT_2;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut total = 0.0;
        for (&n, &w) in nodes.iter().zip(weights) {
            let y = mean + sd * sqrt2 * n;
            let obs = poisson_pmf(counts[t], phi * y.exp());
            let inner = if t + 1 < counts.len() {
                level(
                    counts,
                    t + 1,
                    a * y,
                    sd_next,
                    sd_next,
                    a,
                    phi,
                    nodes,
                    weights,
                )
            } else {
                1.0
            };
            total += w * obs * inner;
        }
        total * inv_sqrt_pi
    }
    level(counts, 0, 0.0, sd0, sd, a, phi, &nodes, &weights)
}

/// 99.9% chi-square quantiles by degrees of freedom (1..=10).
pub const CHI2_999: [f64; 10] = [
    10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877, 29.588,
];

pub fn stream(seed: u64, id: u64) -> RngStream {
    RngStream::new(seed, id)
}

#[allow(unused_imports)]
pub use evidencer::numerics::mean_var;

#[allow(dead_code)]
pub fn nothing() {}
