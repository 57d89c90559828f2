//! Forward filtering / backward sampling over the joint household state.
//! The forward pass marginalizes masked coordinates and yields the exact
//! observed-data log likelihood from its normalizing constants; the
//! backward pass draws the latent states from their exact conditional. The
//! ratio log P(x,y|theta) - log P(y|x,theta) equals the forward likelihood
//! for every draw y, which is what makes the likelihood oracle exact.

use super::transition::{initial_distribution, TransitionCache};
use super::{EpiTheta, HouseholdSeries, STATUS_MISSING};
use crate::numerics::{Matrix, RngStream};
use rand::Rng;

/// Which coordinates constrain the state at each time.
#[derive(Clone, Copy)]
pub(crate) enum MaskMode<'a> {
    /// States must match the observed entries (status != 9): P(x | theta).
    Observed,
    /// States must match the given path at the *hidden* coordinates only:
    /// P(y | theta), marginalizing the observed entries.
    HiddenFromPath(&'a [u32]),
}

fn state_allowed(series: &HouseholdSeries, mode: MaskMode, t: usize, state: usize) -> bool {
    match mode {
        MaskMode::Observed => {
            for (m, row) in series.status.iter().enumerate() {
                let st = row[t];
                if st != STATUS_MISSING && ((state >> m) & 1) as u8 != st {
                    return false;
                }
            }
            true
        }
        MaskMode::HiddenFromPath(path) => {
            for (m, row) in series.status.iter().enumerate() {
                if row[t] == STATUS_MISSING
                    && (state >> m) & 1 != (path[t] as usize >> m) & 1
                {
                    return false;
                }
            }
            true
        }
    }
}

/// Normalized forward pass. Returns the log normalizer (the log likelihood
/// of the constrained coordinates) and the filtered distributions; a zero
/// normalizer at any time yields -inf and no alphas.
pub(crate) fn forward_pass(
    series: &HouseholdSeries,
    theta: &EpiTheta,
    trans: &Matrix,
    init: &[f64],
    mode: MaskMode,
) -> (f64, Option<Vec<Vec<f64>>>) {
    let mut log_trans: Option<Matrix> = None;
    let n = init.len();
    let t_len = series.t_len();
    let mut alphas = Vec::with_capacity(t_len);
    let mut log_lik = 0.0;

    let mut current = vec![0.0; n];
    for (s, slot) in current.iter_mut().enumerate() {
        if state_allowed(series, mode, 0, s) {
            *slot = init[s];
        }
    }
    let c0: f64 = current.iter().sum();
    if c0 <= 0.0 {
        match log_space_step(&vec![1.0; n], None, init, series, mode, 0) {
            Some((lc, scaled)) => {
                log_lik += lc;
                current = scaled;
            }
            None => return (f64::NEG_INFINITY, None),
        }
    } else {
        log_lik += c0.ln();
        for v in current.iter_mut() {
            *v /= c0;
        }
    }
    alphas.push(current.clone());

    for t in 1..t_len {
        let mut next = vec![0.0; n];
        for s in 0..n {
            let a = current[s];
            if a == 0.0 {
                continue;
            }
            for (s2, slot) in next.iter_mut().enumerate() {
                *slot += a * trans[(s, s2)];
            }
        }
        for (s2, slot) in next.iter_mut().enumerate() {
            if !state_allowed(series, mode, t, s2) {
                *slot = 0.0;
            }
        }
        let c: f64 = next.iter().sum();
        if c <= 0.0 {
            // The constrained mass underflowed f64 (it can be genuinely of
            // order exp(-1000) for extreme parameters, e.g. on low power
            // posterior rungs); redo this step in log space with exact
            // log transition probabilities.
            let lt = log_trans.get_or_insert_with(|| {
                super::transition::household_transition_log_matrix(theta, &series.household)
            });
            match log_space_step(&current, Some(lt), &[], series, mode, t) {
                Some((lc, scaled)) => {
                    log_lik += lc;
                    current = scaled;
                }
                None => return (f64::NEG_INFINITY, None),
            }
        } else {
            log_lik += c.ln();
            for v in next.iter_mut() {
                *v /= c;
            }
            current = next;
        }
        alphas.push(current.clone());
    }
    (log_lik, Some(alphas))
}

/// Rare-path forward step in log space: from normalized `current` (or the
/// initial distribution when `log_trans` is None), compute the constrained
/// next-step mass and a rescaled representation of the filtered
/// distribution. Returns None only if the mass is exactly zero.
fn log_space_step(
    current: &[f64],
    log_trans: Option<&Matrix>,
    init: &[f64],
    series: &HouseholdSeries,
    mode: MaskMode,
    t: usize,
) -> Option<(f64, Vec<f64>)> {
    let n = current.len();
    let mut log_next = vec![f64::NEG_INFINITY; n];
    for (s2, slot) in log_next.iter_mut().enumerate() {
        if !state_allowed(series, mode, t, s2) {
            continue;
        }
        match log_trans {
            None => {
                if init[s2] > 0.0 {
                    *slot = init[s2].ln();
                }
            }
            Some(m) => {
                let mut best = f64::NEG_INFINITY;
                let mut terms: Vec<f64> = Vec::new();
                for (s, &a) in current.iter().enumerate() {
                    let lp = m[(s, s2)];
                    if a > 0.0 && lp > f64::NEG_INFINITY {
                        let v = a.ln() + lp;
                        best = best.max(v);
                        terms.push(v);
                    }
                }
                if best > f64::NEG_INFINITY {
                    *slot = best + terms.iter().map(|v| (v - best).exp()).sum::<f64>().ln();
                }
            }
        }
    }
    let max = log_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let scaled: Vec<f64> = log_next.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let normalized: Vec<f64> = scaled.iter().map(|v| v / total).collect();
    Some((max + total.ln(), normalized))
}

/// Draw a state path from P(s_{1:T} | x, theta) given forward filter output;
/// returns the path and its log conditional probability.
pub(crate) fn backward_sample(
    alphas: &[Vec<f64>],
    trans: &Matrix,
    rng: &mut RngStream,
) -> (Vec<u32>, f64) {
    let t_len = alphas.len();
    let mut path = vec![0u32; t_len];
    let mut log_prob = 0.0;

    let (last, lp) = sample_categorical(&alphas[t_len - 1], rng);
    path[t_len - 1] = last as u32;
    log_prob += lp;

    for t in (0..t_len - 1).rev() {
        let next = path[t + 1] as usize;
        let weights: Vec<f64> = alphas[t]
            .iter()
            .enumerate()
            .map(|(s, a)| a * trans[(s, next)])
            .collect();
        let (s, lp) = sample_categorical(&weights, rng);
        path[t] = s as u32;
        log_prob += lp;
    }
    (path, log_prob)
}

/// Log conditional probability of a specific path under the backward
/// factorization (the density FFBS samples from).
pub(crate) fn path_log_conditional(alphas: &[Vec<f64>], trans: &Matrix, path: &[u32]) -> f64 {
    let t_len = alphas.len();
    let mut log_prob = 0.0;
    {
        let w = &alphas[t_len - 1];
        let total: f64 = w.iter().sum();
        let p = w[path[t_len - 1] as usize] / total;
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_prob += p.ln();
    }
    for t in (0..t_len - 1).rev() {
        let next = path[t + 1] as usize;
        let weights: Vec<f64> = alphas[t]
            .iter()
            .enumerate()
            .map(|(s, a)| a * trans[(s, next)])
            .collect();
        let total: f64 = weights.iter().sum();
        let p = weights[path[t] as usize] / total;
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        log_prob += p.ln();
    }
    log_prob
}

/// Complete-data log likelihood of a full state path.
pub(crate) fn complete_path_loglik(path: &[u32], trans: &Matrix, init: &[f64]) -> f64 {
    let mut ll = init[path[0] as usize].ln();
    for t in 1..path.len() {
        ll += trans[(path[t - 1] as usize, path[t] as usize)].ln();
    }
    ll
}

fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> (usize, f64) {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return (i, (w / total).ln());
        }
    }
    let last = weights.len() - 1;
    (last, (weights[last] / total).ln())
}

/// Outcome of one FFBS pass over a household series.
#[derive(Debug, Clone)]
pub struct FfbsOutcome {
    /// Exact observed-data log likelihood from the forward normalizers.
    pub log_observed_lik: f64,
    /// Sampled full state path and its log conditional probability
    /// log P(y | x, theta); absent when the data have zero probability.
    pub sample: Option<(Vec<u32>, f64)>,
}

/// Run FFBS for one household series: forward filter with observation
/// masks, then a backward draw of the latent states.
pub fn ffbs(series: &HouseholdSeries, theta: &EpiTheta, rng: &mut RngStream) -> FfbsOutcome {
    let trans = super::transition::household_transition_matrix(theta, &series.household);
    let init = initial_distribution(theta, &series.household);
    let (log_lik, alphas) = forward_pass(series, theta, &trans, &init, MaskMode::Observed);
    match alphas {
        None => FfbsOutcome {
            log_observed_lik: f64::NEG_INFINITY,
            sample: None,
        },
        Some(alphas) => {
            let (path, log_cond) = backward_sample(&alphas, &trans, rng);
            FfbsOutcome {
                log_observed_lik: log_lik,
                sample: Some((path, log_cond)),
            }
        }
    }
}

/// Exact observed-data log likelihood of a panel: sum of forward-filter
/// normalizers over households.
pub fn observed_loglik(data: &[HouseholdSeries], theta: &EpiTheta) -> f64 {
    let households: Vec<&super::Household> = data.iter().map(|s| &s.household).collect();
    let cache = TransitionCache::build(theta, &households);
    let mut total = 0.0;
    for series in data {
        let (trans, init) = cache.get(&series.household);
        let (ll, _) = forward_pass(series, theta, trans, init, MaskMode::Observed);
        if ll == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += ll;
    }
    total
}

/// The same quantity through the data-augmentation identity
/// log P(x,y|theta) - log P(y|x,theta), using one FFBS draw per household.
/// Identical to [`observed_loglik`] for every draw.
pub fn observed_loglik_via_ratio(
    data: &[HouseholdSeries],
    theta: &EpiTheta,
    rng: &mut RngStream,
) -> f64 {
    let households: Vec<&super::Household> = data.iter().map(|s| &s.household).collect();
    let cache = TransitionCache::build(theta, &households);
    let mut total = 0.0;
    for series in data {
        let (trans, init) = cache.get(&series.household);
        let (_, alphas) = forward_pass(series, theta, trans, init, MaskMode::Observed);
        let Some(alphas) = alphas else {
            return f64::NEG_INFINITY;
        };
        let (path, log_cond) = backward_sample(&alphas, trans, rng);
        total += complete_path_loglik(&path, trans, init) - log_cond;
    }
    total
}
