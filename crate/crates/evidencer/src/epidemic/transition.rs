//! Transition law of the household Markov chain. States are bitmasks over
//! members (member m contributes bit m), and one-step transitions factorize
//! over members given the current joint state.

use super::{AgeGroup, EpiTheta, Household};
use crate::numerics::Matrix;
use std::collections::HashMap;

/// Probability that an individual changes state over one time step:
/// infection 1 - exp(-(k_i + (beta_1i I1 + beta_2i I2)/(z-1)^w) dt) for a
/// susceptible, clearance 1 - exp(-mu_i dt) for a carrier. `i1`, `i2` count
/// carriers among the *other* household members. For z = 1 the
/// within-household term is defined as zero.
pub fn individual_transition_prob(
    carrier: bool,
    age: AgeGroup,
    i1: usize,
    i2: usize,
    theta: &EpiTheta,
    z: usize,
) -> f64 {
    let g = age.index();
    if carrier {
        1.0 - (-theta.mu[g] * theta.delta_t).exp()
    } else {
        let within = if z <= 1 {
            0.0
        } else {
            let pressure =
                theta.beta[0][g] * i1 as f64 + theta.beta[1][g] * i2 as f64;
            pressure / ((z - 1) as f64).powf(theta.w)
        };
        1.0 - (-(theta.k[g] + within) * theta.delta_t).exp()
    }
}

/// Dense 2^z x 2^z transition matrix for one household composition.
pub fn household_transition_matrix(theta: &EpiTheta, household: &Household) -> Matrix {
    let z = household.size();
    let n = 1usize << z;
    let mut matrix = Matrix::zeros(n, n);
    // prob_one[m] = P(member m is a carrier at t+1 | state s at t)
    let mut prob_one = vec![0.0; z];
    for s in 0..n {
        for m in 0..z {
            let carrier = (s >> m) & 1 == 1;
            let (mut i1, mut i2) = (0usize, 0usize);
            for other in 0..z {
                if other == m || (s >> other) & 1 == 0 {
                    continue;
                }
                match household.ages[other] {
                    AgeGroup::Child => i1 += 1,
                    AgeGroup::Adult => i2 += 1,
                }
            }
            let p_change =
                individual_transition_prob(carrier, household.ages[m], i1, i2, theta, z);
            prob_one[m] = if carrier { 1.0 - p_change } else { p_change };
        }
        for next in 0..n {
            let mut p = 1.0;
            for (m, p1) in prob_one.iter().enumerate() {
                p *= if (next >> m) & 1 == 1 { *p1 } else { 1.0 - *p1 };
            }
            matrix[(s, next)] = p;
        }
    }
    matrix
}

/// Log-space transition matrix, exact where natural-scale entries
/// underflow (log survival probabilities are just negated hazards). Only
/// built on the filter's rescue path.
pub(crate) fn household_transition_log_matrix(theta: &EpiTheta, household: &Household) -> Matrix {
    let z = household.size();
    let n = 1usize << z;
    let mut matrix = Matrix::zeros(n, n);
    let mut log_one = vec![0.0; z];
    let mut log_zero = vec![0.0; z];
    for s in 0..n {
        for m in 0..z {
            let carrier = (s >> m) & 1 == 1;
            let (mut i1, mut i2) = (0usize, 0usize);
            for other in 0..z {
                if other == m || (s >> other) & 1 == 0 {
                    continue;
                }
                match household.ages[other] {
                    AgeGroup::Child => i1 += 1,
                    AgeGroup::Adult => i2 += 1,
                }
            }
            let g = household.ages[m].index();
            let hazard = if carrier {
                theta.mu[g] * theta.delta_t
            } else {
                let within = if z <= 1 {
                    0.0
                } else {
                    (theta.beta[0][g] * i1 as f64 + theta.beta[1][g] * i2 as f64)
                        / ((z - 1) as f64).powf(theta.w)
                };
                (theta.k[g] + within) * theta.delta_t
            };
            // ln P(change) = ln(1 - e^-h); ln P(no change) = -h.
            let log_change = if hazard == 0.0 {
                f64::NEG_INFINITY
            } else {
                (-(-hazard).exp_m1()).ln()
            };
            if carrier {
                log_zero[m] = log_change;
                log_one[m] = -hazard;
            } else {
                log_one[m] = log_change;
                log_zero[m] = -hazard;
            }
        }
        for next in 0..n {
            let mut lp = 0.0;
            for m in 0..z {
                lp += if (next >> m) & 1 == 1 {
                    log_one[m]
                } else {
                    log_zero[m]
                };
            }
            matrix[(s, next)] = lp;
        }
    }
    matrix
}

/// Initial-state distribution over the 2^z states from independent
/// Bernoulli(pi_age) carriage.
pub fn initial_distribution(theta: &EpiTheta, household: &Household) -> Vec<f64> {
    let z = household.size();
    let n = 1usize << z;
    let mut init = vec![0.0; n];
    for (s, slot) in init.iter_mut().enumerate() {
        let mut p = 1.0;
        for m in 0..z {
            let pi = theta.pi_init[household.ages[m].index()];
            p *= if (s >> m) & 1 == 1 { pi } else { 1.0 - pi };
        }
        *slot = p;
    }
    init
}

/// Per-theta cache of transition matrices and initial distributions, keyed
/// by the household age vector. Households sharing a composition share the
/// matrices.
pub struct TransitionCache {
    by_ages: HashMap<Vec<u8>, (Matrix, Vec<f64>)>,
}

impl TransitionCache {
    pub fn build(theta: &EpiTheta, households: &[&Household]) -> Self {
        let mut by_ages: HashMap<Vec<u8>, (Matrix, Vec<f64>)> = HashMap::new();
        for hh in households {
            let key: Vec<u8> = hh.ages.iter().map(|a| a.code()).collect();
            by_ages.entry(key).or_insert_with(|| {
                (
                    household_transition_matrix(theta, hh),
                    initial_distribution(theta, hh),
                )
            });
        }
        Self { by_ages }
    }

    pub fn get(&self, household: &Household) -> (&Matrix, &[f64]) {
        let key: Vec<u8> = household.ages.iter().map(|a| a.code()).collect();
        let (m, init) = self
            .by_ages
            .get(&key)
            .expect("cache built for all households");
        (m, init)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use rand::Rng;

    fn study_theta() -> EpiTheta {
        EpiTheta::study_truth(7.0)
    }

    #[test]
    fn infection_prob_study_values() {
        // No carriers around: hazard k1 * dt = 0.012 * 7 = 0.084.
        let theta = study_theta();
        let p = individual_transition_prob(false, AgeGroup::Child, 0, 0, &theta, 4);
        assert!((p - (1.0 - (-0.084f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn clearance_prob_study_values() {
        // mu2 * dt = 0.053 * 7 = 0.371.
        let theta = study_theta();
        let p = individual_transition_prob(true, AgeGroup::Adult, 3, 2, &theta, 6);
        assert!((p - (1.0 - (-0.371f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn all_rates_zero_means_no_transitions() {
        let theta = EpiTheta {
            k: [0.0, 0.0],
            beta: [[0.0, 0.0], [0.0, 0.0]],
            mu: [0.0, 0.0],
            w: 1.0,
            pi_init: [0.5, 0.5],
            delta_t: 7.0,
        };
        for carrier in [false, true] {
            let p = individual_transition_prob(carrier, AgeGroup::Child, 2, 1, &theta, 5);
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn single_member_household_no_division_by_zero() {
        let mut theta = study_theta();
        theta.k = [0.0, 0.0];
        theta.mu = [0.0, 0.0];
        let hh = Household::new(0, vec![AgeGroup::Child]).unwrap();
        let m = household_transition_matrix(&theta, &hh);
        assert!(m.max_abs_diff(&Matrix::identity(2)) < 1e-15);
    }

    #[test]
    fn two_member_matrix_matches_hand_product() {
        let theta = study_theta();
        let hh = Household::new(0, vec![AgeGroup::Child, AgeGroup::Adult]).unwrap();
        let m = household_transition_matrix(&theta, &hh);
        let dt = theta.delta_t;
        // State 0b01: child carrier, adult susceptible. Next 0b10:
        // child clears AND adult acquires (exposed to one carrier child).
        let p_child_clear = 1.0 - (-theta.mu[0] * dt).exp();
        let adult_hazard = theta.k[1] + theta.beta[0][1] / 1f64.powf(theta.w);
        let p_adult_acq = 1.0 - (-adult_hazard * dt).exp();
        let expected = p_child_clear * p_adult_acq;
        assert!((m[(0b01, 0b10)] - expected).abs() < 1e-12, "{}", m[(0b01, 0b10)]);

        // State 0b11 -> 0b11: both stay carriers.
        let stay = (-theta.mu[0] * dt).exp() * (-theta.mu[1] * dt).exp();
        assert!((m[(0b11, 0b11)] - stay).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one_for_random_parameters() {
        let mut rng = RngStream::new(110, 0);
        let hh = Household::new(0, vec![
            AgeGroup::Child,
            AgeGroup::Child,
            AgeGroup::Adult,
            AgeGroup::Adult,
            AgeGroup::Adult,
        ])
        .unwrap();
        for _ in 0..100 {
            let theta = EpiTheta {
                k: [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
                beta: [
                    [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
                    [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
                ],
                mu: [rng.random_range(0.0..0.3), rng.random_range(0.0..0.3)],
                w: rng.random_range(0.0..2.5),
                pi_init: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                delta_t: rng.random_range(0.5..10.0),
            };
            let m = household_transition_matrix(&theta, &hh);
            for s in 0..hh.n_states() {
                let row_sum: f64 = (0..hh.n_states()).map(|j| m[(s, j)]).sum();
                assert!((row_sum - 1.0).abs() < 1e-12, "row {s} sums to {row_sum}");
                for j in 0..hh.n_states() {
                    assert!((0.0..=1.0).contains(&m[(s, j)]));
                }
            }
        }
    }

    #[test]
    fn rescaling_dt_and_rates_preserves_probabilities() {
        // Doubling dt and halving all rates leaves the exponent unchanged
        // when the within-household pressure is held fixed.
        let theta = study_theta();
        let mut rescaled = theta.clone();
        rescaled.delta_t *= 2.0;
        for v in rescaled.k.iter_mut() {
            *v /= 2.0;
        }
        for row in rescaled.beta.iter_mut() {
            for v in row.iter_mut() {
                *v /= 2.0;
            }
        }
        for v in rescaled.mu.iter_mut() {
            *v /= 2.0;
        }
        for carrier in [false, true] {
            for (i1, i2) in [(0, 0), (2, 1), (1, 3)] {
                let a = individual_transition_prob(carrier, AgeGroup::Adult, i1, i2, &theta, 5);
                let b =
                    individual_transition_prob(carrier, AgeGroup::Adult, i1, i2, &rescaled, 5);
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn initial_distribution_sums_to_one() {
        let theta = study_theta();
        let hh = Household::new(0, vec![AgeGroup::Child, AgeGroup::Adult, AgeGroup::Adult])
            .unwrap();
        let init = initial_distribution(&theta, &hh);
        let total: f64 = init.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // State 0b001 = child carrier only.
        let expected = 0.425 * (1.0 - 0.095) * (1.0 - 0.095);
        assert!((init[0b001] - expected).abs() < 1e-12);
    }
}
