//! Forward simulation of household carriage panels from a study design:
//! household compositions, a swab schedule, and an optional extra
//! missingness layer on observed coordinates.

use super::transition::{household_transition_matrix, initial_distribution};
use super::{AgeGroup, EpiTheta, Household, HouseholdSeries, STATUS_MISSING};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpiDesign {
    pub households: Vec<Household>,
    /// Total number of weekly (delta-t) steps per household.
    pub t_len: usize,
    /// 1-based times at which swabs are scheduled (all members swabbed).
    pub observed_times: Vec<usize>,
}

impl EpiDesign {
    pub fn validate(&self) -> Result<()> {
        if self.households.is_empty() {
            return Err(Error::Config("design has no households".into()));
        }
        if self.t_len == 0 {
            return Err(Error::Config("design has zero-length series".into()));
        }
        if self.observed_times.is_empty()
            || self
                .observed_times
                .iter()
                .any(|&t| t == 0 || t > self.t_len)
        {
            return Err(Error::Config("observation schedule outside 1..=t_len".into()));
        }
        Ok(())
    }

    pub fn n_members(&self) -> usize {
        self.households.iter().map(|h| h.size()).sum()
    }

    pub fn n_children(&self) -> usize {
        self.households.iter().map(|h| h.n_children()).sum()
    }

    /// Hidden binary coordinates per the schedule (before extra
    /// missingness).
    pub fn n_hidden(&self) -> usize {
        let hidden_times = self.t_len - self.observed_times.len();
        self.n_members() * hidden_times
    }

    /// The synthetic-study design: 66 households, 260 members of whom 94
    /// are children, sizes 2..=7 (mostly 3 and 4), nine swabs on a 4-weekly
    /// schedule with a late final visit, 34 weekly steps. Every household
    /// has 25 fully-hidden times: 1650 hidden household-times and 6500
    /// hidden binary states in total.
    pub fn paper_66() -> Self {
        let size_counts = [(2usize, 4usize), (3, 20), (4, 26), (5, 10), (6, 4), (7, 2)];
        let mut households = Vec::new();
        let mut id = 0;
        // Two-child households: the 2 of size 7, 4 of size 6, 10 of size 5
        // and 12 of size 4 (28 in total, for 66 + 28 = 94 children).
        for &(size, count) in size_counts.iter().rev() {
            for _ in 0..count {
                let two_children = match size {
                    7 | 6 | 5 => true,
                    4 => id < 2 + 4 + 10 + 12,
                    _ => false,
                };
                let n_children = if two_children { 2 } else { 1 };
                let mut ages = vec![AgeGroup::Child; n_children];
                ages.resize(size, AgeGroup::Adult);
                households.push(Household { id, ages });
                id += 1;
            }
        }
        EpiDesign {
            households,
            t_len: 34,
            observed_times: vec![1, 5, 9, 13, 17, 21, 25, 29, 34],
        }
    }

    /// Small design for replicated experiments: `n` households cycling
    /// through sizes 4..=7 (children-heavy, so both age groups and the
    /// density correction stay identifiable), swabs every third step.
    pub fn scaled(n: usize, t_len: usize) -> Self {
        let mut households = Vec::new();
        for id in 0..n {
            let size = 4 + id % 4;
            let n_children = 1 + (id % 2 == 0) as usize + (size >= 6) as usize;
            let mut ages = vec![AgeGroup::Child; n_children.min(size - 1)];
            ages.resize(size, AgeGroup::Adult);
            households.push(Household { id, ages });
        }
        let observed_times = (1..=t_len).step_by(3).collect();
        EpiDesign {
            households,
            t_len,
            observed_times,
        }
    }

    /// Design with every step observed except that swabs happen every
    /// `gap` steps; used for the time-interval sensitivity sweep where a
    /// denser grid means more states to impute.
    pub fn with_schedule(mut self, t_len: usize, observed_times: Vec<usize>) -> Self {
        self.t_len = t_len;
        self.observed_times = observed_times;
        self
    }
}

/// Extra per-coordinate missingness applied to scheduled swabs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessSpec {
    pub coord_missing_prob: f64,
}

impl MissingnessSpec {
    pub fn none() -> Self {
        Self {
            coord_missing_prob: 0.0,
        }
    }
}

/// Generating-truth record persisted next to simulated data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpiTruth {
    pub theta: EpiTheta,
    pub n_households: usize,
    pub n_members: usize,
    pub n_children: usize,
    pub n_hidden: usize,
    pub t_len: usize,
    pub observed_times: Vec<usize>,
}

/// Forward-simulate a panel: initial Bernoulli(pi) carriage, joint-state
/// Markov transitions, swabs emitted at scheduled times, plus optional
/// extra coordinate-level missingness.
pub fn simulate_epidemic(
    design: &EpiDesign,
    theta: &EpiTheta,
    missing: &MissingnessSpec,
    rng: &mut RngStream,
) -> (Vec<HouseholdSeries>, EpiTruth) {
    design.validate().expect("valid design");
    let mut out = Vec::with_capacity(design.households.len());
    for hh in &design.households {
        let trans = household_transition_matrix(theta, hh);
        let init = initial_distribution(theta, hh);
        let n = hh.n_states();
        let mut state = sample_index(&init, rng);
        let mut status = vec![vec![STATUS_MISSING; design.t_len]; hh.size()];
        for t in 0..design.t_len {
            if t > 0 {
                let row: Vec<f64> = (0..n).map(|j| trans[(state, j)]).collect();
                state = sample_index(&row, rng);
            }
            if design.observed_times.contains(&(t + 1)) {
                for m in 0..hh.size() {
                    if missing.coord_missing_prob > 0.0
                        && rng.random::<f64>() < missing.coord_missing_prob
                    {
                        continue;
                    }
                    status[m][t] = ((state >> m) & 1) as u8;
                }
            }
        }
        out.push(
            HouseholdSeries::new(hh.clone(), status)
                .expect("simulated series is structurally valid"),
        );
    }
    let truth = EpiTruth {
        theta: theta.clone(),
        n_households: design.households.len(),
        n_members: design.n_members(),
        n_children: design.n_children(),
        n_hidden: design.n_hidden(),
        t_len: design.t_len,
        observed_times: design.observed_times.clone(),
    };
    (out, truth)
}

fn sample_index(weights: &[f64], rng: &mut RngStream) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
