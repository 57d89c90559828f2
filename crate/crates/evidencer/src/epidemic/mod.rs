//! Household carriage model: a discrete-time hidden Markov model over the
//! joint carriage state of all household members, with two age groups,
//! community and within-household acquisition, clearance, a density
//! correction (z-1)^w, and partially observed swab panels. Includes the
//! exact observed-data likelihood via forward filtering, FFBS latent
//! updates, a data-augmentation sampler, the model variants used for
//! comparison, a simulator, and Chib / reversible-jump adapters.

mod chib;
mod ffbs;
mod rj;
mod sampler;
mod simulate;
mod transition;

pub use chib::EpiChib;
pub use ffbs::{ffbs, observed_loglik, observed_loglik_via_ratio, FfbsOutcome};
pub use rj::EpiRjPair;
pub use sampler::{epi_mcmc, CompleteStats, EpiSampler, EpiTemperedTarget};
pub use simulate::{simulate_epidemic, EpiDesign, MissingnessSpec};
pub use transition::{household_transition_matrix, individual_transition_prob, TransitionCache};

use crate::error::{Error, Result};
use crate::prior::{Dist1d, PriorSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const STATUS_CLEAR: u8 = 0;
pub const STATUS_CARRIER: u8 = 1;
pub const STATUS_MISSING: u8 = 9;

/// Age group of a household member: children under 5 vs everyone else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgeGroup {
    Child,
    Adult,
}

impl AgeGroup {
    pub fn index(self) -> usize {
        match self {
            AgeGroup::Child => 0,
            AgeGroup::Adult => 1,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            AgeGroup::Child => 1,
            AgeGroup::Adult => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(AgeGroup::Child),
            2 => Ok(AgeGroup::Adult),
            other => Err(Error::Config(format!("unknown age group code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Household {
    pub id: usize,
    pub ages: Vec<AgeGroup>,
}

impl Household {
    pub fn new(id: usize, ages: Vec<AgeGroup>) -> Result<Self> {
        if ages.is_empty() || ages.len() > 7 {
            return Err(Error::Config(format!(
                "household size {} outside supported range 1..=7",
                ages.len()
            )));
        }
        Ok(Self { id, ages })
    }

    pub fn size(&self) -> usize {
        self.ages.len()
    }

    pub fn n_states(&self) -> usize {
        1 << self.size()
    }

    pub fn n_children(&self) -> usize {
        self.ages.iter().filter(|a| **a == AgeGroup::Child).count()
    }
}

/// Observed swab panel for one household: status per (member, time), with 9
/// marking a missing swab. Missingness is per coordinate, so partially
/// observed household-times are representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdSeries {
    pub household: Household,
    /// status[m][t], t = 0..t_len-1, values in {0, 1, 9}.
    pub status: Vec<Vec<u8>>,
}

impl HouseholdSeries {
    pub fn new(household: Household, status: Vec<Vec<u8>>) -> Result<Self> {
        if status.len() != household.size() {
            return Err(Error::DimensionMismatch {
                expected: household.size(),
                got: status.len(),
            });
        }
        let t_len = status.first().map_or(0, |row| row.len());
        if t_len == 0 || status.iter().any(|row| row.len() != t_len) {
            return Err(Error::Config("ragged or empty status matrix".into()));
        }
        let mut any_observed = false;
        for row in &status {
            for &v in row {
                match v {
                    STATUS_CLEAR | STATUS_CARRIER => any_observed = true,
                    STATUS_MISSING => {}
                    other => {
                        return Err(Error::Config(format!("illegal status code {other}")))
                    }
                }
            }
        }
        if !any_observed {
            return Err(Error::Config("series has no observed entries".into()));
        }
        Ok(Self { household, status })
    }

    pub fn t_len(&self) -> usize {
        self.status[0].len()
    }

    pub fn n_hidden(&self) -> usize {
        self.status
            .iter()
            .flat_map(|row| row.iter())
            .filter(|&&v| v == STATUS_MISSING)
            .count()
    }

    /// True when the state at time t is fully determined by observations.
    pub fn fully_observed_at(&self, t: usize) -> bool {
        self.status.iter().all(|row| row[t] != STATUS_MISSING)
    }
}

/// Full parameter set of the transition law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpiTheta {
    /// Community acquisition rates per day [child, adult].
    pub k: [f64; 2],
    /// Within-household transmission: beta[i][j] is the rate from an
    /// infected member of group i to an uninfected member of group j.
    pub beta: [[f64; 2]; 2],
    /// Clearance rates per day [child, adult].
    pub mu: [f64; 2],
    /// Density correction exponent.
    pub w: f64,
    /// Initial carriage probabilities [child, adult].
    pub pi_init: [f64; 2],
    /// Time step in days.
    pub delta_t: f64,
}

impl EpiTheta {
    /// The section 3.5 synthetic-study generating values.
    pub fn study_truth(delta_t: f64) -> Self {
        Self {
            k: [0.012, 0.004],
            beta: [[0.047, 0.106], [0.005, 0.048]],
            mu: [0.020, 0.053],
            w: 1.184,
            pi_init: [0.425, 0.095],
            delta_t,
        }
    }
}

/// Model variants compared in the study: the full model, equal community
/// rates, a common transmission rate, and frequency dependence (w = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpiVariant {
    M1,
    M2,
    M3,
    M4,
}

/// Which prior is placed on the density exponent w.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WPrior {
    /// Gamma(shape, rate); the study default is Gamma(0.01, 0.01) and the
    /// "local" prior of the density-dependence comparison is Gamma(1, 1).
    Gamma { shape: f64, rate: f64 },
    /// Inverse-moment prior with density zero at w = 1 (tau = 0.173).
    Nonlocal { tau: f64 },
}

impl Default for WPrior {
    fn default() -> Self {
        WPrior::Gamma {
            shape: 0.01,
            rate: 0.01,
        }
    }
}

impl WPrior {
    pub fn local() -> Self {
        WPrior::Gamma {
            shape: 1.0,
            rate: 1.0,
        }
    }

    pub fn nonlocal() -> Self {
        WPrior::Nonlocal { tau: 0.173 }
    }

    fn dist(&self) -> Dist1d {
        match *self {
            WPrior::Gamma { shape, rate } => Dist1d::Gamma { shape, rate },
            WPrior::Nonlocal { tau } => Dist1d::NonlocalScale { tau },
        }
    }
}

/// Per-family priors: Gamma(1,1) on every rate, a configurable prior on w,
/// Beta(1,1) on the initial carriage probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpiPriors {
    #[serde(default = "default_rate_prior")]
    pub rate: Dist1d,
    #[serde(default)]
    pub w: WPrior,
    #[serde(default = "default_pi_prior")]
    pub pi: Dist1d,
}

fn default_rate_prior() -> Dist1d {
    Dist1d::Gamma {
        shape: 1.0,
        rate: 1.0,
    }
}

fn default_pi_prior() -> Dist1d {
    Dist1d::Beta { a: 1.0, b: 1.0 }
}

impl Default for EpiPriors {
    fn default() -> Self {
        Self {
            rate: default_rate_prior(),
            w: WPrior::default(),
            pi: default_pi_prior(),
        }
    }
}

impl EpiVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            EpiVariant::M1 => "M1",
            EpiVariant::M2 => "M2",
            EpiVariant::M3 => "M3",
            EpiVariant::M4 => "M4",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "M1" => EpiVariant::M1,
            "M2" => EpiVariant::M2,
            "M3" => EpiVariant::M3,
            "M4" => EpiVariant::M4,
            _ => return None,
        })
    }

    pub fn param_names(&self) -> Vec<String> {
        let names: &[&str] = match self {
            EpiVariant::M1 => &[
                "k1", "k2", "beta11", "beta12", "beta21", "beta22", "mu1", "mu2", "w", "pi1",
                "pi2",
            ],
            EpiVariant::M2 => &[
                "k", "beta11", "beta12", "beta21", "beta22", "mu1", "mu2", "w", "pi1", "pi2",
            ],
            EpiVariant::M3 => &["k1", "k2", "beta", "mu1", "mu2", "w", "pi1", "pi2"],
            EpiVariant::M4 => &[
                "k1", "k2", "beta11", "beta12", "beta21", "beta22", "mu1", "mu2", "pi1", "pi2",
            ],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    pub fn dim(&self) -> usize {
        self.param_names().len()
    }

    /// Indices updated by the joint adaptive random-walk block (everything
    /// except the conjugately-updated initial probabilities).
    pub fn rwm_indices(&self) -> std::ops::Range<usize> {
        0..self.dim() - 2
    }

    /// Indices of (pi1, pi2).
    pub fn pi_indices(&self) -> (usize, usize) {
        (self.dim() - 2, self.dim() - 1)
    }

    pub fn prior_spec(&self, priors: &EpiPriors) -> PriorSpec {
        let names = self.param_names();
        let comps: Vec<(String, Dist1d)> = names
            .iter()
            .map(|n| {
                let d = match n.as_str() {
                    "w" => priors.w.dist(),
                    "pi1" | "pi2" => priors.pi.clone(),
                    _ => priors.rate.clone(),
                };
                (n.clone(), d)
            })
            .collect();
        PriorSpec::new(comps).expect("unique names")
    }

    /// Expand a variant parameter vector to the transition law, honouring
    /// the variant's constraint by construction.
    pub fn to_theta(&self, values: &[f64], delta_t: f64) -> EpiTheta {
        debug_assert_eq!(values.len(), self.dim());
        match self {
            EpiVariant::M1 => EpiTheta {
                k: [values[0], values[1]],
                beta: [[values[2], values[3]], [values[4], values[5]]],
                mu: [values[6], values[7]],
                w: values[8],
                pi_init: [values[9], values[10]],
                delta_t,
            },
            EpiVariant::M2 => EpiTheta {
                k: [values[0], values[0]],
                beta: [[values[1], values[2]], [values[3], values[4]]],
                mu: [values[5], values[6]],
                w: values[7],
                pi_init: [values[8], values[9]],
                delta_t,
            },
            EpiVariant::M3 => EpiTheta {
                k: [values[0], values[1]],
                beta: [[values[2], values[2]], [values[2], values[2]]],
                mu: [values[3], values[4]],
                w: values[5],
                pi_init: [values[6], values[7]],
                delta_t,
            },
            EpiVariant::M4 => EpiTheta {
                k: [values[0], values[1]],
                beta: [[values[2], values[3]], [values[4], values[5]]],
                mu: [values[6], values[7]],
                w: 1.0,
                pi_init: [values[8], values[9]],
                delta_t,
            },
        }
    }

    /// Lift a variant vector into the M1 parameterization (nesting check).
    pub fn expand_to_m1(&self, values: &[f64]) -> Vec<f64> {
        let th = self.to_theta(values, 1.0);
        vec![
            th.k[0],
            th.k[1],
            th.beta[0][0],
            th.beta[0][1],
            th.beta[1][0],
            th.beta[1][1],
            th.mu[0],
            th.mu[1],
            th.w,
            th.pi_init[0],
            th.pi_init[1],
        ]
    }
}

/// Read a household panel from CSV with columns
/// household_id, member_id, age_group (1|2), time_index, status (0|1|9).
pub fn read_series_csv(path: &Path) -> Result<Vec<HouseholdSeries>> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let mut cells: std::collections::BTreeMap<usize, Vec<(usize, u8, usize, u8)>> =
        std::collections::BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record?;
        let parse = |field: usize, name: &str| -> Result<u64> {
            record
                .get(field)
                .ok_or_else(|| Error::MalformedRecord {
                    path: path.display().to_string(),
                    line,
                    msg: format!("missing column {name}"),
                })?
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::MalformedRecord {
                    path: path.display().to_string(),
                    line,
                    msg: format!("{name}: {e}"),
                })
        };
        let hid = parse(0, "household_id")? as usize;
        let mid = parse(1, "member_id")? as usize;
        let age = parse(2, "age_group")? as u8;
        let t = parse(3, "time_index")? as usize;
        let status = parse(4, "status")? as u8;
        if t == 0 {
            return Err(Error::MalformedRecord {
                path: path.display().to_string(),
                line,
                msg: "time_index is 1-based".into(),
            });
        }
        cells.entry(hid).or_default().push((mid, age, t, status));
    }
    let mut out = Vec::new();
    for (hid, mut entries) in cells {
        entries.sort();
        let mut member_ids: Vec<usize> = entries.iter().map(|e| e.0).collect();
        member_ids.dedup();
        let t_len = entries.iter().map(|e| e.2).max().unwrap_or(0);
        let mut ages = vec![AgeGroup::Adult; member_ids.len()];
        let mut status = vec![vec![STATUS_MISSING; t_len]; member_ids.len()];
        for (mid, age, t, st) in entries {
            let m = member_ids.binary_search(&mid).map_err(|_| Error::Config(
                format!("household {hid}: inconsistent member ids"),
            ))?;
            ages[m] = AgeGroup::from_code(age)?;
            status[m][t - 1] = st;
        }
        out.push(HouseholdSeries::new(Household::new(hid, ages)?, status)?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!(
            "{}: no household records",
            path.display()
        )));
    }
    Ok(out)
}

/// Write a household panel in the same CSV schema.
pub fn write_series_csv(path: &Path, data: &[HouseholdSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["household_id", "member_id", "age_group", "time_index", "status"])?;
    for series in data {
        for (m, row) in series.status.iter().enumerate() {
            for (t, &st) in row.iter().enumerate() {
                w.write_record(&[
                    series.household.id.to_string(),
                    m.to_string(),
                    series.household.ages[m].code().to_string(),
                    (t + 1).to_string(),
                    st.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn household_size_bounds() {
        assert!(Household::new(0, vec![]).is_err());
        assert!(Household::new(0, vec![AgeGroup::Child; 8]).is_err());
        assert!(Household::new(0, vec![AgeGroup::Child; 7]).is_ok());
    }

    #[test]
    fn series_validation() {
        let hh = Household::new(0, vec![AgeGroup::Child, AgeGroup::Adult]).unwrap();
        assert!(HouseholdSeries::new(hh.clone(), vec![vec![0, 9], vec![9, 1]]).is_ok());
        assert!(HouseholdSeries::new(hh.clone(), vec![vec![9, 9], vec![9, 9]]).is_err());
        assert!(HouseholdSeries::new(hh.clone(), vec![vec![0, 2], vec![9, 1]]).is_err());
        assert!(HouseholdSeries::new(hh, vec![vec![0, 1]]).is_err());
    }

    #[test]
    fn variant_nesting_expansions() {
        let m2 = EpiVariant::M2;
        let v = vec![0.008, 0.047, 0.106, 0.005, 0.048, 0.02, 0.053, 1.184, 0.4, 0.1];
        let full = m2.expand_to_m1(&v);
        assert_eq!(full[0], full[1]);
        assert_eq!(full[0], 0.008);

        let m4 = EpiVariant::M4;
        let v4 = vec![0.01, 0.004, 0.047, 0.106, 0.005, 0.048, 0.02, 0.053, 0.4, 0.1];
        let full4 = m4.expand_to_m1(&v4);
        assert_eq!(full4[8], 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let hh = Household::new(3, vec![AgeGroup::Child, AgeGroup::Adult]).unwrap();
        let series =
            HouseholdSeries::new(hh, vec![vec![1, 9, 0], vec![0, 9, 9]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        write_series_csv(&path, &[series.clone()]).unwrap();
        let back = read_series_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], series);
    }

    #[test]
    fn csv_malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "household_id,member_id,age_group,time_index,status\n0,0,1,1,1\n0,0,1,x,0\n",
        )
        .unwrap();
        match read_series_csv(&path) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }
}
