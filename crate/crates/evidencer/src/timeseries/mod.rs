//! Count time-series models: integer autoregression by binomial thinning
//! (exact likelihood, with optional covariate links) and Poisson regression
//! driven by a latent AR(p) process (particle-filter likelihood).

mod inar;
mod poisreg;

pub use inar::{
    inar_loglik, inar_mcmc, inar_transition_logpmf, simulate_inar, InarModel, InarParams,
};
pub use poisreg::{
    ar_stationary_covariance, particle_filter_loglik, poisreg_mcmc, simulate_poisreg,
    ArStationary, PoisRegModel, PoisRegParams, PoisRegPriors, PoisRegSampler,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Observed nonnegative counts with optional covariate rows (first entry 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSeries {
    pub counts: Vec<u64>,
    pub covariates: Option<Vec<Vec<f64>>>,
}

impl CountSeries {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Config("empty count series".into()));
        }
        Ok(Self {
            counts,
            covariates: None,
        })
    }

    pub fn with_covariates(mut self, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                got: rows.len(),
            });
        }
        let width = rows.first().map_or(0, |r| r.len());
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Config("ragged covariate rows".into()));
        }
        self.covariates = Some(rows);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn covariate_width(&self) -> usize {
        self.covariates.as_ref().map_or(0, |r| r[0].len())
    }

    pub fn mean(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.counts.len() as f64
    }
}

/// Covariate row for the polio series: intercept, linear trend centred at
/// month 73 (January 1976) in units of 1000 months, and annual plus
/// semi-annual harmonics.
pub fn polio_covariate_rows(t: usize) -> Result<Vec<f64>> {
    if !(1..=168).contains(&t) {
        return Err(Error::Config(format!("polio time index {t} outside 1..=168")));
    }
    let tp = t as f64 - 73.0;
    let pi2 = 2.0 * std::f64::consts::PI;
    Ok(vec![
        1.0,
        tp / 1000.0,
        (pi2 * tp / 12.0).cos(),
        (pi2 * tp / 12.0).sin(),
        (pi2 * tp / 6.0).cos(),
        (pi2 * tp / 6.0).sin(),
    ])
}

/// Covariate row for the cut-injury series: intercept plus a summer
/// indicator (May through November; the series starts in January).
pub fn summer_covariate_rows(t: usize) -> Vec<f64> {
    let month = (t - 1) % 12 + 1;
    let summer = if (5..=11).contains(&month) { 1.0 } else { 0.0 };
    vec![1.0, summer]
}

/// Read a count series from CSV: time_index, count, then any covariate
/// columns.
pub fn read_series_csv(path: &Path) -> Result<CountSeries> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let mut rows: Vec<(usize, u64, Vec<f64>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        let bad = |msg: String| Error::MalformedRecord {
            path: path.display().to_string(),
            line,
            msg,
        };
        let t: usize = record
            .get(0)
            .ok_or_else(|| bad("missing time_index".into()))?
            .trim()
            .parse()
            .map_err(|e| bad(format!("time_index: {e}")))?;
        let count: u64 = record
            .get(1)
            .ok_or_else(|| bad("missing count".into()))?
            .trim()
            .parse()
            .map_err(|e| bad(format!("count: {e}")))?;
        let mut covs = Vec::new();
        for i in 2..record.len() {
            covs.push(
                record[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("covariate {i}: {e}")))?,
            );
        }
        rows.push((t, count, covs));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: empty series", path.display())));
    }
    rows.sort_by_key(|r| r.0);
    let counts = rows.iter().map(|r| r.1).collect();
    let series = CountSeries::new(counts)?;
    if rows[0].2.is_empty() {
        Ok(series)
    } else {
        series.with_covariates(rows.into_iter().map(|r| r.2).collect())
    }
}

pub fn write_series_csv(path: &Path, series: &CountSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let width = series.covariate_width();
    let mut header = vec!["time_index".to_string(), "count".to_string()];
    for i in 0..width {
        header.push(format!("z{i}"));
    }
    w.write_record(&header)?;
    for (t, &count) in series.counts.iter().enumerate() {
        let mut row = vec![(t + 1).to_string(), count.to_string()];
        if let Some(rows) = &series.covariates {
            for v in &rows[t] {
                row.push(format!("{v}"));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
