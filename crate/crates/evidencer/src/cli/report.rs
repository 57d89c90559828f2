//! Run reports: everything a run produced, traceable to its seed, with the
//! resolved configuration echoed so the run can be reproduced from the
//! report alone. Wall-time fields are the only nondeterministic content.

use crate::error::Result;
use crate::evidence::EvidenceEstimate;
use crate::mcmc::ChainOutput;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Resolved configuration echo.
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimates: Vec<MethodReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bayes_factors: Vec<BfReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub posterior: Vec<ParamSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_summary: Option<ReplicateSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub log_ml: f64,
    pub mc_se: Option<f64>,
    pub n_samples: usize,
    pub wall_time_s: f64,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<serde_json::Value>,
}

impl MethodReport {
    pub fn from_estimate(est: EvidenceEstimate, proposal: Option<serde_json::Value>) -> Self {
        Self {
            method: est.method,
            log_ml: est.log_ml,
            mc_se: est.mc_se,
            n_samples: est.n_samples,
            wall_time_s: est.wall_time_s,
            diagnostics: est.diagnostics,
            proposal,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BfReport {
    pub method: String,
    /// log B_12 in favour of the first model; absent when the indicator
    /// chain never switched (flagged in diagnostics).
    pub log_bf_12: Option<f64>,
    pub se: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_prob: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_ml_1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_ml_2: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub method: String,
    pub replicates: usize,
    pub mean_log_ml: f64,
    pub empirical_sd: f64,
    pub mean_reported_se: Option<f64>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            estimates: Vec::new(),
            bayes_factors: Vec::new(),
            posterior: Vec::new(),
            replicate_summary: None,
            artifacts: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Copy with every wall-time field zeroed, for byte-level determinism
    /// comparisons.
    pub fn without_wall_times(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        zero_wall_times(&mut v);
        v
    }
}

fn zero_wall_times(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, val) in map.iter_mut() {
                if k.contains("wall_time") {
                    *val = serde_json::Value::from(0.0);
                } else {
                    zero_wall_times(val);
                }
            }
        }
        serde_json::Value::Array(items) => {
            for item in items {
                zero_wall_times(item);
            }
        }
        _ => {}
    }
}

/// Per-parameter posterior summaries from retained draws.
pub fn summarize_chain(chain: &ChainOutput) -> Vec<ParamSummary> {
    let mut out = Vec::with_capacity(chain.dim());
    for (j, name) in chain.names.iter().enumerate() {
        let mut col = chain.column(j);
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        let (mean, var) = crate::numerics::mean_var(&col);
        let q = |p: f64| {
            if col.is_empty() {
                f64::NAN
            } else {
                col[((col.len() - 1) as f64 * p).round() as usize]
            }
        };
        out.push(ParamSummary {
            name: name.clone(),
            mean,
            sd: var.sqrt(),
            q025: q(0.025),
            q500: q(0.5),
            q975: q(0.975),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_times_zeroed_recursively() {
        let mut report = RunReport::new("evidence", 7, serde_json::json!({}));
        report.wall_time_s = 3.2;
        report.estimates.push(MethodReport {
            method: "is_mix".into(),
            log_ml: -1.0,
            mc_se: Some(0.1),
            n_samples: 10,
            wall_time_s: 1.5,
            diagnostics: BTreeMap::new(),
            proposal: None,
        });
        let v = report.without_wall_times();
        assert_eq!(v["wall_time_s"], 0.0);
        assert_eq!(v["estimates"][0]["wall_time_s"], 0.0);
        assert_eq!(v["estimates"][0]["log_ml"], -1.0);
    }
}
