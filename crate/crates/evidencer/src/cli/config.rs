//! Run configuration: strict JSON schema with explicit defaults. Unknown
//! keys are rejected so every experiment setting is auditable, and the
//! resolved configuration is echoed into reports so a run can be
//! reproduced from its own output.

use crate::epidemic::{EpiPriors, EpiTheta, EpiVariant};
use crate::error::{Error, Result};
use crate::timeseries::PoisRegPriors;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 picks the rayon default. The EVIDENCER_THREADS
    /// environment variable is the fallback when absent here and on the
    /// command line.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model2: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub emit_plot_data: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.replicates {
            if r < 2 {
                return Err(Error::Config("replicates must be at least 2".into()));
            }
        }
        for m in self.all_methods() {
            m.validate()?;
        }
        self.model.validate()?;
        if let Some(m2) = &self.model2 {
            m2.validate()?;
        }
        Ok(())
    }

    pub fn all_methods(&self) -> Vec<&MethodSpec> {
        let mut out: Vec<&MethodSpec> = Vec::new();
        if let Some(m) = &self.method {
            out.push(m);
        }
        out.extend(self.methods.iter());
        out
    }

    /// A full default configuration for each model kind, with paper-default
    /// budgets resolved explicitly.
    pub fn print_defaults() -> serde_json::Value {
        let mk = |model: ModelSpec| {
            let kind = model.kind_tag();
            let method = MethodSpec {
                kind: "is_mix".into(),
                ..MethodSpec::default()
            }
            .resolve(kind);
            serde_json::json!({
                "seed": 1,
                "threads": 0,
                "out_dir": "out",
                "model": model,
                "method": method,
            })
        };
        serde_json::json!({
            "toy": mk(ModelSpec::Toy { n: 20, theta: 1.0 }),
            "epidemic": mk(ModelSpec::Epidemic {
                variant: "M1".into(),
                data: Some(PathBuf::from("epidemic.csv")),
                delta_t: 7.0,
                priors: EpiPriors::default(),
            }),
            "inar": mk(ModelSpec::Inar {
                data: Some(PathBuf::from("counts.csv")),
                p: 1,
                covariates: CovariateSpec::None,
            }),
            "poisreg": mk(ModelSpec::Poisreg {
                data: Some(PathBuf::from("counts.csv")),
                p: 1,
                covariates: CovariateSpec::None,
                priors: PoisRegPriors::default(),
            }),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Built-in conjugate normal toy; data simulated from the run seed.
    Toy { n: usize, theta: f64 },
    Epidemic {
        variant: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
        #[serde(default = "default_delta_t")]
        delta_t: f64,
        #[serde(default)]
        priors: EpiPriors,
    },
    Inar {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
        #[serde(default = "default_order")]
        p: usize,
        #[serde(default)]
        covariates: CovariateSpec,
    },
    Poisreg {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data: Option<PathBuf>,
        #[serde(default = "default_order")]
        p: usize,
        #[serde(default)]
        covariates: CovariateSpec,
        #[serde(default)]
        priors: PoisRegPriors,
    },
}

fn default_delta_t() -> f64 {
    7.0
}

fn default_order() -> usize {
    1
}

impl ModelSpec {
    pub fn kind_tag(&self) -> &'static str {
        match self {
            ModelSpec::Toy { .. } => "toy",
            ModelSpec::Epidemic { .. } => "epidemic",
            ModelSpec::Inar { .. } => "inar",
            ModelSpec::Poisreg { .. } => "poisreg",
        }
    }

    pub fn data_path(&self) -> Option<&PathBuf> {
        match self {
            ModelSpec::Toy { .. } => None,
            ModelSpec::Epidemic { data, .. }
            | ModelSpec::Inar { data, .. }
            | ModelSpec::Poisreg { data, .. } => data.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Toy { n, .. } => {
                if *n == 0 {
                    return Err(Error::Config("toy model needs n >= 1".into()));
                }
            }
            ModelSpec::Epidemic { variant, delta_t, .. } => {
                if EpiVariant::from_tag(variant).is_none() {
                    return Err(Error::Config(format!(
                        "unknown epidemic variant {variant} (expected M1..M4)"
                    )));
                }
                if *delta_t <= 0.0 {
                    return Err(Error::Config("delta_t must be positive".into()));
                }
            }
            ModelSpec::Inar { p, .. } | ModelSpec::Poisreg { p, .. } => {
                if *p == 0 {
                    return Err(Error::Config("order p must be at least 1".into()));
                }
            }
        }
        if let Some(path) = self.data_path() {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "data file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// How to attach covariate rows to a count series.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSpec {
    /// No covariates (drop any columns present in the CSV).
    #[default]
    None,
    /// Use the covariate columns of the data CSV.
    FromData,
    /// Intercept, centred linear trend and two harmonics (168 months).
    Polio,
    /// Intercept plus a May-November summer indicator.
    Summer,
}

/// Method request with optional budgets; unset budgets resolve to the
/// model-appropriate defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    /// is_mix | is_n1..is_n4 | is_t4..is_t10 | chib | pp | hm | rj | rjcor
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_burnin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    /// Importance-sampling draws.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_is: Option<usize>,
    /// Particle count for the particle-filter likelihood oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    /// Power posteriors: rung count for the geometric ladder (n+1 rungs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rungs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_ladder: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps_per_rung: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin_per_rung: Option<usize>,
    /// Chib reduced-run length and replicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_reduced: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_reduced: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chib_replicates: Option<usize>,
    /// Reversible jump: pilot length (rjcor) and jump scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Mixture proposal weight override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_weight: Option<f64>,
    /// When set, budgets are rescaled by a calibration pass so the method
    /// consumes approximately this much wall time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_target_s: Option<f64>,
}

pub const METHOD_KINDS: &[&str] = &[
    "is_n1", "is_n2", "is_n3", "is_n4", "is_mix", "is_t4", "is_t6", "is_t8", "is_t10", "chib",
    "pp", "hm", "rj", "rjcor",
];

impl MethodSpec {
    pub fn named(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !METHOD_KINDS.contains(&self.kind.as_str()) {
            return Err(Error::Config(format!(
                "unknown method {} (expected one of {METHOD_KINDS:?})",
                self.kind
            )));
        }
        for (name, v) in [
            ("n_iter", self.n_iter),
            ("n_is", self.n_is),
            ("particles", self.particles),
            ("rungs", self.rungs),
            ("sweeps_per_rung", self.sweeps_per_rung),
            ("n_reduced", self.n_reduced),
            ("pilot_iter", self.pilot_iter),
        ] {
            if v == Some(0) {
                return Err(Error::Config(format!("budget {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Fill unset budgets with the model-appropriate defaults: the epidemic
    /// study settings for the epidemic model, the time-series defaults
    /// (110000/10000 iterations, 10000 draws, 1000 particles) for the count
    /// models, and light budgets for the toy.
    pub fn resolve(&self, model_kind: &str) -> ResolvedMethod {
        let (d_iter, d_burn, d_is, d_particles) = match model_kind {
            "epidemic" => (30_000, 5_000, 25_000, 1),
            "inar" | "poisreg" => (110_000, 10_000, 10_000, 1_000),
            _ => (12_000, 2_000, 20_000, 1),
        };
        let (d_chib_iter, d_chib_burn) = match model_kind {
            "epidemic" => (22_000, 2_000),
            _ => (d_iter / 2, d_burn / 2),
        };
        let (d_hm_iter, d_hm_burn) = match model_kind {
            "epidemic" => (53_000, 3_000),
            _ => (d_iter, d_burn),
        };
        let kind = self.kind.clone();
        let (n_iter, n_burnin) = match kind.as_str() {
            "chib" => (
                self.n_iter.unwrap_or(d_chib_iter),
                self.n_burnin.unwrap_or(d_chib_burn),
            ),
            "hm" => (
                self.n_iter.unwrap_or(d_hm_iter),
                self.n_burnin.unwrap_or(d_hm_burn),
            ),
            // Vanilla reversible jump: 30000 burn-in then 76000 retained.
            "rj" => (
                self.n_iter.unwrap_or(106_000),
                self.n_burnin.unwrap_or(30_000),
            ),
            // Corrected variant: a pilot run, then 76000 total of which
            // 30000 are discarded.
            "rjcor" => (
                self.n_iter.unwrap_or(76_000),
                self.n_burnin.unwrap_or(30_000),
            ),
            _ => (self.n_iter.unwrap_or(d_iter), self.n_burnin.unwrap_or(d_burn)),
        };
        ResolvedMethod {
            kind,
            n_iter,
            n_burnin,
            thin: self.thin.unwrap_or(1),
            n_is: self.n_is.unwrap_or(d_is),
            particles: self.particles.unwrap_or(d_particles),
            rungs: self.rungs.unwrap_or(20),
            ladder_c: self.ladder_c.unwrap_or(crate::evidence::DEFAULT_LADDER_C),
            explicit_ladder: self.explicit_ladder.clone(),
            sweeps_per_rung: self.sweeps_per_rung.unwrap_or(2_650),
            burnin_per_rung: self.burnin_per_rung.unwrap_or(650),
            n_reduced: self.n_reduced.unwrap_or(n_iter.min(5_000)),
            burn_reduced: self.burn_reduced.unwrap_or(n_burnin.min(500)),
            chib_replicates: self.chib_replicates.unwrap_or(3),
            pilot_iter: self.pilot_iter.unwrap_or(30_000),
            sigma: self.sigma,
            mix_weight: self.mix_weight.unwrap_or(0.95),
            wall_time_target_s: self.wall_time_target_s,
        }
    }
}

/// Method with every budget pinned; this is what reports echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedMethod {
    pub kind: String,
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub n_is: usize,
    pub particles: usize,
    pub rungs: usize,
    pub ladder_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_ladder: Option<Vec<f64>>,
    pub sweeps_per_rung: usize,
    pub burnin_per_rung: usize,
    pub n_reduced: usize,
    pub burn_reduced: usize,
    pub chib_replicates: usize,
    pub pilot_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub mix_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_target_s: Option<f64>,
}

impl ResolvedMethod {
    /// Multiply every iteration-like budget by `factor` (wall-time
    /// calibration), respecting minimum viable sizes.
    pub fn scaled(&self, factor: f64) -> ResolvedMethod {
        let scale = |v: usize, min: usize| ((v as f64 * factor) as usize).max(min);
        let mut out = self.clone();
        out.n_iter = scale(self.n_iter, self.n_burnin + 50);
        out.n_is = scale(self.n_is, 16);
        out.sweeps_per_rung = scale(self.sweeps_per_rung, self.burnin_per_rung + 20);
        out.n_reduced = scale(self.n_reduced, 50);
        out.wall_time_target_s = None;
        out
    }
}

/// What to simulate for `cmd_simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateSpec {
    Epidemic {
        design: DesignSpec,
        /// "paper-3.5" or explicit parameter values.
        theta: EpiThetaSpec,
        #[serde(default)]
        coord_missing_prob: f64,
        #[serde(default = "default_delta_t")]
        delta_t: f64,
    },
    Inar {
        n: usize,
        alpha: Vec<f64>,
        lambda: f64,
        #[serde(default)]
        covariates: CovariateSpec,
    },
    Poisreg {
        n: usize,
        mu: f64,
        a: Vec<f64>,
        tau: f64,
        #[serde(default)]
        covariates: CovariateSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSpec {
    /// "paper-3.5"
    Preset(String),
    Scaled { households: usize, t_len: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpiThetaSpec {
    Preset(String),
    Explicit(EpiTheta),
}

impl EpiThetaSpec {
    pub fn build(&self, delta_t: f64) -> Result<EpiTheta> {
        match self {
            EpiThetaSpec::Preset(name) if name == "paper-3.5" => {
                Ok(EpiTheta::study_truth(delta_t))
            }
            EpiThetaSpec::Preset(name) => Err(Error::Config(format!(
                "unknown theta preset {name} (expected \"paper-3.5\")"
            ))),
            EpiThetaSpec::Explicit(theta) => {
                let mut t = theta.clone();
                t.delta_t = delta_t;
                Ok(t)
            }
        }
    }
}

impl DesignSpec {
    pub fn build(&self) -> Result<crate::epidemic::EpiDesign> {
        match self {
            DesignSpec::Preset(name) if name == "paper-3.5" => {
                Ok(crate::epidemic::EpiDesign::paper_66())
            }
            DesignSpec::Preset(name) => Err(Error::Config(format!(
                "unknown design preset {name} (expected \"paper-3.5\")"
            ))),
            DesignSpec::Scaled { households, t_len } => {
                if *households == 0 || *t_len == 0 {
                    return Err(Error::Config("zero-length simulation request".into()));
                }
                Ok(crate::epidemic::EpiDesign::scaled(*households, *t_len))
            }
        }
    }
}
