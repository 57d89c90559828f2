//! Command implementations behind the CLI surface. Each command takes a
//! validated configuration, produces artifacts under the output directory,
//! and returns a [`RunReport`].

use super::config::{
    CovariateSpec, MethodSpec, ModelSpec, ResolvedMethod, RunConfig, SimulateSpec,
};
use super::report::{summarize_chain, BfReport, MethodReport, ReplicateSummary, RunReport};
use crate::epidemic::{
    self, epi_mcmc, EpiChib, EpiPriors, EpiRjPair, EpiSampler, EpiTemperedTarget, EpiVariant,
    HouseholdSeries, MissingnessSpec,
};
use crate::error::{Error, Result};
use crate::evidence::{
    chib_evidence, harmonic_mean_evidence, is_evidence, make_ladder, power_posterior_evidence,
    replicate_study, rjmcmc_bayes_factor, rjmcmc_corrected, ChibConfig, EvidenceEstimate,
    ExactOracle, LadderScheme, PowerPosteriorConfig, RjConfig, RjOutput,
};
use crate::mcmc::{run_chain, ChainOutput, McmcConfig};
use crate::numerics::RngStream;
use crate::prior::PriorSpec;
use crate::proposals::{fit_proposal, Proposal, ProposalFamily};
use crate::timeseries::{
    self, inar_mcmc, poisreg_mcmc, simulate_inar, simulate_poisreg, CountSeries, InarModel,
    InarParams, PoisRegModel, PoisRegParams,
};
use crate::toy::ConjugateNormalToy;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// A model bound to its data, ready to run.
pub enum BuiltModel {
    Toy(ConjugateNormalToy),
    Epidemic {
        data: Vec<HouseholdSeries>,
        variant: EpiVariant,
        priors: EpiPriors,
        delta_t: f64,
    },
    Inar(InarModel),
    Poisreg(PoisRegModel),
}

impl BuiltModel {
    pub fn kind_tag(&self) -> &'static str {
        match self {
            BuiltModel::Toy(_) => "toy",
            BuiltModel::Epidemic { .. } => "epidemic",
            BuiltModel::Inar(_) => "inar",
            BuiltModel::Poisreg(_) => "poisreg",
        }
    }
}

fn attach_covariates(series: CountSeries, spec: &CovariateSpec) -> Result<CountSeries> {
    match spec {
        CovariateSpec::None => Ok(CountSeries {
            counts: series.counts,
            covariates: None,
        }),
        CovariateSpec::FromData => {
            if series.covariates.is_none() {
                return Err(Error::Config(
                    "covariates=from_data but the CSV has no covariate columns".into(),
                ));
            }
            Ok(series)
        }
        CovariateSpec::Polio => {
            let rows: Result<Vec<Vec<f64>>> = (1..=series.counts.len())
                .map(timeseries::polio_covariate_rows)
                .collect();
            CountSeries {
                counts: series.counts,
                covariates: None,
            }
            .with_covariates(rows?)
        }
        CovariateSpec::Summer => {
            let rows: Vec<Vec<f64>> = (1..=series.counts.len())
                .map(timeseries::summer_covariate_rows)
                .collect();
            CountSeries {
                counts: series.counts,
                covariates: None,
            }
            .with_covariates(rows)
        }
    }
}

/// Bind a model specification to its data. The toy simulates its data from
/// a dedicated substream of the run seed.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<BuiltModel> {
    match spec {
        ModelSpec::Toy { n, theta } => {
            let mut rng = RngStream::new(seed, 0xda7a);
            Ok(BuiltModel::Toy(ConjugateNormalToy::simulate(
                *n, *theta, &mut rng,
            )))
        }
        ModelSpec::Epidemic {
            variant,
            data,
            delta_t,
            priors,
        } => {
            let path = data
                .as_ref()
                .ok_or_else(|| Error::Config("epidemic model needs a data file".into()))?;
            let data = epidemic::read_series_csv(path)?;
            let variant = EpiVariant::from_tag(variant)
                .ok_or_else(|| Error::Config(format!("unknown variant {variant}")))?;
            Ok(BuiltModel::Epidemic {
                data,
                variant,
                priors: priors.clone(),
                delta_t: *delta_t,
            })
        }
        ModelSpec::Inar { data, p, covariates } => {
            let path = data
                .as_ref()
                .ok_or_else(|| Error::Config("inar model needs a data file".into()))?;
            let series = attach_covariates(timeseries::read_series_csv(path)?, covariates)?;
            let covariate_link = !matches!(covariates, CovariateSpec::None);
            Ok(BuiltModel::Inar(InarModel::new(series, *p, covariate_link)?))
        }
        ModelSpec::Poisreg {
            data,
            p,
            covariates,
            priors,
        } => {
            let path = data
                .as_ref()
                .ok_or_else(|| Error::Config("poisreg model needs a data file".into()))?;
            let series = attach_covariates(timeseries::read_series_csv(path)?, covariates)?;
            Ok(BuiltModel::Poisreg(PoisRegModel::new(
                series,
                *p,
                priors.clone(),
            )?))
        }
    }
}

fn mcmc_config(method: &ResolvedMethod, conditional_loglik: bool) -> McmcConfig {
    let mut c = McmcConfig::new(method.n_iter, method.n_burnin, method.thin);
    if conditional_loglik {
        c = c.with_conditional_loglik();
    }
    c
}

fn fit_family(
    chain: &ChainOutput,
    family: ProposalFamily,
    prior: &PriorSpec,
    mix_weight: f64,
) -> Result<Proposal> {
    let q = fit_proposal(chain, family, Some(prior))?;
    if family == ProposalFamily::Mix {
        q.with_mix_weight(mix_weight)
    } else {
        Ok(q)
    }
}

fn unsupported(model: &str, method: &str) -> Error {
    Error::Config(format!("method {method} is not supported for the {model} model"))
}

/// Run one evidence method end to end on a built model.
pub fn run_method(
    model: &BuiltModel,
    method: &ResolvedMethod,
    rng: &mut RngStream,
) -> Result<(EvidenceEstimate, Option<serde_json::Value>)> {
    if let Some(target) = method.wall_time_target_s {
        let calibrated = calibrate_budget(model, method, target, rng)?;
        return run_method_resolved(model, &calibrated, rng);
    }
    run_method_resolved(model, method, rng)
}

fn run_method_resolved(
    model: &BuiltModel,
    method: &ResolvedMethod,
    rng: &mut RngStream,
) -> Result<(EvidenceEstimate, Option<serde_json::Value>)> {
    let kind = method.kind.as_str();
    if kind == "rj" || kind == "rjcor" {
        return Err(Error::Config(
            "reversible jump estimates Bayes factors; use the compare command".into(),
        ));
    }
    match model {
        BuiltModel::Toy(toy) => match kind {
            k if k.starts_with("is_") => {
                let family = ProposalFamily::from_tag(k).expect("validated method kind");
                let mut sweeper = toy.sweeper();
                let chain = run_chain(&mut sweeper, &mcmc_config(method, false), rng)?;
                let q = fit_family(&chain, family, toy.prior(), method.mix_weight)?;
                let est = is_evidence(&toy.oracle(), toy.prior(), &q, method.n_is, rng, k)?;
                Ok((est, Some(q.summary())))
            }
            "chib" => {
                let mut m = toy.clone();
                let cfg = ChibConfig {
                    n_main: method.n_iter - method.n_burnin,
                    burn_main: method.n_burnin,
                    n_reduced: method.n_reduced,
                    burn_reduced: method.burn_reduced,
                    n_replicates: method.chib_replicates,
                };
                Ok((chib_evidence(&mut m, &cfg, rng)?, None))
            }
            "pp" => {
                let ladder = build_ladder(method)?;
                let cfg = PowerPosteriorConfig {
                    sweeps_per_rung: method.sweeps_per_rung,
                    burnin_per_rung: method.burnin_per_rung,
                };
                Ok((power_posterior_evidence(toy, &ladder, &cfg, rng)?, None))
            }
            "hm" => {
                let mut sweeper = toy.sweeper();
                let chain = run_chain(&mut sweeper, &mcmc_config(method, true), rng)?;
                let trace = chain.cond_loglik.as_ref().expect("recorded");
                Ok((harmonic_mean_evidence(trace)?, None))
            }
            other => Err(unsupported("toy", other)),
        },
        BuiltModel::Epidemic {
            data,
            variant,
            priors,
            delta_t,
        } => match kind {
            k if k.starts_with("is_") => {
                let family = ProposalFamily::from_tag(k).expect("validated method kind");
                let (chain, sampler) = epi_mcmc(
                    data.clone(),
                    *variant,
                    priors,
                    *delta_t,
                    &mcmc_config(method, false),
                    rng,
                )?;
                let prior = sampler.prior().clone();
                let q = fit_family(&chain, family, &prior, method.mix_weight)?;
                let target = EpiTemperedTarget::new(data.clone(), *variant, priors, *delta_t);
                let oracle = ExactOracle(move |v: &[f64]| target.observed_loglik_at(v));
                let est = is_evidence(&oracle, &prior, &q, method.n_is, rng, k)?;
                Ok((est, Some(q.summary())))
            }
            "chib" => {
                let sampler =
                    EpiSampler::new(data.clone(), *variant, priors, *delta_t, rng)?;
                let mut m = EpiChib::new(sampler);
                let cfg = ChibConfig {
                    n_main: method.n_iter - method.n_burnin,
                    burn_main: method.n_burnin,
                    n_reduced: method.n_reduced,
                    burn_reduced: method.burn_reduced,
                    n_replicates: method.chib_replicates,
                };
                Ok((chib_evidence(&mut m, &cfg, rng)?, None))
            }
            "pp" => {
                let target = EpiTemperedTarget::new(data.clone(), *variant, priors, *delta_t);
                let ladder = build_ladder(method)?;
                let cfg = PowerPosteriorConfig {
                    sweeps_per_rung: method.sweeps_per_rung,
                    burnin_per_rung: method.burnin_per_rung,
                };
                Ok((power_posterior_evidence(&target, &ladder, &cfg, rng)?, None))
            }
            "hm" => {
                let (chain, _) = epi_mcmc(
                    data.clone(),
                    *variant,
                    priors,
                    *delta_t,
                    &mcmc_config(method, true),
                    rng,
                )?;
                let trace = chain.cond_loglik.as_ref().expect("recorded");
                Ok((harmonic_mean_evidence(trace)?, None))
            }
            other => Err(unsupported("epidemic", other)),
        },
        BuiltModel::Inar(inar) => match kind {
            k if k.starts_with("is_") => {
                let family = ProposalFamily::from_tag(k).expect("validated method kind");
                let chain = inar_mcmc(inar, &mcmc_config(method, false), rng)?;
                let q = fit_family(&chain, family, inar.prior(), method.mix_weight)?;
                let est = is_evidence(&inar.oracle(), inar.prior(), &q, method.n_is, rng, k)?;
                Ok((est, Some(q.summary())))
            }
            "pp" => {
                let ladder = build_ladder(method)?;
                let cfg = PowerPosteriorConfig {
                    sweeps_per_rung: method.sweeps_per_rung,
                    burnin_per_rung: method.burnin_per_rung,
                };
                Ok((power_posterior_evidence(inar, &ladder, &cfg, rng)?, None))
            }
            "hm" => {
                let mut sweeper = inar.sweeper();
                let chain = run_chain(&mut sweeper, &mcmc_config(method, true), rng)?;
                let trace = chain.cond_loglik.as_ref().expect("recorded");
                Ok((harmonic_mean_evidence(trace)?, None))
            }
            other => Err(unsupported("inar", other)),
        },
        BuiltModel::Poisreg(pr) => match kind {
            k if k.starts_with("is_") => {
                let family = ProposalFamily::from_tag(k).expect("validated method kind");
                let (chain, _) = poisreg_mcmc(pr, &mcmc_config(method, false), rng)?;
                let q = fit_family(&chain, family, pr.prior(), method.mix_weight)?;
                let oracle = pr.oracle(method.particles);
                let est = is_evidence(&oracle, pr.prior(), &q, method.n_is, rng, k)?;
                Ok((est, Some(q.summary())))
            }
            "hm" => {
                let (chain, _) = poisreg_mcmc(pr, &mcmc_config(method, true), rng)?;
                let trace = chain.cond_loglik.as_ref().expect("recorded");
                Ok((harmonic_mean_evidence(trace)?, None))
            }
            other => Err(unsupported("poisreg", other)),
        },
    }
}

fn build_ladder(method: &ResolvedMethod) -> Result<crate::evidence::TemperatureLadder> {
    match &method.explicit_ladder {
        Some(ts) => make_ladder(0, LadderScheme::Explicit(ts.clone())),
        None => make_ladder(method.rungs, LadderScheme::Geometric { c: method.ladder_c }),
    }
}

/// Wall-time budget calibration: run a down-scaled probe, measure, rescale
/// every iteration-like budget linearly toward the target.
pub fn calibrate_budget(
    model: &BuiltModel,
    method: &ResolvedMethod,
    target_s: f64,
    rng: &mut RngStream,
) -> Result<ResolvedMethod> {
    const PROBE_FACTOR: f64 = 0.02;
    let probe = method.scaled(PROBE_FACTOR);
    let start = Instant::now();
    let mut probe_rng = rng.substream(0xca11b);
    run_method_resolved(model, &probe, &mut probe_rng)?;
    let elapsed = start.elapsed().as_secs_f64().max(1e-4);
    let factor = (PROBE_FACTOR * target_s / elapsed).clamp(1e-3, 1e4);
    Ok(method.scaled(factor))
}

fn report_path(config: &RunConfig, name: &str) -> PathBuf {
    config.out_dir.join(name)
}

fn config_echo(config: &RunConfig, resolved: &[ResolvedMethod]) -> serde_json::Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.insert(
            "resolved_methods".into(),
            serde_json::to_value(resolved).expect("methods serialize"),
        );
    }
    v
}

fn ensure_out_dir(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.out_dir)?;
    Ok(())
}

/// Simulate a dataset and its truth record.
pub fn cmd_simulate(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    ensure_out_dir(config)?;
    let spec = config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("simulate command needs a `simulate` block".into()))?;
    let mut rng = RngStream::new(config.seed, 0x51);
    let mut report = RunReport::new("simulate", config.seed, config_echo(config, &[]));
    match spec {
        SimulateSpec::Epidemic {
            design,
            theta,
            coord_missing_prob,
            delta_t,
        } => {
            let design = design.build()?;
            let theta = theta.build(*delta_t)?;
            let missing = MissingnessSpec {
                coord_missing_prob: *coord_missing_prob,
            };
            let (data, truth) = epidemic::simulate_epidemic(&design, &theta, &missing, &mut rng);
            let data_path = report_path(config, "epidemic.csv");
            epidemic::write_series_csv(&data_path, &data)?;
            let truth_path = report_path(config, "truth.json");
            write_json(&truth_path, &serde_json::to_value(&truth)?)?;
            report.artifacts = vec![
                data_path.display().to_string(),
                truth_path.display().to_string(),
            ];
        }
        SimulateSpec::Inar {
            n,
            alpha,
            lambda,
            covariates,
        } => {
            if *n == 0 {
                return Err(Error::Config("zero-length series request".into()));
            }
            let rows = covariate_rows_for(covariates, *n)?;
            let params = InarParams::Plain {
                alpha: alpha.clone(),
                lambda: *lambda,
            };
            let series = simulate_inar(&params, *n, rows, &mut rng)?;
            let data_path = report_path(config, "counts.csv");
            timeseries::write_series_csv(&data_path, &series)?;
            let truth_path = report_path(config, "truth.json");
            write_json(
                &truth_path,
                &serde_json::json!({"model": "inar", "params": params, "n": n}),
            )?;
            report.artifacts = vec![
                data_path.display().to_string(),
                truth_path.display().to_string(),
            ];
        }
        SimulateSpec::Poisreg {
            n,
            mu,
            a,
            tau,
            covariates,
        } => {
            if *n == 0 {
                return Err(Error::Config("zero-length series request".into()));
            }
            let rows = covariate_rows_for(covariates, *n)?;
            let params = PoisRegParams::Conjugate {
                phi: *mu,
                a: a.clone(),
                tau: *tau,
            };
            let series = simulate_poisreg(&params, *n, rows, &mut rng)?;
            let data_path = report_path(config, "counts.csv");
            timeseries::write_series_csv(&data_path, &series)?;
            let truth_path = report_path(config, "truth.json");
            write_json(
                &truth_path,
                &serde_json::json!({"model": "poisreg", "params": params, "n": n}),
            )?;
            report.artifacts = vec![
                data_path.display().to_string(),
                truth_path.display().to_string(),
            ];
        }
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn covariate_rows_for(spec: &CovariateSpec, n: usize) -> Result<Option<Vec<Vec<f64>>>> {
    match spec {
        CovariateSpec::None => Ok(None),
        CovariateSpec::FromData => Err(Error::Config(
            "from_data covariates are not available when simulating".into(),
        )),
        CovariateSpec::Polio => {
            let rows: Result<Vec<Vec<f64>>> =
                (1..=n).map(timeseries::polio_covariate_rows).collect();
            Ok(Some(rows?))
        }
        CovariateSpec::Summer => Ok(Some(
            (1..=n).map(timeseries::summer_covariate_rows).collect(),
        )),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Fit the model's posterior and persist the chain plus summaries.
pub fn cmd_fit(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    ensure_out_dir(config)?;
    let method = config
        .method
        .clone()
        .unwrap_or_else(|| MethodSpec::named("is_mix"));
    let resolved = method.resolve(config.model.kind_tag());
    let model = build_model(&config.model, config.seed)?;
    let mut rng = RngStream::new(config.seed, 0xf17);
    let chain = fit_chain(&model, &resolved, &mut rng)?;
    let mut report = RunReport::new(
        "fit",
        config.seed,
        config_echo(config, std::slice::from_ref(&resolved)),
    );
    report.posterior = summarize_chain(&chain);
    let chain_path = report_path(config, &format!("chain_{}.csv", model.kind_tag()));
    chain.save(&chain_path)?;
    let summary_path = report_path(config, "posterior_summary.json");
    write_json(
        &summary_path,
        &serde_json::json!({
            "posterior": report.posterior,
            "acceptance": chain.acceptance,
            "seed": config.seed,
            "n_draws": chain.n_draws(),
        }),
    )?;
    report.artifacts = vec![
        chain_path.display().to_string(),
        summary_path.display().to_string(),
    ];
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn fit_chain(
    model: &BuiltModel,
    method: &ResolvedMethod,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    let config = mcmc_config(method, false);
    match model {
        BuiltModel::Toy(toy) => {
            let mut sweeper = toy.sweeper();
            run_chain(&mut sweeper, &config, rng)
        }
        BuiltModel::Epidemic {
            data,
            variant,
            priors,
            delta_t,
        } => Ok(epi_mcmc(data.clone(), *variant, priors, *delta_t, &config, rng)?.0),
        BuiltModel::Inar(inar) => inar_mcmc(inar, &config, rng),
        BuiltModel::Poisreg(pr) => Ok(poisreg_mcmc(pr, &config, rng)?.0),
    }
}

/// Estimate the marginal likelihood with one or more methods.
pub fn cmd_evidence(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    ensure_out_dir(config)?;
    let methods = config.all_methods();
    if methods.is_empty() {
        return Err(Error::Config("evidence command needs a method".into()));
    }
    let resolved: Vec<ResolvedMethod> = methods
        .iter()
        .map(|m| m.resolve(config.model.kind_tag()))
        .collect();
    let model = build_model(&config.model, config.seed)?;
    let mut report = RunReport::new("evidence", config.seed, config_echo(config, &resolved));
    for (i, method) in resolved.iter().enumerate() {
        let mut rng = RngStream::new(config.seed, 0xe0 + i as u64);
        let (est, proposal) = run_method(&model, method, &mut rng)?;
        report.estimates.push(MethodReport::from_estimate(est, proposal));
    }
    if report.estimates.len() > 1 {
        let csv_path = report_path(config, "estimates.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["method", "samples", "log_ml", "mc_se"])?;
        for e in &report.estimates {
            w.write_record(&[
                e.method.clone(),
                e.n_samples.to_string(),
                format!("{:.6}", e.log_ml),
                e.mc_se.map_or("".into(), |s| format!("{s:.6}")),
            ])?;
        }
        w.flush()?;
        report.artifacts.push(csv_path.display().to_string());
    }
    let path = report_path(config, "evidence_report.json");
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.save(&path)?;
    report.artifacts.push(path.display().to_string());
    Ok(report)
}

/// Compare two models on the same dataset: Bayes factor from per-model
/// evidence, or from the transdimensional sampler for rj/rjcor.
pub fn cmd_compare(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    ensure_out_dir(config)?;
    let model2_spec = config
        .model2
        .as_ref()
        .ok_or_else(|| Error::Config("compare command needs `model2`".into()))?;
    if config.model.data_path() != model2_spec.data_path() {
        return Err(Error::Config(
            "dataset mismatch: both models must reference the same data".into(),
        ));
    }
    let methods = config.all_methods();
    if methods.is_empty() {
        return Err(Error::Config("compare command needs a method".into()));
    }
    let resolved: Vec<ResolvedMethod> = methods
        .iter()
        .map(|m| m.resolve(config.model.kind_tag()))
        .collect();
    let mut report = RunReport::new("compare", config.seed, config_echo(config, &resolved));

    for (i, method) in resolved.iter().enumerate() {
        let mut rng = RngStream::new(config.seed, 0xc0 + i as u64);
        match method.kind.as_str() {
            "rj" | "rjcor" => {
                let out = run_rj(config, model2_spec, method, &mut rng)?;
                report.bayes_factors.push(rj_to_report(&method.kind, out));
            }
            _ => {
                let m1 = build_model(&config.model, config.seed)?;
                let m2 = build_model(model2_spec, config.seed)?;
                let (e1, _) = run_method(&m1, method, &mut rng)?;
                let (e2, _) = run_method(&m2, method, &mut rng)?;
                let se = e1.combined_se(&e2);
                let mut diagnostics = std::collections::BTreeMap::new();
                if let Some(s1) = e1.mc_se {
                    diagnostics.insert("se_1".into(), s1);
                }
                if let Some(s2) = e2.mc_se {
                    diagnostics.insert("se_2".into(), s2);
                }
                report.bayes_factors.push(BfReport {
                    method: method.kind.clone(),
                    log_bf_12: Some(e1.log_ml - e2.log_ml),
                    se,
                    post_prob: None,
                    log_ml_1: Some(e1.log_ml),
                    log_ml_2: Some(e2.log_ml),
                    diagnostics,
                });
            }
        }
    }
    let path = report_path(config, "compare_report.json");
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.save(&path)?;
    report.artifacts.push(path.display().to_string());
    Ok(report)
}

fn run_rj(
    config: &RunConfig,
    model2: &ModelSpec,
    method: &ResolvedMethod,
    rng: &mut RngStream,
) -> Result<RjOutput> {
    // The built-in transdimensional pair is epidemic M1 vs M2.
    let (data_path, priors, delta_t) = match (&config.model, model2) {
        (
            ModelSpec::Epidemic {
                variant: v1,
                data: Some(path),
                priors,
                delta_t,
            },
            ModelSpec::Epidemic { variant: v2, .. },
        ) if v1 == "M1" && v2 == "M2" => (path.clone(), priors.clone(), *delta_t),
        _ => {
            return Err(Error::Config(
                "rj/rjcor support the epidemic M1-vs-M2 pair with shared data".into(),
            ))
        }
    };
    let data = epidemic::read_series_csv(&data_path)?;
    let l1 = data
        .iter()
        .map(|s| s.household.n_children())
        .sum::<usize>() as f64;
    let l2 = data.iter().map(|s| s.household.size()).sum::<usize>() as f64 - l1;
    let sigma = match method.sigma {
        Some(s) => s,
        None => {
            // Pilot M1 chain fixes the jump scale.
            let pilot_cfg = McmcConfig::new(2_000, 500, 1);
            let (chain, _) = epi_mcmc(
                data.clone(),
                EpiVariant::M1,
                &priors,
                delta_t,
                &pilot_cfg,
                rng,
            )?;
            EpiRjPair::pilot_sigma(&chain, l1, l2)
        }
    };
    let mut pair = EpiRjPair::new(data, &priors, delta_t, sigma, rng)?;
    match method.kind.as_str() {
        "rj" => rjmcmc_bayes_factor(&mut pair, &RjConfig::new(method.n_iter, method.n_burnin), rng),
        _ => rjmcmc_corrected(
            &mut pair,
            &RjConfig::new(method.pilot_iter, method.pilot_iter / 5),
            &RjConfig::new(method.n_iter, method.n_burnin),
            rng,
        ),
    }
}

fn rj_to_report(kind: &str, out: RjOutput) -> BfReport {
    let mut diagnostics = out.diagnostics;
    diagnostics.insert("n_switches".into(), out.n_switches as f64);
    diagnostics.insert("n_jump_attempts".into(), out.n_jump_attempts as f64);
    let log_bf = if out.log_bf_12.is_finite() {
        Some(out.log_bf_12)
    } else {
        diagnostics.insert(
            "log_bf_infinite_sign".into(),
            if out.log_bf_12 > 0.0 { 1.0 } else { -1.0 },
        );
        None
    };
    let se = if out.se_log_bf.is_finite() {
        Some(out.se_log_bf)
    } else {
        diagnostics.insert("se_infinite".into(), 1.0);
        None
    };
    BfReport {
        method: kind.to_string(),
        log_bf_12: log_bf,
        se,
        post_prob: Some(out.post_prob),
        log_ml_1: None,
        log_ml_2: None,
        diagnostics,
    }
}

/// Run R independent replications of each method and tabulate the spread.
pub fn cmd_replicate(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    ensure_out_dir(config)?;
    let r = config
        .replicates
        .ok_or_else(|| Error::Config("replicate command needs `replicates`".into()))?;
    let methods = config.all_methods();
    if methods.is_empty() {
        return Err(Error::Config("replicate command needs a method".into()));
    }
    let resolved: Vec<ResolvedMethod> = methods
        .iter()
        .map(|m| m.resolve(config.model.kind_tag()))
        .collect();
    let model = build_model(&config.model, config.seed)?;
    let mut report = RunReport::new("replicate", config.seed, config_echo(config, &resolved));

    let csv_path = report_path(config, "replicates.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "method",
        "replicate",
        "samples",
        "log_ml",
        "mc_se",
        "wall_time_s",
        "empirical_sd",
    ])?;

    let mut plot_rows: Vec<(String, usize, f64, f64, f64)> = Vec::new();
    let mut summaries = Vec::new();
    for (i, method) in resolved.iter().enumerate() {
        let mut rng = RngStream::new(config.seed, 0x4e9 + i as u64);
        let effective = match method.wall_time_target_s {
            Some(target) => calibrate_budget(&model, method, target, &mut rng)?,
            None => method.clone(),
        };
        let study = replicate_study(
            |_, mut stream| Ok(run_method_resolved(&model, &effective, &mut stream)?.0),
            r,
            &mut rng,
        )?;
        for (rep, est) in study.estimates.iter().enumerate() {
            w.write_record(&[
                method.kind.clone(),
                rep.to_string(),
                est.n_samples.to_string(),
                format!("{:.6}", est.log_ml),
                est.mc_se.map_or("".into(), |s| format!("{s:.6}")),
                format!("{:.3}", est.wall_time_s),
                format!("{:.6}", study.empirical_sd),
            ])?;
            plot_rows.push((
                method.kind.clone(),
                rep,
                est.log_ml,
                est.mc_se.unwrap_or(f64::NAN),
                est.wall_time_s,
            ));
        }
        summaries.push(ReplicateSummary {
            method: method.kind.clone(),
            replicates: r,
            mean_log_ml: study.mean_log_ml,
            empirical_sd: study.empirical_sd,
            mean_reported_se: study.mean_reported_se(),
        });
    }
    w.flush()?;
    report.artifacts.push(csv_path.display().to_string());

    // Single-method runs surface the summary directly; multi-method runs
    // carry one summary per method in the JSON body.
    if summaries.len() == 1 {
        report.replicate_summary = Some(summaries[0].clone());
    }
    let summary_json = serde_json::to_value(&summaries)?;
    let summary_path = report_path(config, "replicate_summary.json");
    write_json(&summary_path, &summary_json)?;
    report.artifacts.push(summary_path.display().to_string());

    if config.emit_plot_data {
        let plot_path = report_path(config, "plot_data.csv");
        let mut pw = csv::Writer::from_path(&plot_path)?;
        pw.write_record(["method", "replicate", "log_ml", "mc_se", "wall_time_s"])?;
        for (m, rep, ml, se, wt) in plot_rows {
            pw.write_record(&[
                m,
                rep.to_string(),
                format!("{ml:.6}"),
                format!("{se:.6}"),
                format!("{wt:.3}"),
            ])?;
        }
        pw.flush()?;
        report.artifacts.push(plot_path.display().to_string());
    }

    let path = report_path(config, "replicate_report.json");
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.save(&path)?;
    report.artifacts.push(path.display().to_string());
    Ok(report)
}
