//! Command-line harness: configuration, experiment orchestration and
//! persisted reports over the library layers.

mod commands;
mod config;
mod report;

pub use commands::{
    build_model, calibrate_budget, cmd_compare, cmd_evidence, cmd_fit, cmd_replicate,
    cmd_simulate, run_method, BuiltModel,
};
pub use config::{
    CovariateSpec, DesignSpec, EpiThetaSpec, MethodSpec, ModelSpec, ResolvedMethod, RunConfig,
    SimulateSpec, METHOD_KINDS,
};
pub use report::{summarize_chain, BfReport, MethodReport, ParamSummary, ReplicateSummary, RunReport};
