//! Experiment orchestration: config parsing, environment registry, seeded
//! runs and their CSV/JSONL outputs.

mod config;
mod run;

pub use config::{
    parse_config, AblationParams, AlgoName, AlgoSpec, EnvSpec, EvalSpec, ExperimentConfig, ExploitMode,
    RoutingParams, RunDescriptor, RunSpec, SweepSpec, ENV_NAMES,
};
pub use run::{
    build_env, check, estimate, exploitability_of_checkpoint, load_actors, oracle_flows, oracle_value_iteration,
    run_experiment, GridOracle, PotentialSummary, RunSummary,
};
