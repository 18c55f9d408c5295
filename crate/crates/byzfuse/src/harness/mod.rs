//! Experiment orchestration: configs, runners, persistence, plot data.
//!
//! The harness turns a TOML [`ExperimentConfig`] into a [`ResultRecord`]
//! — payoff matrix, equilibrium, side-series — and writes the record as
//! CSV and JSON artifacts. Determinism is end to end: every Monte-Carlo
//! trial is sub-seeded from the master seed, so the same config produces
//! byte-identical CSVs whatever the worker count.
//!
//! ```
//! use byzfuse::harness::{run_experiment, ExperimentConfig};
//!
//! let dir = tempfile::tempdir().unwrap();
//! let toml = format!(r#"
//!     name = "demo"
//!     trials = 200
//!     master_seed = 11
//!     out_dir = {dir:?}
//!     scenario = "optimal_game"
//!
//!     [params]
//!     n = 7
//!     m = 2
//!     epsilon = 0.1
//!     byz_prior = {{ kind = "fixed_count", n_b = 2 }}
//!     attacker_grid = [0.5, 1.0]
//!     defender_grid = [0.5, 1.0]
//! "#, dir = dir.path());
//! let config = ExperimentConfig::from_toml(&toml, "demo").unwrap();
//! let record = run_experiment(&config).unwrap();
//! assert_eq!(record.payoff.unwrap().shape(), (2, 2));
//! assert!(dir.path().join("demo.payoff.csv").exists());
//! ```
//!
//! A library of bundled configs reproduces the published tables; list
//! them with [`bundled_configs`] or load one with [`bundled_config`].

mod config;
mod runner;

pub use config::{
    mean_byzantine_fraction, Baseline, ComparisonParams, ConsensusGameParams, DefenceParams,
    ExperimentConfig, IsolationGameParams, MpBenchmarkParams, OptimalGameParams, RuleParams,
    ScenarioSpec, SingleRunParams, SweepParams, DEFAULT_MASTER_SEED, DEFAULT_OUT_DIR,
};
pub use runner::{
    compute_record, emit_plot_data, run_experiment, write_artifacts, write_plot_data, PlotKind,
    ResultRecord, SeriesTable,
};

use crate::error::{Error, Result};

/// One bundled reproduction config: a name and its TOML source.
#[derive(Debug, Clone, Copy)]
pub struct BundledConfig {
    /// Name, equal to the config's `name` field.
    pub name: &'static str,
    /// The TOML document.
    pub text: &'static str,
}

macro_rules! bundled {
    ($name:literal) => {
        BundledConfig {
            name: $name,
            text: include_str!(concat!("../../configs/", $name, ".toml")),
        }
    };
}

/// All bundled reproduction configs, in presentation order.
pub const BUNDLED_CONFIGS: &[BundledConfig] = &[
    bundled!("table_indip03m4"),
    bundled!("table_fixed6m4"),
    bundled!("table_fixed8m4"),
    bundled!("isolation_game_hard"),
    bundled!("isolation_game_soft"),
    bundled!("comparison_m4"),
    bundled!("mp_benchmark"),
    bundled!("mp_vs_majority_m30"),
    bundled!("dual_behavior"),
    bundled!("consensus_game"),
    bundled!("consensus_delta_sweep"),
    bundled!("single_run_majority"),
];

/// The bundled configs, parsed and materialized.
pub fn bundled_configs() -> Result<Vec<ExperimentConfig>> {
    BUNDLED_CONFIGS
        .iter()
        .map(|b| ExperimentConfig::from_toml(b.text, b.name))
        .collect()
}

/// Load one bundled config by name.
pub fn bundled_config(name: &str) -> Result<ExperimentConfig> {
    let bundle = BUNDLED_CONFIGS
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| {
            let known: Vec<&str> = BUNDLED_CONFIGS.iter().map(|b| b.name).collect();
            Error::Config {
                path: name.to_string(),
                msg: format!("no bundled config by that name; bundled: {}", known.join(", ")),
            }
        })?;
    ExperimentConfig::from_toml(bundle.text, bundle.name)
}

#[cfg(test)]
mod tests;
