//! Monte Carlo regret studies.
//!
//! A trial draws the bump signs, the logged source data, and `n_Q` target
//! rounds from independent random streams keyed by `(seed, trial)`, and
//! records the cumulative pseudo-regret `sum_t f_(1)(X_t) - f_{pi_t}(X_t)`
//! at fixed checkpoints. Trials run in parallel; results do not depend on
//! scheduling.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Algorithm, ConfigOverrides, ExperimentConfig, OutputFormat};
pub use output::{emit_results, format_decimal, minimax_rate, summary_path, write_summary_json, write_traces_csv};
pub use run::{
    aggregate, run_experiment, run_trial, run_trial_with, trial_rng, CheckpointStat, FixedArmPolicy, OraclePolicy,
    RegretTrace, Stream, Summary,
};
