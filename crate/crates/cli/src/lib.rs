//! Command-line front end: flags and an optional JSON config file are merged
//! into an experiment, which is run and written out as CSV or JSON.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Parser;
use tlcb_core::harness::{emit_results, run_experiment, write_summary_json, write_traces_csv};
use tlcb_core::{Algorithm, ExperimentConfig, LogBase};
use tlcb_core::harness::{ConfigOverrides, OutputFormat};

/// Monte Carlo regret studies for transfer learning in contextual bandits.
///
/// Values from --config are overridden by flags given on the command line.
#[derive(Debug, Parser)]
#[command(name = "tlcb", version)]
pub struct Cli {
    /// Policy to evaluate.
    #[arg(long, value_parser = parse_algo)]
    pub algo: Option<Algorithm>,

    /// Horizon: number of target rounds (required, here or in the config file).
    #[arg(long = "n-q")]
    pub n_q: Option<u64>,

    /// Number of logged source samples [default: 0; forced to 0 for baseline].
    #[arg(long = "n-p")]
    pub n_p: Option<u64>,

    /// Hölder exponent of the rewards, in (0, 1] [default: 0.8].
    #[arg(long)]
    pub beta: Option<f64>,

    /// Hölder constant given to the policy [default: 2^beta].
    #[arg(long = "c-beta")]
    pub c_beta: Option<f64>,

    /// Transfer exponent of the source covariates [default: 1].
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Transfer constant, in (0, 1] [default: 1].
    #[arg(long = "c-gamma")]
    pub c_gamma: Option<f64>,

    /// Lower bound on the target covariate density [default: 1].
    #[arg(long = "q-lo")]
    pub q_lo: Option<f64>,

    /// Exploration coefficient of the logging policy, in [0, 1].
    #[arg(long, conflicts_with = "mu")]
    pub kappa: Option<f64>,

    /// Arm probabilities of the logging policy, comma separated [default: 0.5,0.5].
    #[arg(long, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,

    /// Reward noise standard deviation [default: 0.05].
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Margin exponent; enables the minimax-rate overlay in the summary.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Lower smoothness bound for the adaptive policy [default: 0.5].
    #[arg(long = "beta-lo")]
    pub beta_lo: Option<f64>,

    /// Upper smoothness bound for the adaptive policy [default: 1].
    #[arg(long = "beta-hi")]
    pub beta_hi: Option<f64>,

    /// Upper bound on the transfer exponent for the adaptive policy [default: 2].
    #[arg(long = "gamma-hi")]
    pub gamma_hi: Option<f64>,

    /// Upper bound on the Hölder constant for the adaptive policy [default: 2^beta_hi].
    #[arg(long = "c-beta-hi")]
    pub c_beta_hi: Option<f64>,

    /// Largest share of the horizon or logged data spent estimating smoothness [default: 0.1].
    #[arg(long = "estimation-fraction")]
    pub estimation_fraction: Option<f64>,

    /// Logarithm applied to the smoothness gap statistic [default: natural].
    #[arg(long = "log-base", value_parser = parse_log_base)]
    pub log_base: Option<LogBase>,

    /// Depth at which the adaptive tree stops splitting [default: 20].
    #[arg(long = "depth-cap")]
    pub depth_cap: Option<u32>,

    /// Monte Carlo trials [default: 50].
    #[arg(long)]
    pub trials: Option<usize>,

    /// Base seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Rounds at which regret is recorded, comma separated [default: 50 log-spaced in 1..=n_q].
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<u64>>,

    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Output format [default: csv].
    #[arg(long, value_parser = parse_format)]
    pub format: Option<OutputFormat>,

    /// JSON object of settings keyed by flag name with underscores.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: tlcb_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: tlcb_core::Error| e.to_string())
}

fn parse_log_base(s: &str) -> Result<LogBase, String> {
    s.parse()
}

impl Cli {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            algo: self.algo,
            n_q: self.n_q,
            n_p: self.n_p,
            beta: self.beta,
            c_beta: self.c_beta,
            gamma: self.gamma,
            c_gamma: self.c_gamma,
            q_lo: self.q_lo,
            kappa: self.kappa,
            mu: self.mu.clone(),
            sigma: self.sigma,
            alpha: self.alpha,
            beta_lo: self.beta_lo,
            beta_hi: self.beta_hi,
            gamma_hi: self.gamma_hi,
            c_beta_hi: self.c_beta_hi,
            estimation_fraction: self.estimation_fraction,
            log_base: self.log_base,
            depth_cap: self.depth_cap,
            trials: self.trials,
            seed: self.seed,
            checkpoints: self.checkpoints.clone(),
            out: self.out.clone(),
            format: self.format,
        }
    }
}

/// Merge the config file (if any) under the flags and validate.
pub fn parse_config(cli: &Cli) -> Result<ExperimentConfig> {
    let base = match &cli.config {
        Some(path) => ConfigOverrides::from_json_file(path)
            .with_context(|| format!("reading config file {}", path.display()))?,
        None => ConfigOverrides::default(),
    };
    Ok(base.merge(cli.overrides()).resolve()?)
}

/// Run the experiment described by `cli` and write its results.
pub fn run(cli: &Cli) -> Result<()> {
    let config = parse_config(cli)?;
    log::info!(
        "running {} trials of {} with n_Q = {}, n_P = {}",
        config.trials,
        config.algorithm,
        config.n_q,
        config.source.n_p
    );
    let (summary, traces) = run_experiment(&config)?;
    match &config.out {
        Some(path) => {
            let written = emit_results(&summary, &traces, config.format, path)?;
            for p in written {
                log::info!("wrote {}", p.display());
            }
        }
        None => {
            let stdout = std::io::stdout().lock();
            match config.format {
                OutputFormat::Csv => write_traces_csv(stdout, config.algorithm, &traces)?,
                OutputFormat::Json => write_summary_json(stdout, &summary)?,
            }
        }
    }
    let last = summary.last();
    if !last.mean.is_finite() {
        bail!("non-finite regret at t = {}", last.t);
    }
    log::info!("final mean regret {:.3} (sd {:.3}) at t = {}", last.mean, last.std, last.t);
    Ok(())
}
