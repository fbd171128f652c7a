//! Experiment configuration: a layered set of optional overrides resolved
//! into a validated [`ExperimentConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptiveParams, LogBase};
use crate::elimination::BoundParams;
use crate::environment::{exploration_coefficient, SourceSpec};
use crate::error::{Error, Result};
use crate::transfer::TransferParams;

/// Dimension of the standard environment.
pub const DIM: usize = 2;
/// Arms of the standard environment.
pub const NUM_ARMS: usize = 2;

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Transfer,
    Adaptive,
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Transfer => "transfer",
            Algorithm::Adaptive => "adaptive",
            Algorithm::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transfer" => Ok(Algorithm::Transfer),
            "adaptive" => Ok(Algorithm::Adaptive),
            "baseline" => Ok(Algorithm::Baseline),
            other => Err(config_err(format!("unknown algorithm '{other}' (expected transfer, adaptive or baseline)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(config_err(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

/// Every setting as an optional value. Config files deserialize into this
/// type, command-line flags produce another, and [`ConfigOverrides::merge`]
/// layers them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub algo: Option<Algorithm>,
    pub n_q: Option<u64>,
    pub n_p: Option<u64>,
    pub beta: Option<f64>,
    pub c_beta: Option<f64>,
    pub gamma: Option<f64>,
    pub c_gamma: Option<f64>,
    pub q_lo: Option<f64>,
    pub kappa: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    pub beta_lo: Option<f64>,
    pub beta_hi: Option<f64>,
    pub gamma_hi: Option<f64>,
    pub c_beta_hi: Option<f64>,
    pub estimation_fraction: Option<f64>,
    pub log_base: Option<LogBase>,
    pub depth_cap: Option<u32>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoints: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

macro_rules! layer {
    ($lo:ident, $hi:ident, $($field:ident),*) => {
        ConfigOverrides { $($field: $hi.$field.or($lo.$field)),* }
    };
}

impl ConfigOverrides {
    /// Read a JSON object whose keys are the long flag names with dashes
    /// replaced by underscores.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    /// Values set in `higher` win over values in `self`.
    pub fn merge(self, higher: ConfigOverrides) -> ConfigOverrides {
        let lower = self;
        // kappa and mu describe the same thing; a layer setting one hides
        // the other from lower layers.
        let (lower_kappa, lower_mu) = if higher.kappa.is_some() || higher.mu.is_some() {
            (None, None)
        } else {
            (lower.kappa, lower.mu.clone())
        };
        let lower = ConfigOverrides { kappa: lower_kappa, mu: lower_mu, ..lower };
        layer!(
            lower, higher, algo, n_q, n_p, beta, c_beta, gamma, c_gamma, q_lo, kappa, mu, sigma, alpha, beta_lo,
            beta_hi, gamma_hi, c_beta_hi, estimation_fraction, log_base, depth_cap, trials, seed, checkpoints, out,
            format
        )
    }

    /// Fill defaults and validate.
    pub fn resolve(self) -> Result<ExperimentConfig> {
        let algorithm = self.algo.unwrap_or(Algorithm::Transfer);
        let n_q = self.n_q.ok_or_else(|| config_err("the horizon n_q is required"))?;
        if n_q == 0 {
            return Err(config_err("n_q must be at least 1"));
        }
        let beta = self.beta.unwrap_or(0.8);
        let mu = match (self.kappa, self.mu) {
            (Some(_), Some(_)) => return Err(config_err("give either kappa or mu, not both")),
            (Some(kappa), None) => {
                if !(0.0..=1.0).contains(&kappa) {
                    return Err(config_err(format!("kappa = {kappa} outside [0, 1]")));
                }
                // The least-pulled arm gets kappa / K, the rest share the remainder.
                let lo = kappa / NUM_ARMS as f64;
                let mut mu = vec![(1.0 - lo) / (NUM_ARMS - 1) as f64; NUM_ARMS];
                mu[0] = lo;
                mu
            }
            (None, Some(mu)) => mu,
            (None, None) => vec![1.0 / NUM_ARMS as f64; NUM_ARMS],
        };
        let n_p = if algorithm == Algorithm::Baseline { 0 } else { self.n_p.unwrap_or(0) };
        let beta_hi = self.beta_hi.unwrap_or(1.0);
        let checkpoints = match self.checkpoints {
            Some(mut c) => {
                c.sort_unstable();
                c.dedup();
                c
            }
            None => default_checkpoints(n_q),
        };
        let config = ExperimentConfig {
            algorithm,
            n_q,
            beta,
            c_beta: self.c_beta.unwrap_or_else(|| 2f64.powf(beta)),
            sigma: self.sigma.unwrap_or(0.05),
            source: SourceSpec { gamma: self.gamma.unwrap_or(1.0), mu, n_p },
            c_gamma: self.c_gamma.unwrap_or(1.0),
            q_lo: self.q_lo.unwrap_or(1.0),
            alpha: self.alpha,
            adaptive: AdaptiveParams {
                beta_lo: self.beta_lo.unwrap_or(0.5),
                beta_hi,
                c_beta_hi: self.c_beta_hi.unwrap_or_else(|| 2f64.powf(beta_hi)),
                gamma_hi: self.gamma_hi.unwrap_or(2.0),
                estimation_fraction: self.estimation_fraction.unwrap_or(AdaptiveParams::default().estimation_fraction),
                log_base: self.log_base.unwrap_or_default(),
                depth_cap: self.depth_cap.unwrap_or(20),
            },
            trials: self.trials.unwrap_or(50),
            seed: self.seed.unwrap_or(0),
            checkpoints,
            out: self.out,
            format: self.format.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }
}

/// `count` log-spaced integers in `[1, n]`, deduplicated, ending at `n`.
pub fn log_spaced_checkpoints(n: u64, count: usize) -> Vec<u64> {
    if n <= 1 || count <= 1 {
        return vec![n.max(1)];
    }
    let count = count.min(n as usize);
    let top = (n as f64).ln();
    let mut out = Vec::with_capacity(count);
    let mut prev = 0u64;
    for i in 0..count {
        // Distinct points: push rounding collisions at the low end upward,
        // leaving room for the remaining ones below n.
        let geo = (top * i as f64 / (count - 1) as f64).exp().round() as u64;
        let room = n - (count - 1 - i) as u64;
        prev = geo.max(prev + 1).min(room);
        out.push(prev);
    }
    out
}

pub fn default_checkpoints(n_q: u64) -> Vec<u64> {
    log_spaced_checkpoints(n_q, 50)
}

/// A fully specified regret study on the standard two-arm environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub n_q: u64,
    /// Hölder exponent of the reward bumps, also the policy's smoothness input.
    pub beta: f64,
    pub c_beta: f64,
    pub sigma: f64,
    pub source: SourceSpec,
    pub c_gamma: f64,
    pub q_lo: f64,
    /// Margin exponent, used only for the minimax-rate overlay.
    pub alpha: Option<f64>,
    pub adaptive: AdaptiveParams,
    pub trials: usize,
    pub seed: u64,
    pub checkpoints: Vec<u64>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    /// Defaults with the given horizon.
    pub fn new(algorithm: Algorithm, n_q: u64) -> Result<Self> {
        ConfigOverrides { algo: Some(algorithm), n_q: Some(n_q), ..Default::default() }.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| config_err(e.to_string());
        if self.trials == 0 {
            return Err(config_err("trials must be at least 1"));
        }
        if self.checkpoints.is_empty() {
            return Err(config_err("at least one checkpoint is required"));
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("checkpoints must be strictly increasing"));
        }
        if self.checkpoints[0] == 0 || *self.checkpoints.last().unwrap() > self.n_q {
            return Err(config_err(format!("checkpoints must lie in [1, {}]", self.n_q)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(config_err(format!("sigma = {} must be finite and >= 0", self.sigma)));
        }
        if self.source.mu.len() != NUM_ARMS {
            return Err(config_err(format!("mu needs {NUM_ARMS} entries")));
        }
        if let Some(alpha) = self.alpha {
            if !(alpha >= 0.0) {
                return Err(config_err("alpha must be >= 0"));
            }
        }
        self.source.validate().map_err(wrap)?;
        if self.algorithm == Algorithm::Adaptive {
            self.adaptive.validate().map_err(wrap)?;
        } else {
            self.transfer_params().validate().map_err(wrap)?;
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        exploration_coefficient(&self.source.mu)
    }

    pub fn dim(&self) -> usize {
        DIM
    }

    pub fn num_arms(&self) -> usize {
        NUM_ARMS
    }

    pub fn bound_params(&self) -> BoundParams {
        BoundParams {
            beta: self.beta,
            c_beta: self.c_beta,
            gamma: self.source.gamma,
            kappa: self.kappa(),
            n_q: self.n_q,
            n_p: self.source.n_p,
            dim: DIM,
        }
    }

    pub fn transfer_params(&self) -> TransferParams {
        TransferParams { bounds: self.bound_params(), c_gamma: self.c_gamma, q_lo: self.q_lo, num_arms: NUM_ARMS }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_horizon_is_an_error() {
        assert!(matches!(ConfigOverrides::default().resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn baseline_forces_no_source_data() {
        let c = ConfigOverrides { algo: Some(Algorithm::Baseline), n_q: Some(100), n_p: Some(500), ..Default::default() }
            .resolve()
            .unwrap();
        assert_eq!(c.source.n_p, 0);
    }

    #[test]
    fn higher_layer_wins() {
        let file = ConfigOverrides { n_q: Some(1000), beta: Some(0.6), ..Default::default() };
        let flags = ConfigOverrides { n_q: Some(2000), ..Default::default() };
        let c = file.merge(flags).resolve().unwrap();
        assert_eq!(c.n_q, 2000);
        assert_eq!(c.beta, 0.6);
    }

    #[test]
    fn kappa_and_mu() {
        let c = ConfigOverrides { n_q: Some(10), kappa: Some(0.2), ..Default::default() }.resolve().unwrap();
        assert!((c.kappa() - 0.2).abs() < 1e-15);
        assert!(ConfigOverrides { n_q: Some(10), kappa: Some(0.2), mu: Some(vec![0.5, 0.5]), ..Default::default() }
            .resolve()
            .is_err());
        let file = ConfigOverrides { n_q: Some(10), kappa: Some(0.2), ..Default::default() };
        let flags = ConfigOverrides { mu: Some(vec![0.3, 0.7]), ..Default::default() };
        assert!((file.merge(flags).resolve().unwrap().kappa() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_values() {
        let base = ConfigOverrides { n_q: Some(100), ..Default::default() };
        for bad in [
            ConfigOverrides { beta: Some(1.5), ..base.clone() },
            ConfigOverrides { trials: Some(0), ..base.clone() },
            ConfigOverrides { checkpoints: Some(vec![0, 5]), ..base.clone() },
            ConfigOverrides { checkpoints: Some(vec![500]), ..base.clone() },
            ConfigOverrides { mu: Some(vec![0.5, 0.6]), ..base.clone() },
            ConfigOverrides { gamma: Some(-1.0), ..base.clone() },
            ConfigOverrides { algo: Some(Algorithm::Adaptive), beta_lo: Some(0.9), beta_hi: Some(0.5), ..base.clone() },
        ] {
            assert!(matches!(bad.resolve(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn default_checkpoints_are_log_spaced() {
        let c = default_checkpoints(20_000);
        assert_eq!(c.len(), 50);
        assert_eq!((c[0], *c.last().unwrap()), (1, 20_000));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(default_checkpoints(1), vec![1]);
        let small = default_checkpoints(10);
        assert_eq!(*small.last().unwrap(), 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ConfigOverrides>(r#"{"n_q": 5, "bogus": 1}"#).is_err());
        let o: ConfigOverrides = serde_json::from_str(r#"{"n_q": 5, "algo": "adaptive", "log_base": "two"}"#).unwrap();
        assert_eq!(o.algo, Some(Algorithm::Adaptive));
        assert_eq!(o.log_base, Some(LogBase::Two));
    }
}
