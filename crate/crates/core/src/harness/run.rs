//! Seeded trial simulation and Monte Carlo aggregation.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::output::minimax_rate;
use crate::adaptive::AdaptivePolicy;
use crate::environment::{generate_aux_dataset, Arm, AuxDataset, Environment, RewardSpec};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::transfer::TransferPolicy;

/// Independent random streams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Bump signs.
    Environment = 0,
    /// Logged source data.
    Aux = 1,
    /// Target contexts and rewards.
    Simulation = 2,
    /// Randomness used by the policy itself.
    Policy = 3,
}

/// The generator for one `(seed, trial, stream)` triple. Streams of a
/// ChaCha key are independent, so trials can run in any order.
pub fn trial_rng(seed: u64, trial: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 2) | stream as u64);
    rng
}

/// Cumulative pseudo-regret of one trial at the configured checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub trial: usize,
    pub checkpoints: Vec<u64>,
    pub cum_regret: Vec<f64>,
}

/// Plays the arm with the highest true mean.
#[derive(Clone, Debug)]
pub struct OraclePolicy {
    env: RewardSpec,
    pending: Option<Arm>,
}

impl OraclePolicy {
    pub fn new(env: RewardSpec) -> Self {
        Self { env, pending: None }
    }
}

impl Policy for OraclePolicy {
    fn select(&mut self, x: &[f64], _rng: &mut dyn RngCore) -> Result<Arm> {
        let arm = self.env.oracle_gap(x)?.best_arm;
        self.pending = Some(arm);
        Ok(arm)
    }

    fn observe(&mut self, _x: &[f64], arm: Arm, _reward: f64) -> Result<()> {
        match self.pending.take() {
            Some(a) if a == arm => Ok(()),
            _ => Err(Error::Logic("observe does not match the last select".into())),
        }
    }
}

/// Always plays the same arm.
#[derive(Clone, Copy, Debug)]
pub struct FixedArmPolicy(pub Arm);

impl Policy for FixedArmPolicy {
    fn select(&mut self, _x: &[f64], _rng: &mut dyn RngCore) -> Result<Arm> {
        Ok(self.0)
    }

    fn observe(&mut self, _x: &[f64], _arm: Arm, _reward: f64) -> Result<()> {
        Ok(())
    }
}

/// The environment of a trial: the standard bumps with signs drawn from the
/// trial's environment stream.
pub fn trial_environment(config: &ExperimentConfig, trial: usize) -> Result<RewardSpec> {
    let mut rng = trial_rng(config.seed, trial, Stream::Environment);
    RewardSpec::standard_random(config.beta, config.sigma, &mut rng)
}

/// The logged dataset of a trial.
pub fn trial_aux(config: &ExperimentConfig, env: &RewardSpec, trial: usize) -> Result<AuxDataset> {
    let mut rng = trial_rng(config.seed, trial, Stream::Aux);
    generate_aux_dataset(env, &config.source, &mut rng)
}

/// The configured policy for a trial.
pub fn build_policy(config: &ExperimentConfig, aux: &AuxDataset, rng: &mut dyn RngCore) -> Result<Box<dyn Policy>> {
    Ok(match config.algorithm {
        Algorithm::Transfer | Algorithm::Baseline => Box::new(TransferPolicy::new(config.transfer_params(), aux)?),
        Algorithm::Adaptive => Box::new(AdaptivePolicy::new(
            config.adaptive.clone(),
            config.n_q,
            config.num_arms(),
            config.dim(),
            aux,
            rng,
        )?),
    })
}

/// Simulate one trial with the configured policy.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<RegretTrace> {
    run_trial_with(config, trial, |config, _env, aux, rng| build_policy(config, aux, rng))
}

/// Simulate one trial with a policy built by `make`, which receives the
/// trial's environment, logged data and policy stream.
pub fn run_trial_with<F>(config: &ExperimentConfig, trial: usize, make: F) -> Result<RegretTrace>
where
    F: FnOnce(&ExperimentConfig, &RewardSpec, &AuxDataset, &mut dyn RngCore) -> Result<Box<dyn Policy>>,
{
    let env = trial_environment(config, trial)?;
    let aux = trial_aux(config, &env, trial)?;
    let mut policy_rng = trial_rng(config.seed, trial, Stream::Policy);
    let mut policy = make(config, &env, &aux, &mut policy_rng)?;
    let mut sim = trial_rng(config.seed, trial, Stream::Simulation);

    let mut cum_regret = Vec::with_capacity(config.checkpoints.len());
    let mut next = config.checkpoints.iter().peekable();
    let mut total = 0.0;
    for t in 1..=config.n_q {
        let x = env.sample_context(&mut sim);
        let arm = policy.select(&x, &mut policy_rng)?;
        let reward = env.draw_reward(arm, &x, &mut sim)?;
        policy.observe(&x, arm, reward)?;
        let gap = env.oracle_gap(&x)?;
        total += gap.f_first - env.mean_reward(arm, &x)?;
        if next.peek() == Some(&&t) {
            cum_regret.push(total);
            next.next();
        }
        if next.peek().is_none() {
            break;
        }
    }
    Ok(RegretTrace { trial, checkpoints: config.checkpoints.clone(), cum_regret })
}

/// Mean and spread of the traces at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub t: u64,
    pub mean: f64,
    /// Sample standard deviation across trials, 0 for a single trial.
    pub std: f64,
}

/// Aggregated outcome of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<CheckpointStat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimax_rate_overlay: Option<Vec<f64>>,
    pub wall_clock_seconds: f64,
}

impl Summary {
    /// Statistics at the last checkpoint.
    pub fn last(&self) -> CheckpointStat {
        *self.checkpoints.last().expect("at least one checkpoint")
    }

    /// Standard error of the mean at the last checkpoint.
    pub fn final_standard_error(&self) -> f64 {
        self.last().std / (self.config.trials as f64).sqrt()
    }
}

/// Mean and sample standard deviation at each checkpoint.
pub fn aggregate(checkpoints: &[u64], traces: &[RegretTrace]) -> Vec<CheckpointStat> {
    let n = traces.len() as f64;
    checkpoints
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let values: Vec<f64> = traces.iter().map(|tr| tr.cum_regret[i]).collect();
            let mean = values.iter().sum::<f64>() / n;
            let std = if traces.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            CheckpointStat { t, mean, std }
        })
        .collect()
}

/// Run all trials in parallel and aggregate them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Summary, Vec<RegretTrace>)> {
    config.validate()?;
    let start = Instant::now();
    let traces = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            run_trial(config, trial).map_err(|e| Error::Logic(format!("trial {trial} failed: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let checkpoints = aggregate(&config.checkpoints, &traces);
    let overlay = match config.alpha {
        Some(alpha) => Some(
            config
                .checkpoints
                .iter()
                .map(|&t| {
                    minimax_rate(
                        t,
                        config.source.n_p,
                        config.kappa(),
                        config.beta,
                        alpha,
                        config.source.gamma,
                        config.dim(),
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let summary = Summary {
        config: config.clone(),
        checkpoints,
        minimax_rate_overlay: overlay,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((summary, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::sample_target_context;

    fn config(algorithm: Algorithm, n_q: u64, trials: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(algorithm, n_q).unwrap();
        c.trials = trials;
        c
    }

    #[test]
    fn oracle_has_no_regret() {
        let c = config(Algorithm::Transfer, 2000, 1);
        let tr = run_trial_with(&c, 0, |_, env, _, _| Ok(Box::new(OraclePolicy::new(env.clone())))).unwrap();
        assert!(tr.cum_regret.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn fixed_arm_regret_matches_monte_carlo() {
        let c = config(Algorithm::Transfer, 20_000, 1);
        let tr = run_trial_with(&c, 3, |_, _, _, _| Ok(Box::new(FixedArmPolicy(Arm(1))))).unwrap();
        let env = trial_environment(&c, 3).unwrap();
        // Independent estimate of E[f_(1)(X) - f_1(X)] and its per-step spread.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = 1_000_000;
        let gaps: Vec<f64> = (0..m)
            .map(|_| {
                let x = sample_target_context(&mut rng, 2);
                env.oracle_gap(&x).unwrap().f_first - env.mean_reward(Arm(1), &x).unwrap()
            })
            .collect();
        let mean = gaps.iter().sum::<f64>() / m as f64;
        let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let n = c.n_q as f64;
        let per_step = tr.cum_regret.last().unwrap() / n;
        let se = (var / n + var / m as f64).sqrt();
        assert!((per_step - mean).abs() <= 3.0 * se, "{per_step} vs {mean} (se {se})");
    }

    #[test]
    fn traces_are_deterministic_and_monotone() {
        let c = config(Algorithm::Transfer, 3000, 2);
        let a = run_trial(&c, 1).unwrap();
        let b = run_trial(&c, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.cum_regret.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.cum_regret[0] >= 0.0);
        assert_eq!(a.cum_regret.len(), c.checkpoints.len());
    }

    #[test]
    fn single_trial_summary() {
        let c = config(Algorithm::Baseline, 1000, 1);
        let (s, traces) = run_experiment(&c).unwrap();
        for (stat, &r) in s.checkpoints.iter().zip(&traces[0].cum_regret) {
            assert_eq!(stat.mean, r);
            assert_eq!(stat.std, 0.0);
        }
    }

    #[test]
    fn stream_independence() {
        let mut a = trial_rng(7, 0, Stream::Simulation);
        let mut b = trial_rng(7, 1, Stream::Simulation);
        let mut c = trial_rng(7, 0, Stream::Policy);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert!(x != y && x != z && y != z);
        assert_eq!(trial_rng(7, 0, Stream::Simulation).next_u64(), x);
    }
}
