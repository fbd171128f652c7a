//! Synthetic covariate-shift bandit environments.
//!
//! The standard environment lives on `[0,1]^2` with two arms: arm 1 pays
//! `1/2` everywhere and arm 2 pays `1/2 + 1/2 sum_i w_i phi(4 |x - c_i|_inf)`
//! with four disjoint bumps centred at `(1/2 +- 1/4, 1/2 +- 1/4)` and random
//! signs `w_i`. Target covariates are uniform; source covariates have density
//! proportional to `|x - (1/2, 1/2)|_inf^gamma`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::check_point;

/// An arm label, numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arm(pub usize);

impl Arm {
    pub fn from_index(i: usize) -> Self {
        Arm(i + 1)
    }

    /// Zero-based position, for indexing per-arm vectors.
    pub fn index(self) -> usize {
        self.0 - 1
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Top two mean rewards at a context and the best arm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleGap {
    pub f_first: f64,
    pub f_second: f64,
    pub best_arm: Arm,
}

impl OracleGap {
    pub fn gap(&self) -> f64 {
        self.f_first - self.f_second
    }
}

/// A contextual bandit the harness can simulate.
pub trait Environment: Send + Sync {
    fn dim(&self) -> usize;

    fn num_arms(&self) -> usize;

    fn arms(&self) -> Vec<Arm> {
        (0..self.num_arms()).map(Arm::from_index).collect()
    }

    /// Draw a target context `X ~ Q_X`.
    fn sample_context(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Mean reward `f_k(x)`.
    fn mean_reward(&self, arm: Arm, x: &[f64]) -> Result<f64>;

    /// Noisy reward with mean [`Environment::mean_reward`].
    fn draw_reward(&self, arm: Arm, x: &[f64], rng: &mut dyn RngCore) -> Result<f64>;

    /// `f_(1)(x)`, `f_(2)(x)` and the lowest-numbered maximiser.
    fn oracle_gap(&self, x: &[f64]) -> Result<OracleGap> {
        let means = self
            .arms()
            .into_iter()
            .map(|a| self.mean_reward(a, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(gap_from_means(&means))
    }
}

pub(crate) fn gap_from_means(means: &[f64]) -> OracleGap {
    let (best, f_first) = means
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let f_second = means
        .iter()
        .copied()
        .filter(|&v| v < f_first)
        .fold(f64::NEG_INFINITY, f64::max);
    OracleGap {
        f_first,
        f_second: if f_second.is_finite() { f_second } else { f_first },
        best_arm: Arm::from_index(best),
    }
}

/// `phi_beta(u) = (1 - u)^beta` on `[0, 1]`, zero beyond.
pub fn phi(beta: f64, u: f64) -> f64 {
    if u <= 1.0 {
        (1.0 - u).powf(beta)
    } else {
        0.0
    }
}

/// Bump-function reward model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub dim: usize,
    pub num_arms: usize,
    /// Hölder exponent of the bumps, in `(0, 1]`.
    pub beta: f64,
    /// Standard deviation of the Gaussian reward noise.
    pub sigma: f64,
    pub centers: Vec<Vec<f64>>,
    pub signs: Vec<f64>,
    /// Bump radius is `1 / scale` in the sup norm.
    pub scale: f64,
}

impl RewardSpec {
    pub const STANDARD_CENTERS: [[f64; 2]; 4] = [[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]];

    /// The four-bump, two-arm construction with fixed signs.
    pub fn standard(beta: f64, sigma: f64, signs: [f64; 4]) -> Result<Self> {
        let spec = Self {
            dim: 2,
            num_arms: 2,
            beta,
            sigma,
            centers: Self::STANDARD_CENTERS.iter().map(|c| c.to_vec()).collect(),
            signs: signs.to_vec(),
            scale: 4.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The standard construction with i.i.d. Rademacher signs.
    pub fn standard_random(beta: f64, sigma: f64, rng: &mut dyn RngCore) -> Result<Self> {
        let mut signs = [0.0; 4];
        for s in &mut signs {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        Self::standard(beta, sigma, signs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_arms != 2 {
            return Err(domain("the bump construction has exactly two arms"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(domain(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(domain(format!("sigma = {} must be finite and non-negative", self.sigma)));
        }
        if self.centers.len() != self.signs.len() {
            return Err(domain("one sign per bump center is required"));
        }
        if self.signs.iter().any(|w| w.abs() > 1.0) {
            return Err(domain("bump weights must satisfy |w| <= 1"));
        }
        if self.centers.iter().any(|c| c.len() != self.dim) {
            return Err(domain("bump center dimension mismatch"));
        }
        let radius = 1.0 / self.scale;
        for (i, a) in self.centers.iter().enumerate() {
            for b in &self.centers[i + 1..] {
                if sup_dist(a, b) < 2.0 * radius {
                    return Err(domain("bump supports overlap"));
                }
            }
        }
        Ok(())
    }

    /// Hölder constant of every `f_k` in the sup norm.
    ///
    /// Inside one bump the constant is `scale^beta / 2`. Two bumps of opposite
    /// sign meeting at a shared face give `(scale / 2)^beta`, which is the
    /// larger of the two whenever `beta <= 1`.
    pub fn holder_constant(&self) -> f64 {
        let within = 0.5 * self.scale.powf(self.beta);
        let across = (0.5 * self.scale).powf(self.beta);
        within.max(across)
    }

    pub fn eval(&self, arm: Arm, x: &[f64]) -> Result<f64> {
        if arm.0 == 0 || arm.0 > self.num_arms {
            return Err(domain(format!("arm {} outside [1, {}]", arm.0, self.num_arms)));
        }
        if x.len() != self.dim {
            return Err(domain(format!("expected a {}-dimensional point", self.dim)));
        }
        if arm.0 == 1 {
            return Ok(0.5);
        }
        let bumps: f64 = self
            .centers
            .iter()
            .zip(&self.signs)
            .map(|(c, w)| w * phi(self.beta, self.scale * sup_dist(x, c)))
            .sum();
        Ok(0.5 + 0.5 * bumps)
    }
}

pub(crate) fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Exact evaluation of `f_k(x)` for the bump model.
pub fn eval_reward(spec: &RewardSpec, arm: Arm, x: &[f64]) -> Result<f64> {
    spec.eval(arm, x)
}

impl Environment for RewardSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_arms(&self) -> usize {
        self.num_arms
    }

    fn sample_context(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        sample_target_context(rng, self.dim)
    }

    fn mean_reward(&self, arm: Arm, x: &[f64]) -> Result<f64> {
        self.eval(arm, x)
    }

    fn draw_reward(&self, arm: Arm, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        draw_reward(self, arm, x, rng)
    }
}

/// Gaussian reward `N(f_k(x), sigma^2)`, unclipped.
pub fn draw_reward(spec: &RewardSpec, arm: Arm, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
    let mean = spec.eval(arm, x)?;
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + spec.sigma * z)
}

/// Uniform draw on `[0,1]^dim`.
pub fn sample_target_context(rng: &mut dyn RngCore, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Draw from the density proportional to `|x - (1/2,...,1/2)|_inf^gamma`.
///
/// The sup-norm radius `r` has CDF `(2r)^(gamma + dim)` on `[0, 1/2]` and is
/// sampled by inversion; the point is then uniform on the surface of the
/// cube of radius `r`, which has `2 dim` faces of equal area.
pub fn sample_source_context(rng: &mut dyn RngCore, gamma: f64, dim: usize) -> Result<Vec<f64>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(domain(format!("transfer exponent gamma = {gamma} must be finite and >= 0")));
    }
    if dim == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    let u: f64 = rng.random();
    let r = 0.5 * u.powf(1.0 / (gamma + dim as f64));
    let face = rng.random_range(0..2 * dim);
    let (axis, sign) = (face / 2, if face % 2 == 0 { -1.0 } else { 1.0 });
    let x = (0..dim)
        .map(|i| {
            let offset = if i == axis { sign * r } else { r * (2.0 * rng.random::<f64>() - 1.0) };
            (0.5 + offset).clamp(0.0, 1.0)
        })
        .collect();
    Ok(x)
}

/// Parameters of the source bandit that produced the logged data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub gamma: f64,
    /// State-independent arm-pull probabilities of the logging policy.
    pub mu: Vec<f64>,
    pub n_p: u64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(domain(format!("gamma = {} must be finite and >= 0", self.gamma)));
        }
        if self.mu.is_empty() || self.mu.iter().any(|&p| !(p >= 0.0)) {
            return Err(domain("mu must be a non-empty vector of non-negative probabilities"));
        }
        let total: f64 = self.mu.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(domain(format!("mu sums to {total}, not 1")));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        exploration_coefficient(&self.mu)
    }
}

/// Structural constants of a problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub alpha: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub c_gamma: f64,
    pub kappa: f64,
}

impl ProblemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(domain("margin exponent alpha must be >= 0"));
        }
        if !(self.c_beta > 0.0) || !(self.c_alpha > 0.0) {
            return Err(domain("C_alpha and C_beta must be positive"));
        }
        if !(self.q_lo > 0.0 && self.q_lo <= self.q_hi) {
            return Err(domain("density bounds must satisfy 0 < q_lo <= q_hi"));
        }
        if !(self.c_gamma > 0.0 && self.c_gamma <= 1.0) {
            return Err(domain("c_gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(domain("kappa must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `kappa = K min_k mu(k)` for a state-independent logging policy.
pub fn exploration_coefficient(mu: &[f64]) -> f64 {
    mu.len() as f64 * mu.iter().copied().fold(f64::INFINITY, f64::min)
}

/// One logged source-bandit record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxSample {
    pub x: Vec<f64>,
    pub arm: Arm,
    pub reward: f64,
}

/// Logged source data, in collection order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxDataset {
    pub samples: Vec<AuxSample>,
}

impl AuxDataset {
    pub fn new(samples: Vec<AuxSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The records after the first `skip`.
    pub fn tail(&self, skip: usize) -> AuxDataset {
        AuxDataset { samples: self.samples[skip.min(self.len())..].to_vec() }
    }

    pub fn validate(&self, dim: usize, num_arms: usize) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(domain(format!("aux sample {i} has dimension {}", s.x.len())));
            }
            check_point(&s.x)?;
            if s.arm.0 == 0 || s.arm.0 > num_arms {
                return Err(domain(format!("aux sample {i} pulls arm {} of {num_arms}", s.arm)));
            }
        }
        Ok(())
    }
}

/// `n_p` i.i.d. records: `x ~ P_X`, arm `~ mu`, reward from `env`.
pub fn generate_aux_dataset(
    env: &dyn Environment,
    src: &SourceSpec,
    rng: &mut dyn RngCore,
) -> Result<AuxDataset> {
    src.validate()?;
    if src.mu.len() != env.num_arms() {
        return Err(domain("mu must have one entry per arm"));
    }
    if src.n_p == 0 {
        return Ok(AuxDataset::default());
    }
    let arm_law = WeightedIndex::new(&src.mu).map_err(|e| domain(format!("invalid mu: {e}")))?;
    let mut samples = Vec::with_capacity(src.n_p as usize);
    for _ in 0..src.n_p {
        let x = sample_source_context(rng, src.gamma, env.dim())?;
        let arm = Arm::from_index(arm_law.sample(rng));
        let reward = env.draw_reward(arm, &x, rng)?;
        samples.push(AuxSample { x, arm, reward });
    }
    Ok(AuxDataset { samples })
}
