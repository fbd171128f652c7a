//! Smoothness-agnostic transfer: estimate the Hölder exponent first, then
//! run the partition-tree policy with data-driven confidence widths.
//!
//! The exponent is estimated by comparing local averages at a coarse and a
//! fine dyadic scale over a grid. Under self-similarity the largest gap
//! between the two behaves like the bias of the coarse scale, `2^(-beta l1)`,
//! so `-log(b) / l1` recovers `beta` up to a vanishing correction.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elimination::{AuxIndex, ConfidenceBound};
use crate::environment::{Arm, AuxDataset, AuxSample, Environment};
use crate::error::{domain, logic, Result};
use crate::geometry::{bin_of, check_point, BinId, MAX_LEVEL};
use crate::policy::Policy;
use crate::quadrature::box_mean;
use crate::transfer::PartitionTree;

/// Grid points beyond which the evaluation grid is subsampled.
pub const MAX_GRID_POINTS: usize = 1_000_000;

/// Base of the logarithm applied to the gap statistic `b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
        }
    }
}

impl std::str::FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "natural" | "e" | "ln" => Ok(LogBase::Natural),
            "two" | "2" | "log2" => Ok(LogBase::Two),
            other => Err(format!("unknown log base '{other}' (expected natural or two)")),
        }
    }
}

/// Inputs of the adaptive policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveParams {
    pub beta_lo: f64,
    pub beta_hi: f64,
    /// Upper bound on the Hölder constant.
    pub c_beta_hi: f64,
    /// Upper bound on the transfer exponent.
    pub gamma_hi: f64,
    /// Largest share of the estimation source (target horizon or logged
    /// data) spent on smoothness estimation.
    pub estimation_fraction: f64,
    pub log_base: LogBase,
    /// Depth at which bins stop splitting, as a memory guard.
    pub depth_cap: u32,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            beta_lo: 0.5,
            beta_hi: 1.0,
            c_beta_hi: 2.0,
            gamma_hi: 2.0,
            estimation_fraction: 0.1,
            log_base: LogBase::Natural,
            depth_cap: 20,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_lo > 0.0 && self.beta_lo < self.beta_hi && self.beta_hi <= 1.0) {
            return Err(domain(format!(
                "smoothness bracket [{}, {}] must satisfy 0 < lo < hi <= 1",
                self.beta_lo, self.beta_hi
            )));
        }
        if !(self.c_beta_hi > 0.0) || !self.c_beta_hi.is_finite() {
            return Err(domain("C_beta upper bound must be positive"));
        }
        if !(self.gamma_hi >= 0.0) || !self.gamma_hi.is_finite() {
            return Err(domain("gamma upper bound must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.estimation_fraction) {
            return Err(domain("estimation fraction must lie in [0, 1]"));
        }
        if self.depth_cap > MAX_LEVEL {
            return Err(domain(format!("depth cap above {MAX_LEVEL}")));
        }
        Ok(())
    }
}

/// Scales and sample budget of the estimation stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessLevels {
    /// Coarse scale.
    pub l1: u32,
    /// Fine scale.
    pub l2: u32,
    /// Resolution of the evaluation grid.
    pub l3: u32,
    /// Nominal sample count before any budget cap.
    pub budget: f64,
    /// `max(n_P, n_Q)`.
    pub n: u64,
    /// Whether estimation uses logged source data instead of target pulls.
    pub from_source: bool,
}

/// Outcome of the estimation stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    /// Clamped estimate.
    pub beta_hat: f64,
    /// Estimate before clamping; `+inf` when `b = 0`.
    pub raw_beta: f64,
    /// Largest gap between coarse and fine local averages.
    pub b: f64,
    /// Target rounds spent.
    pub s_q: u64,
    /// Logged samples spent.
    pub s_p: u64,
    pub levels: SmoothnessLevels,
}

fn strict_ceil(v: f64) -> u32 {
    (v.floor() + 1.0).clamp(0.0, MAX_LEVEL as f64) as u32
}

/// Choose scales and the nominal sample budget. Logged data is used when it
/// outnumbers the horizon; the source exponent bound then enters the scales.
pub fn plan(n_q: u64, n_p: u64, dim: usize, ap: &AdaptiveParams) -> SmoothnessLevels {
    let n = n_q.max(n_p).max(1);
    let from_source = n_p > n_q;
    let d = dim as f64;
    let gamma = if from_source { ap.gamma_hi } else { 0.0 };
    let nf = n as f64;
    let ln_n = nf.ln();
    let loglog = if ln_n > 0.0 { ln_n.log2() } else { 0.0 };
    let denom = d + 2.0 * ap.beta_hi + gamma;
    let l1v = ap.beta_lo * nf.log2() / (denom * denom);
    let l1 = strict_ceil(l1v);
    let l2 = strict_ceil(l1 as f64 + loglog / ap.beta_lo);
    let l3 = strict_ceil(ap.beta_hi / ap.beta_lo * l1 as f64 + loglog / ap.beta_lo).max(l2);
    let budget = nf.powf(ap.beta_lo / denom) * ln_n.max(0.0).powf((d + ap.beta_hi + gamma) / ap.beta_lo);
    SmoothnessLevels { l1, l2, l3, budget, n, from_source }
}

/// Samples actually spent: the nominal budget capped by the configured share
/// of what is available.
pub fn estimation_size(levels: &SmoothnessLevels, available: u64, fraction: f64) -> u64 {
    let cap = (fraction * available as f64).floor();
    levels.budget.min(cap).max(0.0) as u64
}

/// Mean of `y` over samples inside `bin` within sup-distance `window` of
/// `center`; 0 when there are none.
pub fn local_average(data: &[(Vec<f64>, f64)], center: &[f64], window: f64, bin: &BinId) -> f64 {
    let (mut n, mut sum) = (0u64, 0.0);
    for (x, y) in data {
        let near = x.iter().zip(center).all(|(a, c)| (a - c).abs() <= window);
        if near && bin.contains(x) {
            n += 1;
            sum += y;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn linear_index(level: u32, x: &[f64]) -> u64 {
    // bin_of validated the point and level already.
    let b = bin_of(level, x).expect("valid point");
    b.index().iter().fold(0u64, |acc, &k| (acc << level) | (k - 1))
}

/// Per-arm bin means at one level.
struct BinMeans {
    level: u32,
    means: Vec<HashMap<u64, f64>>,
}

impl BinMeans {
    fn new(level: u32, samples: &[AuxSample], num_arms: usize) -> Self {
        let mut acc: Vec<HashMap<u64, (u64, f64)>> = vec![HashMap::new(); num_arms];
        for s in samples {
            let e = acc[s.arm.index()].entry(linear_index(level, &s.x)).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += s.reward;
        }
        let means = acc
            .into_iter()
            .map(|m| m.into_iter().map(|(k, (n, sum))| (k, sum / n as f64)).collect())
            .collect();
        Self { level, means }
    }

    /// Local average at `x` with window equal to the bin side: the window
    /// around any point of a bin covers the whole bin, so this is the bin mean.
    fn at(&self, arm: usize, x: &[f64]) -> f64 {
        self.means[arm].get(&linear_index(self.level, x)).copied().unwrap_or(0.0)
    }
}

/// Largest gap `b` between the local averages at scales `l1` and `l2` over
/// the grid of spacing `2^-l3`.
pub fn gap_statistic(
    samples: &[AuxSample],
    num_arms: usize,
    dim: usize,
    l1: u32,
    l2: u32,
    l3: u32,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    for l in [l1, l2, l3] {
        if l as usize * dim >= 64 {
            return Err(domain(format!("level {l} too deep for a {dim}-dimensional grid")));
        }
    }
    let coarse = BinMeans::new(l1, samples, num_arms);
    let fine = BinMeans::new(l2, samples, num_arms);
    let side = (1u64 << l3) + 1;
    let full = (side as f64).powi(dim as i32);
    let step = 1.0 / (1u64 << l3) as f64;
    let mut b = 0.0f64;
    let mut visit = |k: &[u64]| {
        let x: Vec<f64> = k.iter().map(|&ki| ki as f64 * step).collect();
        for arm in 0..num_arms {
            b = b.max((coarse.at(arm, &x) - fine.at(arm, &x)).abs());
        }
    };
    if full > MAX_GRID_POINTS as f64 {
        log::warn!("evaluation grid of {full:.0} points subsampled to {MAX_GRID_POINTS}");
        let mut k = vec![0u64; dim];
        for _ in 0..MAX_GRID_POINTS {
            for ki in k.iter_mut() {
                *ki = rng.random_range(0..side);
            }
            visit(&k);
        }
    } else {
        let mut k = vec![0u64; dim];
        'grid: loop {
            visit(&k);
            for i in (0..dim).rev() {
                k[i] += 1;
                if k[i] < side {
                    continue 'grid;
                }
                k[i] = 0;
            }
            break;
        }
    }
    Ok(b)
}

/// `-log(b) / l1 - log2(ln n) / log2(n)`, before clamping.
pub fn raw_beta(b: f64, l1: u32, n: u64, base: LogBase) -> f64 {
    if b <= 0.0 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let correction = if n > 1 && nf.ln() > 0.0 { nf.ln().log2() / nf.log2() } else { 0.0 };
    -base.log(b) / l1.max(1) as f64 - correction
}

/// Estimate from a given sample set at explicit scales.
pub fn estimate_from_samples(
    samples: &[AuxSample],
    num_arms: usize,
    dim: usize,
    levels: SmoothnessLevels,
    ap: &AdaptiveParams,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64, f64)> {
    let b = gap_statistic(samples, num_arms, dim, levels.l1, levels.l2, levels.l3, rng)?;
    let raw = raw_beta(b, levels.l1, levels.n, ap.log_base);
    Ok((raw.clamp(ap.beta_lo, ap.beta_hi), raw, b))
}

/// Run the estimation stage against an environment: logged data when it
/// outnumbers the horizon, otherwise uniformly random target pulls.
pub fn estimate_smoothness(
    n_q: u64,
    n_p: u64,
    ap: &AdaptiveParams,
    env: &dyn Environment,
    aux: &AuxDataset,
    rng: &mut dyn RngCore,
) -> Result<SmoothnessEstimate> {
    ap.validate()?;
    let levels = plan(n_q, n_p, env.dim(), ap);
    let (samples, s_q, s_p) = if levels.from_source {
        let s = estimation_size(&levels, n_p, ap.estimation_fraction).min(aux.len() as u64);
        (aux.samples[..s as usize].to_vec(), 0, s)
    } else {
        let s = estimation_size(&levels, n_q, ap.estimation_fraction);
        let k = env.num_arms();
        let mut out = Vec::with_capacity(s as usize);
        for _ in 0..s {
            let x = env.sample_context(rng);
            let arm = Arm::from_index(rng.random_range(0..k));
            let reward = env.draw_reward(arm, &x, rng)?;
            out.push(AuxSample { x, arm, reward });
        }
        (out, s, 0)
    };
    let (beta_hat, raw_beta, b) = estimate_from_samples(&samples, env.num_arms(), env.dim(), levels, ap, rng)?;
    Ok(SmoothnessEstimate { beta_hat, raw_beta, b, s_q, s_p, levels })
}

/// Data-driven confidence width `2 sqrt(2 ln n / (tau + n_aux))`, clamped
/// at `2 C_hi |B|^beta_hat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveBound {
    pub beta_hat: f64,
    pub c_beta_hi: f64,
    pub n: u64,
}

impl ConfidenceBound for AdaptiveBound {
    fn bound(&self, tau: u64, n_aux: u64, bin: &BinId) -> f64 {
        let total = tau + n_aux;
        if total == 0 {
            return f64::INFINITY;
        }
        let width = 2.0 * (2.0 * (self.n as f64).ln() / total as f64).sqrt();
        width.max(self.clamp(bin))
    }

    fn clamp(&self, bin: &BinId) -> f64 {
        2.0 * self.c_beta_hi * bin.side().powf(self.beta_hat)
    }
}

pub fn adaptive_confidence_bound(tau: u64, n_aux: u64, bin: &BinId, beta_hat: f64, c_beta_hi: f64, n: u64) -> f64 {
    AdaptiveBound { beta_hat, c_beta_hi, n }.bound(tau, n_aux, bin)
}

pub fn adaptive_pull_limit(n_aux: u64, bin: &BinId, beta_hat: f64, c_beta_hi: f64, n: u64) -> u64 {
    AdaptiveBound { beta_hat, c_beta_hi, n }.limit(n_aux, bin)
}

#[derive(Clone, Debug)]
enum Stage {
    Estimating {
        levels: SmoothnessLevels,
        needed: u64,
        samples: Vec<AuxSample>,
        pending: Option<(Vec<f64>, Arm)>,
        aux: AuxDataset,
    },
    Running {
        tree: Box<PartitionTree<AdaptiveBound>>,
        estimate: SmoothnessEstimate,
    },
}

/// The smoothness-agnostic policy. While estimating from target pulls it
/// plays uniformly random arms; afterwards it runs the partition tree with
/// [`AdaptiveBound`] and the logged samples not spent on estimation.
#[derive(Clone, Debug)]
pub struct AdaptivePolicy {
    params: AdaptiveParams,
    num_arms: usize,
    dim: usize,
    /// Seeds grid subsampling in the estimation stage.
    grid_seed: u64,
    stage: Stage,
}

impl AdaptivePolicy {
    pub fn new(
        params: AdaptiveParams,
        n_q: u64,
        num_arms: usize,
        dim: usize,
        aux: &AuxDataset,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        params.validate()?;
        if num_arms == 0 || dim == 0 || n_q == 0 {
            return Err(domain("adaptive policy needs K >= 1, d >= 1 and n_Q >= 1"));
        }
        aux.validate(dim, num_arms)?;
        let n_p = aux.len() as u64;
        let grid_seed = rng.next_u64();
        let levels = plan(n_q, n_p, dim, &params);
        let stage = if levels.from_source {
            let s_p = estimation_size(&levels, n_p, params.estimation_fraction);
            let mut grid_rng = ChaCha8Rng::seed_from_u64(grid_seed);
            let (beta_hat, raw_beta, b) =
                estimate_from_samples(&aux.samples[..s_p as usize], num_arms, dim, levels, &params, &mut grid_rng)?;
            let estimate = SmoothnessEstimate { beta_hat, raw_beta, b, s_q: 0, s_p, levels };
            Self::running(&params, estimate, num_arms, dim, &aux.tail(s_p as usize))?
        } else {
            let needed = estimation_size(&levels, n_q, params.estimation_fraction);
            Stage::Estimating { levels, needed, samples: Vec::new(), pending: None, aux: aux.clone() }
        };
        let mut policy = Self { params, num_arms, dim, grid_seed, stage };
        policy.finish_estimation_if_ready()?;
        Ok(policy)
    }

    /// Skip estimation and run the tree with a fixed exponent, a given
    /// reference size `n` and depth cap.
    pub fn with_estimate(
        params: AdaptiveParams,
        beta_hat: f64,
        n: u64,
        num_arms: usize,
        dim: usize,
        aux: &AuxDataset,
    ) -> Result<Self> {
        params.validate()?;
        aux.validate(dim, num_arms)?;
        let levels = SmoothnessLevels { l1: 0, l2: 0, l3: 0, budget: 0.0, n, from_source: false };
        let estimate = SmoothnessEstimate { beta_hat, raw_beta: beta_hat, b: f64::NAN, s_q: 0, s_p: 0, levels };
        let stage = Self::running(&params, estimate, num_arms, dim, aux)?;
        Ok(Self { params, num_arms, dim, grid_seed: 0, stage })
    }

    fn running(
        params: &AdaptiveParams,
        estimate: SmoothnessEstimate,
        num_arms: usize,
        dim: usize,
        rest: &AuxDataset,
    ) -> Result<Stage> {
        let bound = AdaptiveBound { beta_hat: estimate.beta_hat, c_beta_hi: params.c_beta_hi, n: estimate.levels.n };
        let tree = PartitionTree::new(bound, AuxIndex::new(rest), num_arms, dim, params.depth_cap)?;
        Ok(Stage::Running { tree: Box::new(tree), estimate })
    }

    fn finish_estimation_if_ready(&mut self) -> Result<()> {
        let Stage::Estimating { levels, needed, samples, aux, .. } = &self.stage else {
            return Ok(());
        };
        if (samples.len() as u64) < *needed {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.grid_seed);
        let (beta_hat, raw_beta, b) =
            estimate_from_samples(samples, self.num_arms, self.dim, *levels, &self.params, &mut rng)?;
        let estimate = SmoothnessEstimate { beta_hat, raw_beta, b, s_q: *needed, s_p: 0, levels: *levels };
        self.stage = Self::running(&self.params, estimate, self.num_arms, self.dim, aux)?;
        Ok(())
    }

    pub fn params(&self) -> &AdaptiveParams {
        &self.params
    }

    /// The estimate, once the estimation stage is over.
    pub fn estimate(&self) -> Option<&SmoothnessEstimate> {
        match &self.stage {
            Stage::Running { estimate, .. } => Some(estimate),
            Stage::Estimating { .. } => None,
        }
    }

    pub fn tree(&self) -> Option<&PartitionTree<AdaptiveBound>> {
        match &self.stage {
            Stage::Running { tree, .. } => Some(tree),
            Stage::Estimating { .. } => None,
        }
    }
}

impl Policy for AdaptivePolicy {
    fn select(&mut self, x: &[f64], rng: &mut dyn RngCore) -> Result<Arm> {
        match &mut self.stage {
            Stage::Estimating { pending, .. } => {
                if x.len() != self.dim {
                    return Err(domain(format!("expected a {}-dimensional context", self.dim)));
                }
                check_point(x)?;
                let arm = Arm::from_index(rng.random_range(0..self.num_arms));
                *pending = Some((x.to_vec(), arm));
                Ok(arm)
            }
            Stage::Running { tree, .. } => tree.select(x),
        }
    }

    fn observe(&mut self, x: &[f64], arm: Arm, reward: f64) -> Result<()> {
        match &mut self.stage {
            Stage::Estimating { pending, samples, .. } => {
                match pending.take() {
                    Some((px, parm)) if parm == arm && px == x => {
                        samples.push(AuxSample { x: px, arm, reward });
                    }
                    other => {
                        *pending = other;
                        return Err(logic("observe does not match the last select"));
                    }
                }
                self.finish_estimation_if_ready()
            }
            Stage::Running { tree, .. } => tree.observe(x, arm, reward),
        }
    }
}

/// Mean of `f` over `bin` restricted to the sup-norm window of radius
/// `window` around `x`: the best constant approximation of `f` there in
/// `L2` under the uniform measure.
pub fn piecewise_constant_projection(f: &dyn Fn(&[f64]) -> f64, bin: &BinId, window: f64, x: &[f64]) -> Result<f64> {
    if !(window > 0.0) {
        return Err(domain("window must be positive"));
    }
    if x.len() != bin.dim() {
        return Err(domain("point and bin dimensions differ"));
    }
    let bb = bin.bin_box();
    let lower: Vec<f64> = bb.lower.iter().zip(x).map(|(&l, &c)| l.max(c - window)).collect();
    let upper: Vec<f64> = bb.upper.iter().zip(x).map(|(&u, &c)| u.min(c + window)).collect();
    if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
        return Err(domain("window does not overlap the bin"));
    }
    box_mean(f, &lower, &upper, 1e-11)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::RewardSpec;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn power_samples(n: usize, beta: f64, seed: u64) -> Vec<AuxSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        (0..n)
            .map(|_| {
                let x: f64 = rng.random();
                AuxSample { x: vec![x], arm: Arm(1), reward: x.powf(beta) + noise.sample(&mut rng) }
            })
            .collect()
    }

    #[test]
    fn local_average_cases() {
        let bin = BinId::root(1);
        assert_eq!(local_average(&[], &[0.5], 0.1, &bin), 0.0);
        let same: Vec<_> = (0..10).map(|i| (vec![0.45 + 0.01 * i as f64], 0.7)).collect();
        assert!((local_average(&same, &[0.5], 0.1, &bin) - 0.7).abs() < 1e-15);
        let mixed: Vec<_> = (0..10).map(|i| (vec![0.5], (i % 2) as f64)).collect();
        assert_eq!(local_average(&mixed, &[0.5], 0.1, &bin), 0.5);
        // Outside the window or the bin.
        let far = vec![(vec![0.9], 1.0)];
        assert_eq!(local_average(&far, &[0.5], 0.1, &bin), 0.0);
        let half = BinId::new(1, vec![1]).unwrap();
        assert_eq!(local_average(&[(vec![0.55], 1.0)], &[0.5], 0.1, &half), 0.0);
    }

    #[test]
    fn grid_fast_path_matches_local_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<AuxSample> = (0..2000)
            .map(|_| {
                let x = vec![rng.random::<f64>(), rng.random::<f64>()];
                AuxSample { reward: x[0] * x[1], x, arm: Arm(rng.random_range(1..=2)) }
            })
            .collect();
        let (l1, l2) = (1, 3);
        let b = gap_statistic(&samples, 2, 2, l1, l2, 3, &mut rng).unwrap();
        let mut expected = 0.0f64;
        for i in 0..=8 {
            for j in 0..=8 {
                let x = [i as f64 / 8.0, j as f64 / 8.0];
                for arm in [Arm(1), Arm(2)] {
                    let data: Vec<(Vec<f64>, f64)> =
                        samples.iter().filter(|s| s.arm == arm).map(|s| (s.x.clone(), s.reward)).collect();
                    let f1 = local_average(&data, &x, 0.5, &bin_of(l1, &x).unwrap());
                    let f2 = local_average(&data, &x, 0.125, &bin_of(l2, &x).unwrap());
                    expected = expected.max((f1 - f2).abs());
                }
            }
        }
        assert!((b - expected).abs() < 1e-12);
    }

    #[test]
    fn recovers_power_exponent() {
        let samples = power_samples(1_000_000, 0.8, 2);
        let ap = AdaptiveParams::default();
        let levels = SmoothnessLevels { l1: 2, l2: 6, l3: 6, budget: 1e6, n: 1_000_000, from_source: true };
        let (beta_hat, _, _) = estimate_from_samples(&samples, 1, 1, levels, &ap, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((beta_hat - 0.8).abs() <= 0.15, "{beta_hat}");
    }

    #[test]
    fn raw_estimate_is_clamped() {
        let ap = AdaptiveParams { beta_lo: 0.6, beta_hi: 0.9, ..Default::default() };
        let levels = SmoothnessLevels { l1: 1, l2: 4, l3: 4, budget: 0.0, n: 1000, from_source: true };
        // A jump inside the coarse bin: the gap is large, the raw estimate small.
        let samples: Vec<AuxSample> = (0..1000)
            .map(|i| {
                let x = (i as f64 + 0.5) / 1000.0;
                AuxSample { x: vec![x], arm: Arm(1), reward: if x > 0.3 { 5.0 } else { 0.0 } }
            })
            .collect();
        let (hat, raw, _) = estimate_from_samples(&samples, 1, 1, levels, &ap, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(raw < 0.6);
        assert_eq!(hat, 0.6);
        let (hat, raw, b) = estimate_from_samples(&[], 1, 1, levels, &ap, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!((hat, raw, b), (0.9, f64::INFINITY, 0.0));
    }

    #[test]
    fn adaptive_bound_examples() {
        let bin = BinId::new(2, vec![1, 1]).unwrap();
        assert_eq!(adaptive_confidence_bound(0, 0, &bin, 0.8, 1.0, 10_000), f64::INFINITY);
        let u = adaptive_confidence_bound(0, 128, &bin, 0.8, 1.0, 10_000);
        assert!((u - 0.7588).abs() < 1e-4, "{u}");
        let far = adaptive_confidence_bound(u64::MAX / 2, 0, &bin, 0.8, 1.0, 10_000);
        assert_eq!(far, 2.0 * 0.25f64.powf(0.8));
    }

    #[test]
    fn adaptive_limit_closed_form() {
        let bin = BinId::new(2, vec![1, 1]).unwrap();
        let n = 10_000u64;
        let threshold = 2.0 * (n as f64).ln() / (0.25f64.powf(0.8)).powi(2);
        assert_eq!(adaptive_pull_limit(0, &bin, 0.8, 1.0, n), threshold.ceil() as u64);
        assert_eq!(adaptive_pull_limit(threshold.ceil() as u64, &bin, 0.8, 1.0, n), 0);
    }

    #[test]
    fn plan_branches() {
        let ap = AdaptiveParams::default();
        let src = plan(20_000, 60_000, 2, &ap);
        assert!(src.from_source);
        assert_eq!(src.n, 60_000);
        assert!(src.l1 >= 1 && src.l2 > src.l1 && src.l3 >= src.l2);
        let tgt = plan(20_000, 0, 2, &ap);
        assert!(!tgt.from_source);
        assert_eq!(tgt.n, 20_000);
    }

    #[test]
    fn source_branch_spends_logged_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = RewardSpec::standard_random(0.8, 0.05, &mut rng).unwrap();
        let src = crate::environment::SourceSpec { gamma: 1.0, mu: vec![0.5, 0.5], n_p: 6000 };
        let aux = crate::environment::generate_aux_dataset(&env, &src, &mut rng).unwrap();
        let ap = AdaptiveParams::default();
        let est = estimate_smoothness(2000, 6000, &ap, &env, &aux, &mut rng).unwrap();
        assert_eq!(est.s_q, 0);
        assert_eq!(est.s_p, 600);
        assert!((ap.beta_lo..=ap.beta_hi).contains(&est.beta_hat));

        let pol = AdaptivePolicy::new(ap.clone(), 2000, 2, 2, &aux, &mut rng).unwrap();
        assert_eq!(pol.estimate().unwrap().s_p, 600);
        // The tree only sees the remaining samples.
        let total: u64 = pol.tree().unwrap().leaves().map(|(_, s)| s.aggregates.iter().map(|a| a.n_aux).sum::<u64>()).sum();
        assert_eq!(total, 5400);
    }

    #[test]
    fn target_branch_pulls_uniformly_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let env = RewardSpec::standard_random(0.8, 0.05, &mut rng).unwrap();
        let ap = AdaptiveParams::default();
        let mut pol = AdaptivePolicy::new(ap, 5000, 2, 2, &AuxDataset::default(), &mut rng).unwrap();
        let mut counts = [0usize; 2];
        for _ in 0..500 {
            assert!(pol.estimate().is_none());
            let x = env.sample_context(&mut rng);
            let a = pol.select(&x, &mut rng).unwrap();
            counts[a.index()] += 1;
            pol.observe(&x, a, env.draw_reward(a, &x, &mut rng).unwrap()).unwrap();
        }
        assert_eq!(pol.estimate().unwrap().s_q, 500);
        assert!(counts[0] > 200 && counts[1] > 200);
    }

    #[test]
    fn projection_of_constant() {
        let bin = BinId::new(2, vec![2, 3]).unwrap();
        let p = piecewise_constant_projection(&|_| 0.42, &bin, 0.25, &bin.center()).unwrap();
        assert!((p - 0.42).abs() < 1e-12);
    }

    #[test]
    fn projection_of_power_at_origin() {
        for l in 1..=8u32 {
            let bin = BinId::new(l, vec![1]).unwrap();
            let h = bin.side();
            let (a, beta, c) = (1.0, 0.5, 0.3);
            let f = |x: &[f64]| a * x[0].powf(beta) + c;
            let proj = piecewise_constant_projection(&f, &bin, h, &[0.0]).unwrap();
            assert!(((proj - c) - a * h.powf(beta) / (beta + 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_of_polynomial() {
        let bin = BinId::new(1, vec![2, 1]).unwrap();
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        // Window [0.55, 0.95] x [0.05, 0.45].
        let p = piecewise_constant_projection(&f, &bin, 0.2, &[0.75, 0.25]).unwrap();
        let mean_x2 = (0.95f64.powi(3) - 0.55f64.powi(3)) / 3.0 / 0.4;
        let expected = mean_x2 + 3.0 * 0.25;
        assert!((p - expected).abs() < 1e-6);
        let w = piecewise_constant_projection(&f, &bin, 0.1, &[0.75, 0.25]).unwrap();
        let mean_x2 = (0.85f64.powi(3) - 0.65f64.powi(3)) / 3.0 / 0.2;
        assert!((w - (mean_x2 + 0.75)).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn adaptive_limit_matches_scan(
            n_aux in 0u64..300,
            level in 0u32..5,
            beta_hat in 0.3f64..=1.0,
            c in 0.3f64..3.0,
            n in 2u64..1_000_000,
        ) {
            let bin = BinId::new(level, vec![1, 1]).unwrap();
            let bound = AdaptiveBound { beta_hat, c_beta_hi: c, n };
            let scan = (0..).find(|&t| bound.bound(t, n_aux, &bin) <= bound.clamp(&bin)).unwrap();
            prop_assert_eq!(bound.limit(n_aux, &bin), scan);
        }
    }
}
