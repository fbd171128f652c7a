//! Static-bandit machinery inside a single bin.
//!
//! Each bin runs successive elimination on rewards pooled from the logged
//! source data and live target pulls. The confidence width shrinks with the
//! pooled count until it meets the bias floor `2 C_beta |B|^beta`; the number
//! of live pulls needed to get there is the arm's pull limit.

use num_traits::float::FloatCore;
use serde::{Deserialize, Serialize};

use crate::environment::{Arm, AuxDataset, AuxSample};
use crate::error::{domain, logic, Result};
use crate::geometry::{morton_key, morton_range, BinId, MAX_LEVEL};

/// `max(ln x, 1)`.
pub fn log_plus(x: f64) -> f64 {
    if x > std::f64::consts::E {
        x.ln()
    } else {
        1.0
    }
}

/// Known smoothness, transfer and sample-size parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub beta: f64,
    pub c_beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub n_q: u64,
    pub n_p: u64,
    pub dim: usize,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(domain(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(self.c_beta > 0.0) || !self.c_beta.is_finite() {
            return Err(domain(format!("C_beta = {} must be positive", self.c_beta)));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(domain(format!("gamma = {} must be >= 0", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(domain(format!("kappa = {} outside [0, 1]", self.kappa)));
        }
        if self.n_q == 0 {
            return Err(domain("horizon n_Q must be at least 1"));
        }
        if self.dim == 0 {
            return Err(domain("dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Pooled statistics of one arm in one bin.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmAggregate {
    /// Logged source samples of this arm in the bin.
    pub n_aux: u64,
    /// Live target pulls of this arm in the bin.
    pub tau: u64,
    /// Mean over all `n_aux + tau` rewards.
    pub mean: f64,
    /// Mean over the logged rewards alone.
    pub aux_mean: f64,
}

impl ArmAggregate {
    pub fn from_aux(n_aux: u64, aux_mean: f64) -> Self {
        Self { n_aux, tau: 0, mean: aux_mean, aux_mean }
    }

    pub fn total(&self) -> u64 {
        self.n_aux + self.tau
    }

    /// Fold one live reward into the pooled mean.
    pub fn fold(&mut self, reward: f64) {
        self.tau += 1;
        self.mean += (reward - self.mean) / self.total() as f64;
    }
}

/// A confidence-width model: a width for every pull count, never below a
/// bias clamp, non-increasing in `tau` for `tau >= 1`.
pub trait ConfidenceBound: Send + Sync {
    /// Width after `tau` live pulls on top of `n_aux` logged samples.
    fn bound(&self, tau: u64, n_aux: u64, bin: &BinId) -> f64;

    /// The bias term the width is clamped at.
    fn clamp(&self, bin: &BinId) -> f64;

    /// Least `tau` with `bound(tau) <= clamp`.
    fn limit(&self, n_aux: u64, bin: &BinId) -> u64 {
        least_tau(|tau| self.bound(tau, n_aux, bin) <= self.clamp(bin))
    }
}

/// Smallest `tau >= 0` with `ok(tau)`, where `ok` is monotone on `tau >= 1`
/// and eventually true.
pub(crate) fn least_tau(ok: impl Fn(u64) -> bool) -> u64 {
    if ok(0) {
        return 0;
    }
    if ok(1) {
        return 1;
    }
    // ok(lo) is false, ok(hi) is true.
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !ok(hi) {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi == u64::MAX && !ok(hi) {
            return u64::MAX;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Confidence width with known parameters.
///
/// Without live pulls the width is driven by the logged count alone and its
/// log term balances the target and source scales of the bin; afterwards it
/// uses the pooled count with the target-only log term.
pub fn confidence_bound(tau: u64, agg: &ArmAggregate, bin: &BinId, p: &BoundParams) -> f64 {
    raw_bound(tau, agg.n_aux, bin, p)
}

fn raw_bound(tau: u64, n_aux: u64, bin: &BinId, p: &BoundParams) -> f64 {
    let side = bin.side();
    let d = p.dim as f64;
    let clamp = 2.0 * p.c_beta * side.powf(p.beta);
    let width = if tau == 0 {
        if n_aux == 0 {
            return f64::INFINITY;
        }
        let target = p.n_q as f64 * side.powf(d + 2.0 * p.beta);
        let source = p.kappa * p.n_p as f64 * side.powf(d + 2.0 * p.beta + p.gamma);
        2.0 * (2.0 / n_aux as f64 * log_plus(target.max(source))).sqrt()
    } else {
        let arg = p.n_q as f64 * side.powf(d) / tau as f64;
        2.0 * (2.0 / (tau + n_aux) as f64 * log_plus(arg)).sqrt()
    };
    width.max(clamp)
}

/// Least number of live pulls after which the width meets the bias clamp.
pub fn pull_limit(agg: &ArmAggregate, bin: &BinId, p: &BoundParams) -> u64 {
    p.limit(agg.n_aux, bin)
}

impl ConfidenceBound for BoundParams {
    fn bound(&self, tau: u64, n_aux: u64, bin: &BinId) -> f64 {
        raw_bound(tau, n_aux, bin, self)
    }

    fn clamp(&self, bin: &BinId) -> f64 {
        2.0 * self.c_beta * bin.side().powf(self.beta)
    }
}

/// Scale constant for the source branch of the depth rule: the root of
/// `x log+(1/x) = c_3 / (2 c_2 K)` with `c_2 = max(2 / C_beta^2, 1)` and
/// `c_3 = c_gamma q_lo`.
pub fn c_star(c_beta: f64, c_gamma: f64, q_lo: f64, num_arms: usize) -> Result<f64> {
    if !(c_beta > 0.0 && c_gamma > 0.0 && q_lo > 0.0) || num_arms == 0 {
        return Err(domain("c_star needs positive C_beta, c_gamma, q_lo and K"));
    }
    let c2 = (2.0 / (c_beta * c_beta)).max(1.0);
    let target = c_gamma * q_lo / (2.0 * c2 * num_arms as f64);
    let knee = (-1.0f64).exp();
    if target >= knee {
        return Ok(target);
    }
    // x ln(1/x) is increasing on (0, 1/e].
    let g = |x: f64| x * (1.0 / x).ln();
    let (mut lo, mut hi) = (0.0f64, knee);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if (g(lo) - target).abs() <= (g(hi) - target).abs() && lo > 0.0 { lo } else { hi })
}

/// `x log+(1/x)`, the function inverted by [`c_star`].
pub fn c_star_objective(x: f64) -> f64 {
    x * log_plus(1.0 / x)
}

/// A finite double as an exact dyadic rational `num * 2^exp`.
#[derive(Clone, Copy, Debug)]
struct Dyadic {
    num: i128,
    exp: i32,
}

impl Dyadic {
    fn of(v: f64) -> Option<Self> {
        if !v.is_finite() {
            return None;
        }
        let (mantissa, exp, sign) = FloatCore::integer_decode(v);
        Some(Self { num: sign as i128 * mantissa as i128, exp: exp as i32 })
    }

    fn align(self, other: Self) -> Option<(i128, i128, i32)> {
        let exp = self.exp.min(other.exp);
        let a = shl(self.num, (self.exp - exp) as u32)?;
        let b = shl(other.num, (other.exp - exp) as u32)?;
        Some((a, b, exp))
    }

    fn add(self, other: Self) -> Option<Self> {
        let (a, b, exp) = self.align(other)?;
        Some(Self { num: a.checked_add(b)?, exp })
    }

    fn scale(self, k: i128) -> Option<Self> {
        Some(Self { num: self.num.checked_mul(k)?, exp: self.exp })
    }

    /// `self <= other`, exactly.
    fn le(self, other: Self) -> Option<bool> {
        let (a, b, _) = self.align(other)?;
        Some(a <= b)
    }
}

fn shl(v: i128, by: u32) -> Option<i128> {
    if v == 0 {
        return Some(0);
    }
    if by >= 127 {
        return None;
    }
    let r = v.checked_mul(1i128 << by)?;
    Some(r)
}

/// Smallest integer strictly greater than `log2(arg) / denom`, for
/// `arg >= 1`. Exact when `arg` is a power of two and `denom` is a sum of
/// doubles that fits the exact representation.
fn strict_ceil_log2_ratio(arg: f64, denom_terms: &[f64]) -> i64 {
    let denom: f64 = denom_terms.iter().sum();
    let approx = (arg.log2() / denom).floor() as i64;
    let (mantissa, exp, _) = FloatCore::integer_decode(arg);
    if !mantissa.is_power_of_two() {
        return approx + 1;
    }
    let e = exp as i64 + mantissa.trailing_zeros() as i64;
    let exact_denom = denom_terms
        .iter()
        .try_fold(Dyadic { num: 0, exp: 0 }, |acc, &t| acc.add(Dyadic::of(t)?));
    let Some(exact_denom) = exact_denom else {
        return approx + 1;
    };
    let e_dy = Dyadic { num: e as i128, exp: 0 };
    // floor(e / D) is the largest m with m D <= e.
    let fits = |m: i64| exact_denom.scale(m as i128).and_then(|v| v.le(e_dy));
    let mut m = approx;
    loop {
        match (fits(m), fits(m + 1)) {
            (Some(true), Some(false)) => return m + 1,
            (Some(false), _) => m -= 1,
            (Some(true), Some(true)) => m += 1,
            _ => return approx + 1,
        }
    }
}

/// Maximum depth of the partition tree: the smallest integer strictly
/// greater than
/// `max(log2(n_Q) / (d + 2 beta), log2(c* kappa n_P) / (d + 2 beta + gamma))`,
/// the source term dropped when `c* kappa n_P < 1`.
pub fn max_depth(
    n_q: u64,
    n_p: u64,
    kappa: f64,
    gamma: f64,
    beta: f64,
    dim: usize,
    c_star: f64,
) -> Result<u32> {
    if n_q == 0 {
        return Err(domain("horizon n_Q must be at least 1"));
    }
    let source = c_star * kappa * n_p as f64;
    max_depth_from(n_q as f64, source, gamma, beta, dim)
}

/// [`max_depth`] with the source scale `c* kappa n_P` given directly.
pub fn max_depth_from(n_q: f64, source: f64, gamma: f64, beta: f64, dim: usize) -> Result<u32> {
    if !(n_q >= 1.0) {
        return Err(domain("horizon n_Q must be at least 1"));
    }
    let d = dim as f64;
    let mut depth = strict_ceil_log2_ratio(n_q, &[d, beta, beta]);
    if source >= 1.0 {
        depth = depth.max(strict_ceil_log2_ratio(source, &[d, beta, beta, gamma]));
    }
    let depth = u32::try_from(depth).map_err(|_| domain("depth out of range"))?;
    Ok(depth.min(MAX_LEVEL))
}

/// Per-arm `(count, mean)` of logged samples inside a bin.
pub trait AuxStats: Send + Sync {
    fn arm_stats(&self, bin: &BinId, num_arms: usize) -> Vec<(u64, f64)>;

    /// Number of samples behind the statistics.
    fn total(&self) -> usize;
}

fn accumulate<'a>(samples: impl Iterator<Item = &'a AuxSample>, num_arms: usize) -> Vec<(u64, f64)> {
    let mut acc = vec![(0u64, 0.0f64); num_arms];
    for s in samples {
        if let Some(slot) = acc.get_mut(s.arm.index()) {
            slot.0 += 1;
            slot.1 += s.reward;
        }
    }
    acc.into_iter()
        .map(|(n, sum)| (n, if n == 0 { 0.0 } else { sum / n as f64 }))
        .collect()
}

impl AuxStats for AuxDataset {
    fn arm_stats(&self, bin: &BinId, num_arms: usize) -> Vec<(u64, f64)> {
        accumulate(self.samples.iter().filter(|s| bin.contains(&s.x)), num_arms)
    }

    fn total(&self) -> usize {
        self.len()
    }
}

/// Count and mean of arm `arm`'s logged rewards inside `bin`; the mean of
/// an empty set is 0.
pub fn aux_bin_stats(data: &AuxDataset, bin: &BinId, arm: Arm) -> (u64, f64) {
    if arm.0 == 0 {
        return (0, 0.0);
    }
    accumulate(
        data.samples.iter().filter(|s| s.arm == arm && bin.contains(&s.x)),
        arm.0.max(1),
    )[arm.index()]
}

/// Logged samples sorted along a Morton curve, so the samples of any
/// dyadic bin form one contiguous run.
#[derive(Clone, Debug, Default)]
pub struct AuxIndex {
    key_level: u32,
    keys: Vec<u128>,
    samples: Vec<AuxSample>,
}

impl AuxIndex {
    pub fn new(data: &AuxDataset) -> Self {
        let dim = data.samples.first().map_or(1, |s| s.x.len());
        let key_level = MAX_LEVEL.min((128 / dim.max(1)) as u32);
        let mut keyed: Vec<(u128, AuxSample)> = data
            .samples
            .iter()
            .map(|s| (morton_key(key_level, &s.x), s.clone()))
            .collect();
        // Stable, so ties keep collection order.
        keyed.sort_by_key(|(k, _)| *k);
        let (keys, samples) = keyed.into_iter().unzip();
        Self { key_level, keys, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples inside `bin`.
    pub fn query(&self, bin: &BinId) -> Vec<&AuxSample> {
        if self.samples.is_empty() {
            return Vec::new();
        }
        let coarse = if bin.level() <= self.key_level {
            bin.clone()
        } else {
            let mut b = bin.clone();
            while b.level() > self.key_level {
                b = b.parent().expect("level above zero");
            }
            b
        };
        let (lo, hi) = morton_range(&coarse, self.key_level);
        let start = self.keys.partition_point(|&k| k < lo);
        let end = self.keys.partition_point(|&k| k < hi);
        let run = &self.samples[start..end];
        if bin.level() <= self.key_level {
            run.iter().collect()
        } else {
            run.iter().filter(|s| bin.contains(&s.x)).collect()
        }
    }
}

impl AuxStats for AuxIndex {
    fn arm_stats(&self, bin: &BinId, num_arms: usize) -> Vec<(u64, f64)> {
        accumulate(self.query(bin).into_iter(), num_arms)
    }

    fn total(&self) -> usize {
        self.len()
    }
}

/// Whether a bin is still eliminating arms or exploiting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Exploration,
    Greedy,
}

/// Successive-elimination state of one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct BinBanditState {
    pub bin: BinId,
    /// Surviving arms, in increasing order.
    pub active: Vec<Arm>,
    /// Indexed by [`Arm::index`] over all arms.
    pub aggregates: Vec<ArmAggregate>,
    pub limits: Vec<u64>,
    /// `max_k (mean_k - U_k)` over the active arms.
    pub floor: f64,
    pub cursor: usize,
    pub phase: Phase,
}

impl BinBanditState {
    /// Seed a bin from logged statistics for the given arms.
    pub fn init<B, S>(bin: BinId, arms: &[Arm], num_arms: usize, data: &S, bound: &B) -> Result<Self>
    where
        B: ConfidenceBound + ?Sized,
        S: AuxStats + ?Sized,
    {
        if arms.is_empty() {
            return Err(domain("a bin needs at least one arm"));
        }
        let mut active = arms.to_vec();
        active.sort();
        active.dedup();
        if active.iter().any(|a| a.0 == 0 || a.0 > num_arms) {
            return Err(domain(format!("arms must lie in [1, {num_arms}]")));
        }
        let stats = if data.total() == 0 { vec![(0, 0.0); num_arms] } else { data.arm_stats(&bin, num_arms) };
        let aggregates: Vec<ArmAggregate> = stats.iter().map(|&(n, m)| ArmAggregate::from_aux(n, m)).collect();
        let limits = aggregates.iter().map(|a| bound.limit(a.n_aux, &bin)).collect();
        let mut state = Self {
            bin,
            active,
            aggregates,
            limits,
            floor: f64::NEG_INFINITY,
            cursor: 0,
            phase: Phase::Exploration,
        };
        state.refresh(bound);
        Ok(state)
    }

    pub fn width<B: ConfidenceBound + ?Sized>(&self, arm: Arm, bound: &B) -> f64 {
        let agg = &self.aggregates[arm.index()];
        bound.bound(agg.tau, agg.n_aux, &self.bin)
    }

    /// True when every active arm has used up its live-pull budget.
    pub fn all_at_limit(&self) -> bool {
        self.active.iter().all(|a| self.aggregates[a.index()].tau >= self.limits[a.index()])
    }

    fn refresh<B: ConfidenceBound + ?Sized>(&mut self, bound: &B) {
        self.floor = self
            .active
            .iter()
            .map(|&a| self.aggregates[a.index()].mean - self.width(a, bound))
            .fold(f64::NEG_INFINITY, f64::max);
        self.phase = if self.all_at_limit() { Phase::Greedy } else { Phase::Exploration };
    }

    /// Highest pooled mean among active arms, lowest index on ties.
    pub fn greedy_arm(&self) -> Arm {
        let mut best = self.active[0];
        for &a in &self.active[1..] {
            if self.aggregates[a.index()].mean > self.aggregates[best.index()].mean {
                best = a;
            }
        }
        best
    }

    /// Next arm to pull. Arms below their limit are visited round-robin and
    /// eliminated on the way if their upper bound falls below the floor.
    pub fn select<B: ConfidenceBound + ?Sized>(&mut self, bound: &B) -> Arm {
        let k = self.aggregates.len();
        for step in 0..k {
            let pos = (self.cursor + step) % k;
            let arm = Arm::from_index(pos);
            let Ok(slot) = self.active.binary_search(&arm) else {
                continue;
            };
            let agg = self.aggregates[pos];
            if agg.tau >= self.limits[pos] {
                continue;
            }
            if agg.mean + self.width(arm, bound) < self.floor && self.active.len() > 1 {
                self.active.remove(slot);
                continue;
            }
            self.cursor = pos + 1;
            self.phase = Phase::Exploration;
            return arm;
        }
        self.phase = Phase::Greedy;
        self.greedy_arm()
    }

    /// Record a live reward for `arm`.
    pub fn observe<B: ConfidenceBound + ?Sized>(&mut self, bound: &B, arm: Arm, reward: f64) -> Result<()> {
        if self.active.binary_search(&arm).is_err() {
            return Err(logic(format!("arm {arm} is not active in bin {}", self.bin)));
        }
        self.aggregates[arm.index()].fold(reward);
        self.refresh(bound);
        Ok(())
    }

    /// Keep arms whose logged upper bound reaches the best logged lower
    /// bound. Used before splitting a bin whose arms all have zero limits.
    pub fn prune_with_aux<B: ConfidenceBound + ?Sized>(&mut self, bound: &B) {
        let width = |a: Arm| bound.bound(0, self.aggregates[a.index()].n_aux, &self.bin);
        let best_lower = self
            .active
            .iter()
            .map(|&a| self.aggregates[a.index()].aux_mean - width(a))
            .fold(f64::NEG_INFINITY, f64::max);
        let kept: Vec<Arm> = self
            .active
            .iter()
            .copied()
            .filter(|&a| self.aggregates[a.index()].aux_mean + width(a) >= best_lower)
            .collect();
        if !kept.is_empty() {
            self.active = kept;
        }
    }
}

/// Seed a bin for all of `arms` from the raw dataset.
pub fn elim_init(bin: BinId, arms: &[Arm], data: &AuxDataset, p: &BoundParams) -> Result<BinBanditState> {
    let num_arms = arms.iter().map(|a| a.0).max().unwrap_or(0);
    BinBanditState::init(bin, arms, num_arms, data, p)
}

pub fn elim_select(state: &mut BinBanditState, p: &BoundParams) -> Arm {
    state.select(p)
}

pub fn elim_observe(state: &mut BinBanditState, p: &BoundParams, arm: Arm, reward: f64) -> Result<()> {
    state.observe(p, arm, reward)
}
