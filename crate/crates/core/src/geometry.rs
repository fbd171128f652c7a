//! Dyadic partition of the covariate cube `[0,1]^d`.
//!
//! A bin at level `l` is the closed box `prod_i [(k_i - 1) 2^-l, k_i 2^-l]`
//! with 1-based indices `k_i in [1, 2^l]`. Neighbouring closed bins share
//! faces; a point on a shared face is assigned to the bin whose center is
//! closest to the origin, which is the lower bin along every tied axis. In
//! coordinates this is `k_i = max(1, ceil(x_i 2^l))`, i.e. half-open boxes
//! `(lo, hi]` with the lower face of the cube closed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Deepest level supported; side lengths `2^-l` stay exact in `f64`.
pub const MAX_LEVEL: u32 = 52;

/// `2^-level`, exact for `level <= 1022`.
#[inline]
pub(crate) fn dyadic(level: u32) -> f64 {
    debug_assert!(level <= 1022);
    f64::from_bits((1023 - u64::from(level)) << 52)
}

fn check_level(level: u32, dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    if level > MAX_LEVEL {
        return Err(domain(format!("level {level} exceeds the maximum {MAX_LEVEL}")));
    }
    if u64::from(level) * dim as u64 >= 64 {
        return Err(domain(format!(
            "level {level} in dimension {dim} overflows a 64-bit bin index space"
        )));
    }
    Ok(())
}

/// Checks that every coordinate of `x` lies in `[0, 1]`.
pub fn check_point(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(domain("point has no coordinates"));
    }
    match x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(domain(format!("coordinate {i} = {} lies outside [0, 1]", x[i]))),
        None => Ok(()),
    }
}

/// One node of the dyadic partition tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinId {
    level: u32,
    index: Vec<u64>,
}

/// Axis-aligned box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BinBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }
}

impl BinId {
    /// The whole cube `[0,1]^dim`.
    pub fn root(dim: usize) -> Self {
        Self { level: 0, index: vec![1; dim] }
    }

    pub fn new(level: u32, index: Vec<u64>) -> Result<Self> {
        check_level(level, index.len())?;
        let n = 1u64 << level;
        if let Some(k) = index.iter().find(|&&k| k == 0 || k > n) {
            return Err(domain(format!("index {k} outside [1, {n}] at level {level}")));
        }
        Ok(Self { level, index })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &[u64] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// Side length `|B| = 2^-level`.
    pub fn side(&self) -> f64 {
        dyadic(self.level)
    }

    pub fn bin_box(&self) -> BinBox {
        let h = self.side();
        BinBox {
            lower: self.index.iter().map(|&k| (k - 1) as f64 * h).collect(),
            upper: self.index.iter().map(|&k| k as f64 * h).collect(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        let h = self.side();
        self.index.iter().map(|&k| (k as f64 - 0.5) * h).collect()
    }

    /// Membership under the tie-breaking rule used by [`bin_of`].
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && check_point(x).is_ok()
            && x.iter().zip(&self.index).all(|(&v, &k)| coordinate_index(self.level, v) == k)
    }

    pub fn parent(&self) -> Option<BinId> {
        (self.level > 0).then(|| BinId {
            level: self.level - 1,
            index: self.index.iter().map(|&k| k.div_ceil(2)).collect(),
        })
    }

    /// The `2^d` bins one level down, ordered lexicographically by index
    /// with the first coordinate most significant.
    pub fn children(&self) -> Vec<BinId> {
        let d = self.dim();
        (0..1usize << d).map(|offset| self.child(offset)).collect()
    }

    /// Child number `offset` in the ordering of [`BinId::children`].
    pub fn child(&self, offset: usize) -> BinId {
        let d = self.dim();
        let index = self
            .index
            .iter()
            .enumerate()
            .map(|(i, &k)| 2 * (k - 1) + 1 + ((offset >> (d - 1 - i)) & 1) as u64)
            .collect();
        BinId { level: self.level + 1, index }
    }

    /// Position of the child of `self` that contains `x` within
    /// [`BinId::children`]. `x` is assumed to lie in `self`.
    pub(crate) fn child_offset(&self, x: &[f64]) -> usize {
        let d = self.dim();
        x.iter().enumerate().fold(0usize, |acc, (i, &v)| {
            let k = coordinate_index(self.level + 1, v);
            acc | ((((k - 1) & 1) as usize) << (d - 1 - i))
        })
    }

    /// True when `self` equals `other` or lies strictly above it in the tree.
    pub fn is_ancestor_of(&self, other: &BinId) -> bool {
        if other.level < self.level || other.dim() != self.dim() {
            return false;
        }
        let shift = other.level - self.level;
        other
            .index
            .iter()
            .zip(&self.index)
            .all(|(&k, &p)| ((k - 1) >> shift) + 1 == p)
    }
}

impl fmt::Display for BinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}{:?}", self.level, self.index)
    }
}

#[inline]
fn coordinate_index(level: u32, v: f64) -> u64 {
    // v * 2^level is exact, so ceil is exact.
    ((v * (1u64 << level) as f64).ceil() as u64).max(1)
}

/// The level-`level` bin containing `x`, choosing the bin whose center is
/// closest to the origin when `x` lies on shared faces.
pub fn bin_of(level: u32, x: &[f64]) -> Result<BinId> {
    check_level(level, x.len())?;
    check_point(x)?;
    Ok(BinId { level, index: x.iter().map(|&v| coordinate_index(level, v)).collect() })
}

pub fn children(b: &BinId) -> Vec<BinId> {
    b.children()
}

pub fn bin_box(b: &BinId) -> BinBox {
    b.bin_box()
}

/// Interleaved (Morton) key of the level-`level` bin containing `x`, with
/// 0-based coordinate indices. Keys of descendants of a bin form one
/// contiguous range; see [`morton_range`].
pub(crate) fn morton_key(level: u32, x: &[f64]) -> u128 {
    let idx: Vec<u64> = x.iter().map(|&v| coordinate_index(level, v) - 1).collect();
    interleave(level, &idx)
}

fn interleave(level: u32, idx: &[u64]) -> u128 {
    let mut key = 0u128;
    for bit in (0..level).rev() {
        for &k in idx {
            key = (key << 1) | u128::from((k >> bit) & 1);
        }
    }
    key
}

/// Half-open key range `[lo, hi)` at `key_level` covering bin `b`,
/// requires `b.level() <= key_level`.
pub(crate) fn morton_range(b: &BinId, key_level: u32) -> (u128, u128) {
    debug_assert!(b.level <= key_level);
    let idx: Vec<u64> = b.index.iter().map(|&k| k - 1).collect();
    let prefix = interleave(b.level, &idx);
    let shift = (key_level - b.level) as usize * b.dim();
    (prefix << shift, (prefix + 1) << shift)
}
