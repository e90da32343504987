//! Haar projection kernels on dyadic partitions of `[0, 1]`.
//!
//! A resolution `k = 2^m` splits `[0, 1]` into the bins `((j-1)/k, j/k]`,
//! `j = 1..=k`, with `x = 0` assigned to the first bin. The level-`m` Haar
//! projection kernel is `K_k(x, y) = k * 1[x and y share a bin]`.
//!
//! Bin lookup is `ceil(x * k)` clamped to at least one. Because `k` is a power
//! of two, `x * k` is exact in floating point, so a point's bin at a coarse
//! resolution is always the parent of its bin at any finer resolution.

use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Error, Result};

/// A dyadic truncation level: `k = 2^level` bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct DyadicResolution {
    level: u32,
}

impl DyadicResolution {
    /// Largest supported level. Counting at `2^30` bins already needs 4 GiB.
    pub const MAX_LEVEL: u32 = 30;

    pub fn from_level(level: u32) -> Result<Self> {
        if level > Self::MAX_LEVEL {
            return usage(format!("resolution level {level} exceeds {}", Self::MAX_LEVEL));
        }
        Ok(Self { level })
    }

    /// Exact `k`; errors unless `k` is a power of two.
    pub fn from_k(k: u64) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() {
            return usage(format!("resolution {k} is not a power of two"));
        }
        Self::from_level(k.trailing_zeros())
    }

    /// Smallest power of two that is `>= k`; anything below 1 maps to 1.
    pub fn round_up(k: f64) -> Result<Self> {
        if !k.is_finite() {
            return usage(format!("cannot round non-finite resolution {k}"));
        }
        if k <= 1.0 {
            return Self::from_level(0);
        }
        // Values within a relative 1e-9 of a power of two are taken to be that
        // power, so rounding noise in n^e never doubles the resolution.
        let mut level = k.log2().floor() as u32;
        while 2f64.powi(level as i32) * (1.0 + 1e-9) < k {
            level += 1;
        }
        Self::from_level(level)
    }

    pub fn level(self) -> u32 {
        self.level
    }

    pub fn k(self) -> usize {
        1usize << self.level
    }

    pub fn k_f64(self) -> f64 {
        (1u64 << self.level) as f64
    }

    /// Zero-based bin of a point already known to lie in `[0, 1]`.
    #[inline]
    pub(crate) fn bin0(self, x: f64) -> usize {
        let j = (x * self.k_f64()).ceil() as usize;
        j.max(1).min(self.k()) - 1
    }

    /// Zero-based index of the bin at `self` (coarser) containing bin `j0` of `fine`.
    #[inline]
    pub(crate) fn parent_of(self, fine: DyadicResolution, j0: usize) -> usize {
        j0 >> (fine.level - self.level)
    }
}

impl TryFrom<u64> for DyadicResolution {
    type Error = Error;
    fn try_from(k: u64) -> Result<Self> {
        Self::from_k(k)
    }
}

impl From<DyadicResolution> for u64 {
    fn from(r: DyadicResolution) -> u64 {
        r.k() as u64
    }
}

impl std::fmt::Display for DyadicResolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.k())
    }
}

fn check_unit(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        domain(format!("point {x} lies outside [0, 1]"))
    }
}

/// One-based bin index `j` with `x` in `((j-1)/k, j/k]`; `x = 0` maps to bin 1.
pub fn bin_index(k: DyadicResolution, x: f64) -> Result<usize> {
    check_unit(x)?;
    Ok(k.bin0(x) + 1)
}

/// `K_k(x, y)`: `k` when `x` and `y` share a bin, zero otherwise.
pub fn kernel_eval(k: DyadicResolution, x: f64, y: f64) -> Result<f64> {
    check_unit(x)?;
    check_unit(y)?;
    Ok(if k.bin0(x) == k.bin0(y) { k.k_f64() } else { 0.0 })
}

/// `∫ K_k(x, y) dy` in closed form: the bin of `x` has width `1/k` and height `k`.
pub fn kernel_row_mass(k: DyadicResolution, x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(k.k_f64() * (1.0 / k.k_f64()))
}

/// `∫∫ K_k(x, y)^2 dx dy = k` in closed form: `k` diagonal blocks of area `1/k^2`, height `k^2`.
pub fn kernel_l2_mass(k: DyadicResolution) -> f64 {
    let kf = k.k_f64();
    kf * (kf * kf) / (kf * kf)
}

/// `∫_0^1 K_a(x, u) K_b(x, v) K_c(x, w) dx` for nested `a <= b <= c`.
///
/// The product is supported on the `c`-bin of `w`, which must sit inside the
/// `b`-bin of `v` and the `a`-bin of `u`; the integral is then `a * b`.
pub fn triple_kernel_integral(
    a: DyadicResolution,
    b: DyadicResolution,
    c: DyadicResolution,
    u: f64,
    v: f64,
    w: f64,
) -> Result<f64> {
    if !(a <= b && b <= c) {
        return usage(format!("resolutions must be nested a <= b <= c, got ({a}, {b}, {c})"));
    }
    check_unit(u)?;
    check_unit(v)?;
    check_unit(w)?;
    Ok(triple_integral_slots([(a, u), (b, v), (c, w)]))
}

/// Same integral for slots given in any resolution order.
pub(crate) fn triple_integral_slots(mut slots: [(DyadicResolution, f64); 3]) -> f64 {
    slots.sort_by_key(|s| s.0);
    let [(a, u), (b, v), (_, w)] = slots;
    if b.bin0(v) == b.bin0(w) && a.bin0(u) == a.bin0(w) {
        a.k_f64() * b.k_f64()
    } else {
        0.0
    }
}

/// A function constant on each bin of a dyadic partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantFn {
    resolution: DyadicResolution,
    values: Vec<f64>,
}

impl PiecewiseConstantFn {
    pub fn new(resolution: DyadicResolution, values: Vec<f64>) -> Result<Self> {
        if values.len() != resolution.k() {
            return usage(format!(
                "expected {} bin values at resolution {resolution}, got {}",
                resolution.k(),
                values.len()
            ));
        }
        Ok(Self { resolution, values })
    }

    pub fn constant(resolution: DyadicResolution, value: f64) -> Self {
        Self { resolution, values: vec![value; resolution.k()] }
    }

    pub fn resolution(&self) -> DyadicResolution {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.resolution.k_f64()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit(x)?;
        Ok(self.values[self.resolution.bin0(x)])
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        self.values[self.resolution.bin0(x)]
    }

    /// Orthogonal projection onto a coarser (or equal) partition: child averages.
    pub fn project(&self, coarser: DyadicResolution) -> Result<Self> {
        if coarser > self.resolution {
            return usage(format!("cannot project resolution {} onto finer {coarser}", self.resolution));
        }
        let width = 1usize << (self.resolution.level - coarser.level);
        let values = self
            .values
            .chunks_exact(width)
            .map(|c| c.iter().sum::<f64>() / width as f64)
            .collect();
        Ok(Self { resolution: coarser, values })
    }

    /// The same function written on a finer partition.
    pub fn refine(&self, finer: DyadicResolution) -> Result<Self> {
        if finer < self.resolution {
            return usage(format!("cannot refine resolution {} to coarser {finer}", self.resolution));
        }
        let width = 1usize << (finer.level - self.resolution.level);
        let values = self.values.iter().flat_map(|&v| std::iter::repeat_n(v, width)).collect();
        Ok(Self { resolution: finer, values })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { resolution: self.resolution, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination on the finer of the two partitions.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let res = self.resolution.max(other.resolution);
        let a = self.refine(res).expect("refining to the finer partition");
        let b = other.refine(res).expect("refining to the finer partition");
        let values = a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect();
        Self { resolution: res, values }
    }
}

/// Occupancy counts of one sample at several nested dyadic resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct BinCountHierarchy {
    sample_size: usize,
    levels: Vec<(DyadicResolution, Vec<u32>)>,
}

impl BinCountHierarchy {
    /// Assembles a hierarchy from externally computed counts, checking that
    /// every level sums to `sample_size` and that parents equal the sum of
    /// their children.
    pub fn from_counts(sample_size: usize, mut levels: Vec<(DyadicResolution, Vec<u32>)>) -> Result<Self> {
        levels.sort_by_key(|l| l.0);
        levels.dedup_by_key(|l| l.0);
        for (res, counts) in &levels {
            if counts.len() != res.k() {
                return usage(format!("level {res} has {} counts", counts.len()));
            }
            let total: u64 = counts.iter().map(|&c| c as u64).sum();
            if total != sample_size as u64 {
                return usage(format!("counts at resolution {res} sum to {total}, expected {sample_size}"));
            }
        }
        for pair in levels.windows(2) {
            let (coarse, cc) = (&pair[0].0, &pair[0].1);
            let (fine, fc) = (&pair[1].0, &pair[1].1);
            let width = 1usize << (fine.level - coarse.level);
            for (j, chunk) in fc.chunks_exact(width).enumerate() {
                if chunk.iter().sum::<u32>() != cc[j] {
                    return usage(format!("bin {} at resolution {coarse} disagrees with its children at {fine}", j + 1));
                }
            }
        }
        Ok(Self { sample_size, levels })
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn resolutions(&self) -> Vec<DyadicResolution> {
        self.levels.iter().map(|l| l.0).collect()
    }

    pub fn finest(&self) -> Option<DyadicResolution> {
        self.levels.last().map(|l| l.0)
    }

    pub fn counts(&self, res: DyadicResolution) -> Option<&[u32]> {
        self.levels.iter().find(|l| l.0 == res).map(|l| l.1.as_slice())
    }

    pub(crate) fn require(&self, res: DyadicResolution) -> Result<&[u32]> {
        self.counts(res)
            .ok_or_else(|| Error::Usage(format!("hierarchy has no counts at resolution {res}")))
    }
}

/// Counts the sample at every requested resolution: one pass at the finest
/// level, coarser levels by summing children.
pub fn count_bins(sample: &[f64], resolutions: &[DyadicResolution]) -> Result<BinCountHierarchy> {
    let mut res: Vec<DyadicResolution> = resolutions.to_vec();
    res.sort();
    res.dedup();
    let Some(&finest) = res.last() else {
        return usage("no resolutions requested");
    };
    if let Some(i) = sample.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return domain(format!("sample point {i} ({}) lies outside [0, 1]", sample[i]));
    }
    let mut fine = vec![0u32; finest.k()];
    for &x in sample {
        fine[finest.bin0(x)] += 1;
    }
    let mut levels = Vec::with_capacity(res.len());
    let mut current = (finest, fine);
    for &r in res.iter().rev().skip(1) {
        let width = 1usize << (current.0.level - r.level);
        let coarse = current.1.chunks_exact(width).map(|c| c.iter().sum()).collect();
        levels.push(current);
        current = (r, coarse);
    }
    levels.push(current);
    levels.reverse();
    Ok(BinCountHierarchy { sample_size: sample.len(), levels })
}

/// Haar histogram `k * N_j / n`, which integrates to one.
pub fn empirical_projection(sample: &[f64], k: DyadicResolution) -> Result<PiecewiseConstantFn> {
    if sample.is_empty() {
        return usage("empirical projection needs at least one observation");
    }
    let counts = count_bins(sample, &[k])?;
    let scale = k.k_f64() / sample.len() as f64;
    let values = counts.require(k)?.iter().map(|&c| c as f64 * scale).collect();
    PiecewiseConstantFn::new(k, values)
}
