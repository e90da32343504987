//! Third-order U-statistic for `∫f³` with three nested Haar resolutions.
//!
//! With `K_i = K_{k_i}` and `𝕍_n` the average over ordered distinct triples,
//!
//! ```text
//! φ̂ = 𝕍_n ∫ K1 K1 K1
//!   + 3 𝕍_n ∫ K1 (K3 - K1) K1
//!   + 3 𝕍_n ∫ K1 (K3 - K1)(K3 - K1)
//!   + 3 𝕍_n ∫ (K2 - K1)(K2 - K1)(K3 - K2)
//!   +   𝕍_n ∫ (K2 - K1)(K2 - K1)(K2 - K1)
//! ```
//!
//! where the `i`-th kernel factor takes `X_{i_i}` as its second argument.
//! Each term expands into signed primitives `𝕍_n ∫ K_a K_b K_c`. For nested
//! `a <= b <= c` the integral is `a b 1[v, w share a b-bin] 1[u, w share an
//! a-bin]`, so a primitive equals `a b Σ_β M_β (M_β - 1)(N_{α(β)} - 2) / (n)_3`
//! where `M_β` counts b-bin `β` and `N_{α(β)}` counts its parent a-bin.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::density::DensityModel;
use crate::error::{usage, Result};
use crate::haar::{count_bins, kernel_eval, BinCountHierarchy, DyadicResolution, PiecewiseConstantFn};
use crate::quadratic::Path;

/// Multiplicities of the five terms.
pub const MULTIPLICITIES: [f64; 5] = [1.0, 3.0, 3.0, 3.0, 1.0];

/// Nested resolutions `k1 <= k2 <= k3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KTriple {
    pub k1: DyadicResolution,
    pub k2: DyadicResolution,
    pub k3: DyadicResolution,
}

impl KTriple {
    pub fn new(k1: DyadicResolution, k2: DyadicResolution, k3: DyadicResolution) -> Result<Self> {
        if !(k1 <= k2 && k2 <= k3) {
            return usage(format!("resolutions must satisfy k1 <= k2 <= k3, got ({k1}, {k2}, {k3})"));
        }
        Ok(Self { k1, k2, k3 })
    }

    pub fn from_ks(k1: u64, k2: u64, k3: u64) -> Result<Self> {
        Self::new(DyadicResolution::from_k(k1)?, DyadicResolution::from_k(k2)?, DyadicResolution::from_k(k3)?)
    }

    pub fn resolutions(&self) -> [DyadicResolution; 3] {
        [self.k1, self.k2, self.k3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicEstimate {
    pub value: f64,
    pub ktriple: KTriple,
    /// The five raw `𝕍_n` terms, before multiplicities.
    pub term_values: [f64; 5],
    pub path: Path,
}

impl CubicEstimate {
    fn from_terms(term_values: [f64; 5], ktriple: KTriple, path: Path) -> Self {
        let value = term_values.iter().zip(MULTIPLICITIES).map(|(t, m)| t * m).sum();
        Self { value, ktriple, term_values, path }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 0.25 {
        Ok(())
    } else {
        usage(format!("cubic resolutions need beta in (0, 1/4), got {beta}"))
    }
}

/// `k1 ~ n`, `k2 ~ n^{3/(2(1+4β))}` inside `[n^{(3/2-2β)/(1+4β)}, n^{(3/2+2β)/(1+4β)}]`,
/// `k3 ~ n^{2/(1+4β)}`, all rounded up to powers of two.
pub fn choose_k_triple(beta: f64, n: usize) -> Result<KTriple> {
    check_beta(beta)?;
    let k3 = DyadicResolution::round_up((n as f64).powf(2.0 / (1.0 + 4.0 * beta)))?;
    choose_k_triple_with_k3(beta, n, k3)
}

/// As [`choose_k_triple`] with a supplied `k3`, raised to `k1` if it is smaller.
/// Also accepts `β = 1/4`, the top of a selection grid.
pub fn choose_k_triple_with_k3(beta: f64, n: usize, k3: DyadicResolution) -> Result<KTriple> {
    if !(beta > 0.0 && beta <= 0.25) {
        return usage(format!("cubic resolutions need beta in (0, 1/4], got {beta}"));
    }
    if n < 8 {
        return usage(format!("cubic resolutions need n >= 8, got {n}"));
    }
    let nf = n as f64;
    let denom = 1.0 + 4.0 * beta;
    let k1 = DyadicResolution::round_up(nf)?;
    let k3 = k3.max(k1);
    let lo = DyadicResolution::round_up(nf.powf((1.5 - 2.0 * beta) / denom))?;
    let hi = DyadicResolution::round_up(nf.powf((1.5 + 2.0 * beta) / denom))?;
    let k2 = DyadicResolution::round_up(nf.powf(1.5 / denom))?.clamp(lo, hi).clamp(k1, k3);
    KTriple::new(k1, k2, k3)
}

/// One kernel factor: `Σ coef * K_{k_idx}`.
type Factor = &'static [(i64, usize)];

const K1: Factor = &[(1, 0)];
const K3_MINUS_K1: Factor = &[(1, 2), (-1, 0)];
const K2_MINUS_K1: Factor = &[(1, 1), (-1, 0)];
const K3_MINUS_K2: Factor = &[(1, 2), (-1, 1)];

/// Slot factors of the five terms.
pub(crate) const TERMS: [[Factor; 3]; 5] = [
    [K1, K1, K1],
    [K1, K3_MINUS_K1, K1],
    [K1, K3_MINUS_K1, K3_MINUS_K1],
    [K2_MINUS_K1, K2_MINUS_K1, K3_MINUS_K2],
    [K2_MINUS_K1, K2_MINUS_K1, K2_MINUS_K1],
];

/// Slot-ordered expansion of a term: `(coef, [idx_u, idx_v, idx_w])`.
pub(crate) fn expand_slots(term: &[Factor; 3]) -> Vec<(i64, [usize; 3])> {
    let mut out = Vec::new();
    for &(c0, i0) in term[0] {
        for &(c1, i1) in term[1] {
            for &(c2, i2) in term[2] {
                out.push((c0 * c1 * c2, [i0, i1, i2]));
            }
        }
    }
    out
}

/// Per term, the signed primitives keyed by the sorted resolution multiset.
/// Averaging over ordered triples makes slot order irrelevant.
pub(crate) fn primitive_table() -> &'static [Vec<(i64, [usize; 3])>; 5] {
    static TABLE: OnceLock<[Vec<(i64, [usize; 3])>; 5]> = OnceLock::new();
    TABLE.get_or_init(|| {
        TERMS.map(|term| {
            let mut grouped: BTreeMap<[usize; 3], i64> = BTreeMap::new();
            for (c, mut idx) in expand_slots(&term) {
                idx.sort();
                *grouped.entry(idx).or_default() += c;
            }
            grouped.into_iter().filter(|&(_, c)| c != 0).map(|(idx, c)| (c, idx)).collect()
        })
    })
}

fn require_triples(n: usize) -> Result<()> {
    if n < 3 {
        usage(format!("the cubic U-statistic needs n >= 3, got {n}"))
    } else {
        Ok(())
    }
}

fn falling3(n: usize) -> f64 {
    n as f64 * (n - 1) as f64 * (n - 2) as f64
}

/// `Σ_β M_β (M_β - 1)(N_{α(β)} - 2)`, exact.
fn primitive_sum(ca: &[u32], a: DyadicResolution, cb: &[u32], b: DyadicResolution) -> i128 {
    cb.iter()
        .enumerate()
        .filter(|&(_, &m)| m >= 2)
        .map(|(beta, &m)| {
            let parent = ca[a.parent_of(b, beta)] as i128;
            m as i128 * (m as i128 - 1) * (parent - 2)
        })
        .sum()
}

/// Weighted version: each b-bin also carries the weight of its `k1`-bin.
fn weighted_primitive_sum(
    ca: &[u32],
    a: DyadicResolution,
    cb: &[u32],
    b: DyadicResolution,
    k1: DyadicResolution,
    weight: &[f64],
) -> f64 {
    cb.iter()
        .enumerate()
        .filter(|&(_, &m)| m >= 2)
        .map(|(beta, &m)| {
            let parent = ca[a.parent_of(b, beta)] as f64;
            weight[k1.parent_of(b, beta)] * m as f64 * (m as f64 - 1.0) * (parent - 2.0)
        })
        .sum()
}

/// Fast evaluation from counts at `k1`, `k2` and `k3`.
pub fn cubic_estimator_fast(counts: &BinCountHierarchy, ktriple: KTriple) -> Result<CubicEstimate> {
    let n = counts.sample_size();
    require_triples(n)?;
    let ks = ktriple.resolutions();
    let cs = [counts.require(ks[0])?, counts.require(ks[1])?, counts.require(ks[2])?];
    let mut cache: BTreeMap<(usize, usize), i128> = BTreeMap::new();
    let mut terms = [0.0; 5];
    for (t, prims) in primitive_table().iter().enumerate() {
        let mut numerator: i128 = 0;
        for &(coef, [i, j, _]) in prims {
            let s = *cache.entry((i, j)).or_insert_with(|| primitive_sum(cs[i], ks[i], cs[j], ks[j]));
            numerator += coef as i128 * ks[i].k() as i128 * ks[j].k() as i128 * s;
        }
        terms[t] = numerator as f64 / falling3(n);
    }
    Ok(CubicEstimate::from_terms(terms, ktriple, Path::Fast))
}

/// Fast evaluation directly from a sample.
pub fn cubic_estimator(sample: &[f64], ktriple: KTriple) -> Result<CubicEstimate> {
    require_triples(sample.len())?;
    cubic_estimator_fast(&count_bins(sample, &ktriple.resolutions())?, ktriple)
}

/// The five terms with every x-integral weighted by `g`, piecewise constant at `k1`.
pub(crate) fn weighted_terms(counts: &BinCountHierarchy, ktriple: KTriple, weight: &[f64]) -> Result<[f64; 5]> {
    let n = counts.sample_size();
    require_triples(n)?;
    let ks = ktriple.resolutions();
    if weight.len() != ks[0].k() {
        return usage(format!("weight has {} values, expected {} at k1", weight.len(), ks[0].k()));
    }
    let cs = [counts.require(ks[0])?, counts.require(ks[1])?, counts.require(ks[2])?];
    let mut terms = [0.0; 5];
    for (t, prims) in primitive_table().iter().enumerate() {
        terms[t] = prims
            .iter()
            .map(|&(coef, [i, j, _])| {
                coef as f64
                    * ks[i].k_f64()
                    * ks[j].k_f64()
                    * weighted_primitive_sum(cs[i], ks[i], cs[j], ks[j], ks[0], weight)
            })
            .sum::<f64>()
            / falling3(n);
    }
    Ok(terms)
}

/// Direct integration of the five terms for one ordered triple: the
/// integrand is constant on every `k3` bin, so summing over the `k3` bins
/// inside the `k1` bin of `u` (outside it the first factor vanishes) is exact.
pub(crate) fn triple_terms(
    ktriple: KTriple,
    points: [f64; 3],
    weight: Option<&PiecewiseConstantFn>,
) -> Result<[f64; 5]> {
    let ks = ktriple.resolutions();
    let width = ktriple.k3.k() / ktriple.k1.k();
    let first = ktriple.k1.bin0(points[0]) * width;
    let k3 = ktriple.k3.k_f64();
    let mut terms = [0.0; 5];
    for t in first..first + width {
        let x = (t as f64 + 0.5) / k3;
        let g = weight.map_or(1.0, |w| w.eval_unchecked(x));
        let mut kernels = [[0.0; 3]; 3];
        for (slot, &p) in points.iter().enumerate() {
            for (r, &k) in ks.iter().enumerate() {
                kernels[slot][r] = kernel_eval(k, x, p)?;
            }
        }
        for (term, factors) in terms.iter_mut().zip(TERMS.iter()) {
            let mut product = g;
            for (slot, factor) in factors.iter().enumerate() {
                product *= factor.iter().map(|&(c, r)| c as f64 * kernels[slot][r]).sum::<f64>();
            }
            *term += product;
        }
    }
    Ok(terms.map(|v| v / k3))
}

pub(crate) fn naive_terms(sample: &[f64], ktriple: KTriple, weight: Option<&PiecewiseConstantFn>) -> Result<[f64; 5]> {
    let n = sample.len();
    require_triples(n)?;
    let mut terms = [0.0; 5];
    for (i, &u) in sample.iter().enumerate() {
        for (j, &v) in sample.iter().enumerate() {
            if j == i {
                continue;
            }
            for (l, &w) in sample.iter().enumerate() {
                if l == i || l == j {
                    continue;
                }
                let t = triple_terms(ktriple, [u, v, w], weight)?;
                for (acc, x) in terms.iter_mut().zip(t) {
                    *acc += x;
                }
            }
        }
    }
    Ok(terms.map(|v| v / falling3(n)))
}

/// Oracle: `O(n³ k3/k1)` loop over ordered distinct triples.
pub fn cubic_estimator_naive(sample: &[f64], ktriple: KTriple) -> Result<CubicEstimate> {
    Ok(CubicEstimate::from_terms(naive_terms(sample, ktriple, None)?, ktriple, Path::Naive))
}

/// Exact expectation of the estimator under `model`:
/// `∫f3³ - ∫(f3 - f2)³ - 3∫(f3 - f2)²(f2 - f1)` with `f_i` the projection at `k_i`.
pub fn cubic_expectation(model: &DensityModel, ktriple: KTriple) -> Result<f64> {
    let fine = ktriple.k3;
    let f1 = model.projection(ktriple.k1).refine(fine)?;
    let f2 = model.projection(ktriple.k2).refine(fine)?;
    let f3 = model.projection(fine);
    let total: f64 = f1
        .values()
        .iter()
        .zip(f2.values())
        .zip(f3.values())
        .map(|((&a, &b), &c)| {
            let e = c - b;
            let f = b - a;
            c * c * c - e * e * e - 3.0 * e * e * f
        })
        .sum();
    Ok(total / fine.k_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::haar::triple_kernel_integral;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    fn kt(a: u64, b: u64, c: u64) -> KTriple {
        KTriple::from_ks(a, b, c).unwrap()
    }

    #[test]
    fn choose_examples() {
        let t = choose_k_triple(0.25 - 1e-12, 1024).unwrap();
        assert_eq!([t.k1.k(), t.k2.k(), t.k3.k()], [1024, 1024, 1024]);
        let t = choose_k_triple(0.125, 1024).unwrap();
        assert_eq!(t.k3.k(), 16384);
        assert_eq!(t.k1.k(), 1024);
        for beta in [0.01, 0.05, 0.1, 0.2, 0.24] {
            for n in [8, 100, 1000, 4096] {
                let t = choose_k_triple(beta, n).unwrap();
                assert!(t.k1 <= t.k2 && t.k2 <= t.k3);
            }
        }
        assert!(choose_k_triple(0.25, 1024).is_err());
        assert!(choose_k_triple(0.0, 1024).is_err());
        assert!(choose_k_triple(0.1, 4).is_err());
    }

    #[test]
    fn table_matches_definitions() {
        // Term 1 is one primitive; term 5 has eight slot products.
        let table = primitive_table();
        assert_eq!(table[0], vec![(1, [0, 0, 0])]);
        assert_eq!(expand_slots(&TERMS[4]).len(), 8);
        // Slot expansions agree with direct integration on single triples.
        let mut rng = stream(2, Purpose::Example, 0, 0);
        for _ in 0..300 {
            let la = rng.random_range(0..4u32);
            let lb = la + rng.random_range(0..3u32);
            let lc = lb + rng.random_range(0..3u32);
            let t = KTriple::new(
                DyadicResolution::from_level(la).unwrap(),
                DyadicResolution::from_level(lb).unwrap(),
                DyadicResolution::from_level(lc).unwrap(),
            )
            .unwrap();
            let p = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let direct = triple_terms(t, p, None).unwrap();
            let ks = t.resolutions();
            for (term, want) in TERMS.iter().zip(direct) {
                let got: f64 = expand_slots(term)
                    .iter()
                    .map(|&(c, [i, j, l])| {
                        // The closed form wants ascending resolutions; integrals are slot-symmetric.
                        let mut slots = [(ks[i], p[0]), (ks[j], p[1]), (ks[l], p[2])];
                        slots.sort_by_key(|s| s.0);
                        let [(a, u), (b, v), (cc, w)] = slots;
                        c as f64 * triple_kernel_integral(a, b, cc, u, v, w).unwrap()
                    })
                    .sum();
                assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{t:?} {p:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn degenerate_examples() {
        let x = [0.1, 0.2, 0.3, 0.9];
        let fast = cubic_estimator(&x, kt(2, 2, 2)).unwrap();
        let naive = cubic_estimator_naive(&x, kt(2, 2, 2)).unwrap();
        assert_eq!(fast.value, 1.0);
        assert!((naive.value - 1.0).abs() < 1e-14);
        assert_eq!(&fast.term_values[1..], &[0.0; 4]);
        // All points in distinct k3 bins (and distinct k1 bins) give zero.
        let spread = [0.05, 0.3, 0.55, 0.8];
        assert_eq!(cubic_estimator(&spread, kt(4, 8, 16)).unwrap().value, 0.0);
        assert_eq!(cubic_estimator_naive(&spread, kt(4, 8, 16)).unwrap().value, 0.0);
        assert!(cubic_estimator(&[0.1, 0.2], kt(2, 2, 2)).is_err());
        assert!(KTriple::from_ks(4, 2, 8).is_err());
    }

    #[test]
    fn expectation_formula_matches_direct_moments() {
        // E 𝕍_n ∫ K_a K_b K_c = ∫ f_a f_b f_c; sum the five terms directly.
        let model = DensityModel::linear_ramp(0.3).unwrap();
        let t = kt(4, 16, 64);
        let f: Vec<PiecewiseConstantFn> = t.resolutions().iter().map(|&k| model.projection(k).refine(t.k3).unwrap()).collect();
        let mut direct = 0.0;
        for (term, m) in TERMS.iter().zip(MULTIPLICITIES) {
            for (c, idx) in expand_slots(term) {
                let prod: f64 = (0..64).map(|j| idx.iter().map(|&i| f[i].values()[j]).product::<f64>()).sum::<f64>() / 64.0;
                direct += m * c as f64 * prod;
            }
        }
        assert!((direct - cubic_expectation(&model, t).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn uniform_expectation_is_one() {
        assert!((cubic_expectation(&DensityModel::Uniform, kt(8, 32, 128)).unwrap() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn fast_matches_naive(seed in any::<u64>(), n in 3usize..40, la in 0u32..4, db in 0u32..3, dc in 0u32..3) {
            let mut rng = stream(seed, Purpose::Example, 0, 1);
            let x: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.2 { rng.random_range(0..=8) as f64 / 8.0 } else { rng.random::<f64>() })
                .collect();
            let t = KTriple::new(
                DyadicResolution::from_level(la).unwrap(),
                DyadicResolution::from_level(la + db).unwrap(),
                DyadicResolution::from_level(la + db + dc).unwrap(),
            ).unwrap();
            let fast = cubic_estimator(&x, t).unwrap();
            let naive = cubic_estimator_naive(&x, t).unwrap();
            for (a, b) in fast.term_values.iter().zip(naive.term_values) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }

        #[test]
        fn permutation_invariant(seed in any::<u64>(), n in 3usize..200) {
            let mut rng = stream(seed, Purpose::Example, 0, 2);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut y = x.clone();
            y.reverse();
            let t = kt(8, 16, 64);
            prop_assert_eq!(cubic_estimator(&x, t).unwrap(), cubic_estimator(&y, t).unwrap());
        }

        #[test]
        fn equal_resolutions_zero_extra_terms(seed in any::<u64>(), n in 3usize..200, level in 0u32..8) {
            let mut rng = stream(seed, Purpose::Example, 0, 3);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let k = DyadicResolution::from_level(level).unwrap();
            let est = cubic_estimator(&x, KTriple::new(k, k, k).unwrap()).unwrap();
            prop_assert_eq!(&est.term_values[1..], &[0.0; 4]);
        }
    }
}
