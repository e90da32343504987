//! Second-order U-statistic `U_n^(k) = Σ_{i≠j} K_k(X_i, X_j) / (n(n-1))` for `∫f²`.

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::haar::{count_bins, kernel_eval, BinCountHierarchy, DyadicResolution};

/// Which evaluation route produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Fast,
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadEstimate {
    pub value: f64,
    pub k: DyadicResolution,
    pub n: usize,
    pub path: Path,
}

fn require_pairs(n: usize) -> Result<()> {
    if n < 2 {
        usage(format!("the quadratic U-statistic needs n >= 2, got {n}"))
    } else {
        Ok(())
    }
}

/// Oracle: explicit double loop over ordered pairs.
pub fn quad_ustat_naive(sample: &[f64], k: DyadicResolution) -> Result<QuadEstimate> {
    let n = sample.len();
    require_pairs(n)?;
    let mut total = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        for (j, &y) in sample.iter().enumerate() {
            if i != j {
                total += kernel_eval(k, x, y)?;
            }
        }
    }
    Ok(QuadEstimate { value: total / (n as f64 * (n - 1) as f64), k, n, path: Path::Naive })
}

/// `Σ_j N_j (N_j - 1)`, exact.
pub(crate) fn collision_pairs(counts: &[u32]) -> u128 {
    counts.iter().map(|&c| c as u128 * (c as u128).saturating_sub(1)).sum()
}

/// `k Σ_j N_j(N_j - 1) / (n(n-1))` from the counts at `k`.
pub fn quad_ustat_fast(counts: &BinCountHierarchy, k: DyadicResolution) -> Result<QuadEstimate> {
    let n = counts.sample_size();
    require_pairs(n)?;
    let pairs = collision_pairs(counts.require(k)?);
    let value = k.k_f64() * pairs as f64 / (n as f64 * (n - 1) as f64);
    Ok(QuadEstimate { value, k, n, path: Path::Fast })
}

/// Fast `U_n^(k)` directly from a sample.
pub fn quad_ustat(sample: &[f64], k: DyadicResolution) -> Result<QuadEstimate> {
    require_pairs(sample.len())?;
    quad_ustat_fast(&count_bins(sample, &[k])?, k)
}

/// `Î(k_small, k_large) = U^(k_large) - U^(k_small)` from one shared hierarchy.
pub fn i_hat(sample: &[f64], k_small: DyadicResolution, k_large: DyadicResolution) -> Result<f64> {
    if k_small > k_large {
        return usage(format!("i_hat needs k_small <= k_large, got {k_small} > {k_large}"));
    }
    require_pairs(sample.len())?;
    i_hat_counts(&count_bins(sample, &[k_small, k_large])?, k_small, k_large)
}

pub fn i_hat_counts(counts: &BinCountHierarchy, k_small: DyadicResolution, k_large: DyadicResolution) -> Result<f64> {
    if k_small > k_large {
        return usage(format!("i_hat needs k_small <= k_large, got {k_small} > {k_large}"));
    }
    Ok(quad_ustat_fast(counts, k_large)?.value - quad_ustat_fast(counts, k_small)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityModel;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use rand::Rng;

    fn res(k: u64) -> DyadicResolution {
        DyadicResolution::from_k(k).unwrap()
    }

    const X: [f64; 3] = [0.1, 0.3, 0.9];

    #[test]
    fn naive_examples() {
        assert!((quad_ustat_naive(&X, res(2)).unwrap().value - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(quad_ustat_naive(&[0.1, 0.9], res(1)).unwrap().value, 1.0);
        assert_eq!(quad_ustat_naive(&[0.37; 7], res(64)).unwrap().value, 64.0);
        assert!(quad_ustat_naive(&[0.5], res(2)).is_err());
    }

    #[test]
    fn fast_examples() {
        let h = BinCountHierarchy::from_counts(3, vec![(res(2), vec![2, 1])]).unwrap();
        assert!((quad_ustat_fast(&h, res(2)).unwrap().value - 2.0 / 3.0).abs() < 1e-15);
        let h = BinCountHierarchy::from_counts(3, vec![(res(4), vec![1, 0, 1, 1])]).unwrap();
        assert_eq!(quad_ustat_fast(&h, res(4)).unwrap().value, 0.0);
        let h = BinCountHierarchy::from_counts(5, vec![(res(1), vec![5])]).unwrap();
        assert_eq!(quad_ustat_fast(&h, res(1)).unwrap().value, 1.0);
        assert!(quad_ustat_fast(&h, res(2)).is_err());
    }

    #[test]
    fn i_hat_examples() {
        assert!((i_hat(&X, res(1), res(2)).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(i_hat(&X, res(8), res(8)).unwrap(), 0.0);
        assert!(i_hat(&X, res(4), res(2)).is_err());
    }

    #[test]
    fn uniform_variance_is_exact() {
        // Under the uniform density Var U_k = 2(k - 1)/(n(n-1)); check the MC variance.
        let (n, k, reps) = (256usize, res(64), 4000);
        let values: Vec<f64> = (0..reps)
            .map(|r| {
                let x = DensityModel::Uniform.sample(n, &mut stream(3, Purpose::Example, n as u64, r)).unwrap();
                quad_ustat(&x, k).unwrap().value
            })
            .collect();
        let mean = values.iter().sum::<f64>() / reps as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let exact = 2.0 * 63.0 / (256.0 * 255.0);
        assert!((mean - 1.0).abs() < 4.0 * (exact / reps as f64).sqrt());
        // Relative SE of a sample variance is about sqrt(2/R) for near-normal data.
        assert!((var / exact - 1.0).abs() < 4.0 * (2.0 / reps as f64).sqrt(), "{var} vs {exact}");
    }

    proptest! {
        #[test]
        fn fast_matches_naive(seed in any::<u64>(), n in 2usize..120, level in 0u32..10) {
            let mut rng = stream(seed, Purpose::Example, 0, 0);
            // Include exact bin edges so the boundary convention is exercised.
            let x: Vec<f64> = (0..n)
                .map(|_| if rng.random::<f64>() < 0.2 { rng.random_range(0..=16) as f64 / 16.0 } else { rng.random() })
                .collect();
            let k = DyadicResolution::from_level(level).unwrap();
            let naive = quad_ustat_naive(&x, k).unwrap().value;
            let fast = quad_ustat(&x, k).unwrap().value;
            prop_assert!((fast - naive).abs() <= 1e-10 * naive.abs().max(1.0));
        }

        #[test]
        fn permutation_invariant(seed in any::<u64>(), n in 2usize..60, level in 0u32..8) {
            let mut rng = stream(seed, Purpose::Example, 1, 0);
            let x: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let mut y = x.clone();
            y.reverse();
            y.rotate_left(n / 3);
            let k = DyadicResolution::from_level(level).unwrap();
            prop_assert_eq!(quad_ustat(&x, k).unwrap().value, quad_ustat(&y, k).unwrap().value);
            prop_assert_eq!(quad_ustat_naive(&x, k).unwrap().value, quad_ustat_naive(&y, k).unwrap().value);
        }
    }
}
