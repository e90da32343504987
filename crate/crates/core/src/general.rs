//! Sample-split Taylor plug-in estimator of `∫ T(f)`.
//!
//! Half the sample (`D1`) gives a pilot histogram `f̂`; the other half (`D2`)
//! estimates the first three terms of the expansion of `T(f)` around `f̂`:
//!
//! ```text
//! ∫T(f) ≈ ∫T(f̂) + ∫T'(f̂)(f - f̂) + ∫T''(f̂)/2 (f - f̂)² + ∫T'''(f̂)/6 (f - f̂)³
//! ```
//!
//! Each `∫g (f - f̂)^p` is expanded in powers of `f`; `∫g f` is a sample mean,
//! `∫g f²` a weighted quadratic U-statistic and `∫g f³` a weighted cubic one.
//! With `T(y) = y²` the sum telescopes to `U_k(D2)`, and with `T(y) = y³` to
//! the cubic estimator on `D2`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cubic::{choose_k_triple, choose_k_triple_with_k3, naive_terms, weighted_terms, KTriple, MULTIPLICITIES};
use crate::error::{domain, usage, Result};
use crate::functional::FunctionalSpec;
use crate::haar::{count_bins, empirical_projection, BinCountHierarchy, DyadicResolution, PiecewiseConstantFn};
use crate::lepski::{k_star, select_modified, LepskiGrid};
use crate::quad;
use crate::quadratic::collision_pairs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralEstimate {
    pub value: f64,
    /// `∫T(f̂)`, then the linear, quadratic and cubic corrections.
    pub term_values: [f64; 4],
    pub pilot_resolution: DyadicResolution,
    pub ktriple: KTriple,
    pub n1: usize,
    pub n2: usize,
    pub beta_hat: f64,
    /// Selected grid index, `None` when `β` was supplied.
    pub j_hat: Option<usize>,
    /// Some pilot value fell below the domain floor and was raised to it.
    pub clamped: bool,
}

/// `Σ_j k² G_j N_j(N_j - 1) / (n(n-1))` with `G_j = g_j / k`, the U-statistic
/// with kernel `∫ g(x) K_k(x, u) K_k(x, v) dx`.
pub fn weighted_quad_ustat(sample: &[f64], weight: &PiecewiseConstantFn, k: DyadicResolution) -> Result<f64> {
    if sample.len() < 2 {
        return usage(format!("the quadratic U-statistic needs n >= 2, got {}", sample.len()));
    }
    weighted_quad_counts(&count_bins(sample, &[k])?, weight, k)
}

fn weighted_quad_counts(counts: &BinCountHierarchy, weight: &PiecewiseConstantFn, k: DyadicResolution) -> Result<f64> {
    if weight.resolution() != k {
        return usage(format!("weight is at resolution {} but the statistic is at {k}", weight.resolution()));
    }
    let n = counts.sample_size() as f64;
    let total: f64 = counts
        .require(k)?
        .iter()
        .zip(weight.values())
        .filter(|&(&c, _)| c >= 2)
        .map(|(&c, &g)| g * collision_pairs(&[c]) as f64)
        .sum();
    Ok(k.k_f64() * total / (n * (n - 1.0)))
}

/// The cubic estimator with every x-integral weighted by `g`, given at `k1`.
pub fn weighted_cubic_ustat(sample: &[f64], weight: &PiecewiseConstantFn, ktriple: KTriple) -> Result<f64> {
    if sample.len() < 3 {
        return usage(format!("the cubic U-statistic needs n >= 3, got {}", sample.len()));
    }
    weighted_cubic_counts(&count_bins(sample, &ktriple.resolutions())?, weight, ktriple)
}

fn weighted_cubic_counts(counts: &BinCountHierarchy, weight: &PiecewiseConstantFn, ktriple: KTriple) -> Result<f64> {
    if weight.resolution() != ktriple.k1 {
        return usage(format!("weight is at resolution {} but k1 is {}", weight.resolution(), ktriple.k1));
    }
    let terms = weighted_terms(counts, ktriple, weight.values())?;
    Ok(terms.iter().zip(MULTIPLICITIES).map(|(t, m)| t * m).sum())
}

/// Oracle for [`weighted_quad_ustat`]: pair loop with the weight integrated by quadrature.
pub fn weighted_quad_ustat_naive(sample: &[f64], weight: &PiecewiseConstantFn, k: DyadicResolution) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return usage(format!("the quadratic U-statistic needs n >= 2, got {n}"));
    }
    let kf = k.k_f64();
    let mut total = 0.0;
    for (i, &u) in sample.iter().enumerate() {
        for (j, &v) in sample.iter().enumerate() {
            if i != j && crate::haar::kernel_eval(k, u, v)? != 0.0 {
                let bin = crate::haar::bin_index(k, u)? as f64;
                let (a, b) = ((bin - 1.0) / kf, bin / kf);
                // Stay strictly inside the bin so the right-closed edge is not sampled.
                let g = quad::integrate(|x| weight.eval_unchecked(x), a + 1e-12, b - 1e-12, 1e-13, 8).value;
                total += kf * kf * g * (b - a) / (b - a - 2e-12);
            }
        }
    }
    Ok(total / (n as f64 * (n - 1) as f64))
}

/// Oracle for [`weighted_cubic_ustat`]: triple loop with direct fine-bin integration.
pub fn weighted_cubic_ustat_naive(sample: &[f64], weight: &PiecewiseConstantFn, ktriple: KTriple) -> Result<f64> {
    if weight.resolution() > ktriple.k3 {
        return usage("weight must not be finer than k3");
    }
    let terms = naive_terms(sample, ktriple, Some(weight))?;
    Ok(terms.iter().zip(MULTIPLICITIES).map(|(t, m)| t * m).sum())
}

/// Random 50/50 split: `D1` gets `floor(n/2)` points.
pub fn split_sample<R: Rng + ?Sized>(sample: &[f64], rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    idx.shuffle(rng);
    let n1 = sample.len() / 2;
    let d1 = idx[..n1].iter().map(|&i| sample[i]).collect();
    let d2 = idx[n1..].iter().map(|&i| sample[i]).collect();
    (d1, d2)
}

/// Size of the pilot half for a sample of size `n`.
pub fn pilot_size(n: usize) -> usize {
    n / 2
}

/// Pilot resolution `dyadic(n1^{1/(1+2β)})`.
pub fn pilot_resolution(n1: usize, beta: f64) -> Result<DyadicResolution> {
    DyadicResolution::round_up((n1 as f64).powf(1.0 / (1.0 + 2.0 * beta)))
}

/// Adaptive version: `β̂` comes from the modified Lepski rule on `D1`;
/// `grid` must be built for `n1 = floor(n/2)`.
pub fn estimate_general<R: Rng + ?Sized>(
    sample: &[f64],
    spec: &FunctionalSpec,
    grid: &LepskiGrid,
    c_opt: f64,
    rng: &mut R,
) -> Result<GeneralEstimate> {
    check_size(sample.len())?;
    if grid.n != pilot_size(sample.len()) {
        return usage(format!(
            "grid was built for n = {} but the pilot half has {} points",
            grid.n,
            pilot_size(sample.len())
        ));
    }
    let (d1, d2) = split_sample(sample, rng);
    let selection = select_modified(&d1, grid, c_opt)?;
    let beta = selection.beta;
    let triple = choose_k_triple_with_k3(beta, d2.len(), k_star(d2.len(), beta)?)?;
    let mut est = corrections(&d1, &d2, spec, beta, triple)?;
    est.j_hat = Some(selection.j_hat);
    Ok(est)
}

/// Known-smoothness version with `k_dens`, `k1`, `k2`, `k3` all set from `beta`.
pub fn estimate_general_known_beta<R: Rng + ?Sized>(
    sample: &[f64],
    spec: &FunctionalSpec,
    beta: f64,
    rng: &mut R,
) -> Result<GeneralEstimate> {
    check_size(sample.len())?;
    let (d1, d2) = split_sample(sample, rng);
    let triple = choose_k_triple(beta, d2.len())?;
    corrections(&d1, &d2, spec, beta, triple)
}

fn check_size(n: usize) -> Result<()> {
    // Both halves need at least 8 points for the cubic resolutions.
    if n < 16 {
        usage(format!("the general estimator needs n >= 16, got {n}"))
    } else {
        Ok(())
    }
}

fn finite(values: &PiecewiseConstantFn, what: &str) -> Result<()> {
    if values.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        domain(format!("{what} is not finite on the clamped pilot"))
    }
}

fn corrections(d1: &[f64], d2: &[f64], spec: &FunctionalSpec, beta: f64, triple: KTriple) -> Result<GeneralEstimate> {
    let k_dens = pilot_resolution(d1.len(), beta)?.min(triple.k1);
    let raw = empirical_projection(d1, k_dens)?;
    let floor = spec.domain_floor();
    let clamped = raw.values().iter().any(|&v| v < floor);
    let pilot = raw.map(|v| v.max(floor));

    let t = pilot.map(|v| spec.value(v));
    let g1 = pilot.map(|v| spec.first(v));
    let g2 = pilot.map(|v| spec.second(v) / 2.0);
    let g3 = pilot.map(|v| spec.third(v) / 6.0);
    for (f, name) in [(&t, "T"), (&g1, "T'"), (&g2, "T''"), (&g3, "T'''")] {
        finite(f, name)?;
    }

    let k = triple.k3;
    let counts = count_bins(d2, &triple.resolutions())?;
    let mean = |g: &PiecewiseConstantFn| d2.iter().map(|&x| g.eval_unchecked(x)).sum::<f64>() / d2.len() as f64;
    let times = |a: &PiecewiseConstantFn, p: i32| a.zip_with(&pilot, |g, f| g * f.powi(p));
    let wq = |g: &PiecewiseConstantFn| weighted_quad_counts(&counts, &g.refine(k)?, k);

    let term0 = t.integral();
    let term1 = mean(&g1) - times(&g1, 1).integral();
    let term2 = wq(&g2)? - 2.0 * mean(&times(&g2, 1)) + times(&g2, 2).integral();
    let term3 = weighted_cubic_counts(&counts, &g3.refine(triple.k1)?, triple)? - 3.0 * wq(&times(&g3, 1))?
        + 3.0 * mean(&times(&g3, 2))
        - times(&g3, 3).integral();
    let term_values = [term0, term1, term2, term3];
    if term_values.iter().any(|v| !v.is_finite()) {
        return domain(format!("functional {} produced a non-finite correction", spec.name()));
    }
    Ok(GeneralEstimate {
        value: term_values.iter().sum(),
        term_values,
        pilot_resolution: k_dens,
        ktriple: triple,
        n1: d1.len(),
        n2: d2.len(),
        beta_hat: beta,
        j_hat: None,
        clamped,
    })
}
