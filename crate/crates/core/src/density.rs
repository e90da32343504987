//! Analytic density fixtures on `[0, 1]`.
//!
//! Each model knows its pdf, an exact sampler, its exact Haar projections
//! (bin averages at any dyadic resolution), and closed-form or quadrature
//! values of `∫ T(f)`.
//!
//! * `Uniform`: `f ≡ 1`.
//! * `LinearRamp { a }`: `f(x) = a + 2(1 - a) x`.
//! * `TrigPerturbed { amplitude, frequency }`: `f(x) = 1 + ρ sin(2π m x)`.
//! * `DyadicSelfSimilar { beta, depth, scale }`: `f = 1 + c Σ_i 2^{-iβ} h_i`
//!   where `h_i = ±1` on the left/right half of every level-`i` dyadic
//!   interval. Every Haar coefficient at level `i` equals `c 2^{-i(β+1/2)}`,
//!   so `∫f² - ∫f_k² = c² k^{-2β} / (1 - 2^{-2β})` exactly when the depth is
//!   unbounded.
//! * `PerturbedUniform { beta, v, amplitude, signs }`:
//!   `f(x) = 1 + Σ_i a_i A v^{-β} h(v x - i)` with `h(t) = sin(2π t)` on `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Result};
use crate::functional::{FunctionalKind, FunctionalSpec};
use crate::haar::{DyadicResolution, PiecewiseConstantFn};
use crate::quad;
use crate::rng::splitmix64;

const TAU: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

/// Levels evaluated explicitly for an unbounded self-similar density.
const SELF_SIMILAR_EVAL_LEVELS: u32 = 64;
/// Bits drawn level by level when sampling the self-similar density.
const SELF_SIMILAR_SAMPLE_BITS: u32 = 52;
/// Levels enumerated exactly when integrating a general `T` against the self-similar density.
const SELF_SIMILAR_ENUM_LEVELS: u32 = 20;

/// Sign pattern `a_i ∈ {-1, +1}` of the perturbed-uniform bumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    Positive,
    Alternating,
    /// Pseudo-random signs, a pure function of `(seed, i)`.
    Seeded(u64),
    Explicit(Vec<i8>),
}

impl SignPattern {
    pub fn sign(&self, i: usize) -> f64 {
        match self {
            SignPattern::Positive => 1.0,
            SignPattern::Alternating => {
                if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            SignPattern::Seeded(seed) => {
                let mut s = seed ^ (i as u64).wrapping_mul(0xd6e8_feb8_6659_fd93);
                if splitmix64(&mut s) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            SignPattern::Explicit(v) => v[i] as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityModel {
    Uniform,
    LinearRamp {
        a: f64,
    },
    TrigPerturbed {
        amplitude: f64,
        frequency: u32,
    },
    DyadicSelfSimilar {
        beta: f64,
        /// Deepest wavelet level; `None` keeps every level.
        #[serde(default)]
        depth: Option<u32>,
        scale: f64,
    },
    PerturbedUniform {
        beta: f64,
        v: u32,
        amplitude: f64,
        signs: SignPattern,
    },
}

/// How a functional value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Quadrature,
}

/// Reference value of `∫ T(f)` for a fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTruth {
    pub functional: String,
    pub value: f64,
    pub error: f64,
    pub provenance: Provenance,
}

/// Result of a grid check of the Hölder condition `|f(x) - f(y)| <= C |x - y|^β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub beta: f64,
    pub constant: f64,
    pub grid_size: usize,
    pub max_ratio: f64,
    pub within: bool,
}

/// Draws with the acceptance rate of the rejection step (1 for exact samplers).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    pub points: Vec<f64>,
    pub acceptance_rate: f64,
}

impl DensityModel {
    pub fn linear_ramp(a: f64) -> Result<Self> {
        let m = DensityModel::LinearRamp { a };
        m.validate()?;
        Ok(m)
    }

    pub fn trig_perturbed(amplitude: f64, frequency: u32) -> Result<Self> {
        let m = DensityModel::TrigPerturbed { amplitude, frequency };
        m.validate()?;
        Ok(m)
    }

    /// Self-similar fixture with `scale` chosen as `fraction * (1 - 2^{-β})`,
    /// i.e. `f` ranges over `[1 - fraction, 1 + fraction]` at unbounded depth.
    pub fn self_similar(beta: f64, fraction: f64) -> Result<Self> {
        let m = DensityModel::DyadicSelfSimilar { beta, depth: None, scale: fraction * (1.0 - 2f64.powf(-beta)) };
        m.validate()?;
        Ok(m)
    }

    pub fn perturbed_uniform(beta: f64, v: u32, amplitude: f64, signs: SignPattern) -> Result<Self> {
        let m = DensityModel::PerturbedUniform { beta, v, amplitude, signs };
        m.validate()?;
        Ok(m)
    }

    pub fn name(&self) -> &'static str {
        match self {
            DensityModel::Uniform => "uniform",
            DensityModel::LinearRamp { .. } => "linear_ramp",
            DensityModel::TrigPerturbed { .. } => "trig_perturbed",
            DensityModel::DyadicSelfSimilar { .. } => "dyadic_self_similar",
            DensityModel::PerturbedUniform { .. } => "perturbed_uniform",
        }
    }

    /// Hölder exponent the fixture is built around, if any.
    pub fn smoothness(&self) -> Option<f64> {
        match self {
            DensityModel::DyadicSelfSimilar { beta, .. } | DensityModel::PerturbedUniform { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensityModel::Uniform => Ok(()),
            DensityModel::LinearRamp { a } => {
                if *a > 0.0 && *a <= 1.0 {
                    Ok(())
                } else {
                    usage(format!("linear ramp intercept {a} must lie in (0, 1]"))
                }
            }
            DensityModel::TrigPerturbed { amplitude, frequency } => {
                if !(0.0..1.0).contains(amplitude) {
                    usage(format!("trig amplitude {amplitude} must lie in [0, 1)"))
                } else if *frequency == 0 {
                    usage("trig frequency must be positive")
                } else {
                    Ok(())
                }
            }
            DensityModel::DyadicSelfSimilar { beta, depth, scale } => {
                if !(*beta > 0.0 && *beta < 1.0) {
                    return usage(format!("self-similar beta {beta} must lie in (0, 1)"));
                }
                if let Some(d) = depth {
                    if *d >= SELF_SIMILAR_EVAL_LEVELS {
                        return usage(format!("self-similar depth {d} must be below {SELF_SIMILAR_EVAL_LEVELS}"));
                    }
                }
                if *scale < 0.0 || 1.0 - scale * self.self_similar_sup() <= 0.0 {
                    return usage(format!("self-similar scale {scale} does not keep the density positive"));
                }
                Ok(())
            }
            DensityModel::PerturbedUniform { beta, v, amplitude, signs } => {
                if *beta <= 0.0 || *v == 0 || *amplitude < 0.0 {
                    return usage("perturbed uniform needs beta > 0, v >= 1, amplitude >= 0");
                }
                if self.bump_height() > 1.0 {
                    return usage(format!(
                        "bump height A v^-beta = {} exceeds 1; the density would go negative",
                        self.bump_height()
                    ));
                }
                if let SignPattern::Explicit(s) = signs {
                    if s.len() != *v as usize || s.iter().any(|&x| x != 1 && x != -1) {
                        return usage("explicit signs must be v values in {-1, +1}");
                    }
                }
                Ok(())
            }
        }
    }

    fn ss_params(&self) -> (f64, Option<u32>, f64) {
        match self {
            DensityModel::DyadicSelfSimilar { beta, depth, scale } => (*beta, *depth, *scale),
            _ => unreachable!("not a self-similar model"),
        }
    }

    /// `Σ_i 2^{-iβ}` over the model's levels.
    fn self_similar_sup(&self) -> f64 {
        let (beta, depth, _) = self.ss_params();
        let r = 2f64.powf(-beta);
        match depth {
            None => 1.0 / (1.0 - r),
            Some(d) => (1.0 - r.powi(d as i32 + 1)) / (1.0 - r),
        }
    }

    /// `Σ_{i >= from} 2^{-2iβ}` over the model's levels.
    fn self_similar_tail_energy(&self, from: u32) -> f64 {
        let (beta, depth, _) = self.ss_params();
        let r = 2f64.powf(-2.0 * beta);
        match depth {
            None => r.powi(from as i32) / (1.0 - r),
            Some(d) if from > d => 0.0,
            Some(d) => (r.powi(from as i32) - r.powi(d as i32 + 1)) / (1.0 - r),
        }
    }

    /// `A v^{-β}`, the peak height of each perturbed-uniform bump.
    fn bump_height(&self) -> f64 {
        match self {
            DensityModel::PerturbedUniform { beta, v, amplitude, .. } => amplitude * (*v as f64).powf(-beta),
            _ => 0.0,
        }
    }

    pub fn f_min(&self) -> f64 {
        match self {
            DensityModel::Uniform => 1.0,
            DensityModel::LinearRamp { a } => *a,
            DensityModel::TrigPerturbed { amplitude, .. } => 1.0 - amplitude,
            DensityModel::DyadicSelfSimilar { scale, .. } => 1.0 - scale * self.self_similar_sup(),
            DensityModel::PerturbedUniform { .. } => 1.0 - self.bump_height(),
        }
    }

    pub fn f_max(&self) -> f64 {
        match self {
            DensityModel::Uniform => 1.0,
            DensityModel::LinearRamp { a } => 2.0 - a,
            DensityModel::TrigPerturbed { amplitude, .. } => 1.0 + amplitude,
            DensityModel::DyadicSelfSimilar { scale, .. } => 1.0 + scale * self.self_similar_sup(),
            DensityModel::PerturbedUniform { .. } => 1.0 + self.bump_height(),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("pdf evaluated at {x}, outside [0, 1]"));
        }
        Ok(self.pdf_unchecked(x))
    }

    fn pdf_unchecked(&self, x: f64) -> f64 {
        match self {
            DensityModel::Uniform => 1.0,
            DensityModel::LinearRamp { a } => a + 2.0 * (1.0 - a) * x,
            DensityModel::TrigPerturbed { amplitude, frequency } => 1.0 + amplitude * (TAU * *frequency as f64 * x).sin(),
            DensityModel::DyadicSelfSimilar { .. } => {
                let (beta, depth, scale) = self.ss_params();
                let levels = depth.map_or(SELF_SIMILAR_EVAL_LEVELS, |d| d + 1);
                let mut s = 0.0;
                for i in 0..levels {
                    // Zero-based bin at level i + 1; even bins are left halves.
                    let bin = (x * 2f64.powi(i as i32 + 1)).ceil().max(1.0) - 1.0;
                    let h = if bin % 2.0 == 0.0 { 1.0 } else { -1.0 };
                    s += 2f64.powf(-(i as f64) * beta) * h;
                }
                if depth.is_none() {
                    // Right-closed bins put every dyadic point in the right half below the explicit levels.
                    let r = 2f64.powf(-beta);
                    s -= r.powi(levels as i32) / (1.0 - r);
                }
                1.0 + scale * s
            }
            DensityModel::PerturbedUniform { v, signs, .. } => {
                let vf = *v as f64;
                let block = ((x * vf).ceil() as usize).clamp(1, *v as usize) - 1;
                let t = x * vf - block as f64;
                1.0 + signs.sign(block) * self.bump_height() * (TAU * t).sin()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.sample_with_stats(n, rng)?.points)
    }

    pub fn sample_with_stats<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SampleDraw> {
        if n == 0 {
            return usage("sample size must be at least 1");
        }
        self.validate()?;
        let mut points = Vec::with_capacity(n);
        let mut proposals = 0usize;
        match self {
            DensityModel::Uniform => points.extend((0..n).map(|_| rng.random::<f64>())),
            DensityModel::LinearRamp { a } => {
                // F(x) = a x + (1 - a) x², inverted in a cancellation-free form.
                points.extend((0..n).map(|_| {
                    let u: f64 = rng.random();
                    2.0 * u / (a + (a * a + 4.0 * (1.0 - a) * u).sqrt())
                }))
            }
            DensityModel::TrigPerturbed { .. } => {
                let envelope = self.f_max();
                while points.len() < n {
                    proposals += 1;
                    let x: f64 = rng.random();
                    if rng.random::<f64>() * envelope <= self.pdf_unchecked(x) {
                        points.push(x);
                    }
                }
            }
            DensityModel::DyadicSelfSimilar { .. } => {
                let (beta, depth, scale) = self.ss_params();
                let bits = depth.map_or(SELF_SIMILAR_SAMPLE_BITS, |d| (d + 1).min(SELF_SIMILAR_SAMPLE_BITS));
                let weights: Vec<f64> = (0..bits).map(|i| scale * 2f64.powf(-(i as f64) * beta)).collect();
                for _ in 0..n {
                    // Walk down the dyadic tree: a level-i interval with relative
                    // height m sends (m + w_i) / (2m) of its mass to the left child.
                    let mut height = 1.0;
                    let mut index: u64 = 0;
                    for &w in &weights {
                        index <<= 1;
                        if rng.random::<f64>() * 2.0 * height < height + w {
                            height += w;
                        } else {
                            index |= 1;
                            height -= w;
                        }
                    }
                    let u: f64 = rng.random();
                    points.push((index as f64 + u) / 2f64.powi(bits as i32));
                }
            }
            DensityModel::PerturbedUniform { v, signs, .. } => {
                // Every block carries mass exactly 1/v because ∫h = 0.
                let vf = *v as f64;
                let height = self.bump_height();
                for _ in 0..n {
                    let u: f64 = rng.random::<f64>() * vf;
                    let block = (u.floor() as usize).min(*v as usize - 1);
                    let target = u - block as f64;
                    let t = invert_bump_cdf(signs.sign(block) * height, target);
                    points.push(((block as f64 + t) / vf).min(1.0));
                }
            }
        }
        let acceptance_rate = if proposals == 0 { 1.0 } else { n as f64 / proposals as f64 };
        Ok(SampleDraw { points, acceptance_rate })
    }

    /// Haar projection `f_k`: the exact average of `f` over each bin.
    pub fn projection(&self, k: DyadicResolution) -> PiecewiseConstantFn {
        let kk = k.k();
        let kf = k.k_f64();
        let values: Vec<f64> = match self {
            DensityModel::Uniform => vec![1.0; kk],
            DensityModel::LinearRamp { a } => {
                (0..kk).map(|j| a + (1.0 - a) * (2.0 * j as f64 + 1.0) / kf).collect()
            }
            DensityModel::TrigPerturbed { amplitude, frequency } => {
                let m = *frequency as f64;
                let damp = sinc(PI * m / kf);
                (0..kk)
                    .map(|j| {
                        let mid = (j as f64 + 0.5) / kf;
                        1.0 + amplitude * (TAU * m * mid).sin() * damp
                    })
                    .collect()
            }
            DensityModel::DyadicSelfSimilar { .. } => {
                let (beta, depth, scale) = self.ss_params();
                let mut values = vec![1.0];
                for i in 0..k.level() {
                    let w = if depth.is_none_or(|d| i <= d) { scale * 2f64.powf(-(i as f64) * beta) } else { 0.0 };
                    values = values.iter().flat_map(|&p| [p + w, p - w]).collect();
                }
                values
            }
            DensityModel::PerturbedUniform { v, signs, .. } => {
                let vf = *v as f64;
                let height = self.bump_height();
                (0..kk)
                    .map(|j| {
                        let x0 = j as f64 / kf;
                        let x1 = (j + 1) as f64 / kf;
                        let first = (x0 * vf).floor() as usize;
                        let last = ((x1 * vf).ceil() as usize).min(*v as usize);
                        let mut bump = 0.0;
                        for b in first..last {
                            let t0 = (x0 * vf - b as f64).max(0.0);
                            let t1 = (x1 * vf - b as f64).min(1.0);
                            if t1 > t0 {
                                // ∫_{t0}^{t1} sin(2πt) dt, written without cancellation.
                                let mass = (PI * (t0 + t1)).sin() * (PI * (t1 - t0)).sin() / PI;
                                bump += signs.sign(b) * mass;
                            }
                        }
                        1.0 + height * bump * kf / vf
                    })
                    .collect()
            }
        };
        PiecewiseConstantFn::new(k, values).expect("one value per bin")
    }

    /// `∫ f_k^p` from the exact bin averages.
    pub fn projected_functional(&self, k: DyadicResolution, p: u32) -> Result<f64> {
        if !(p == 2 || p == 3) {
            return usage(format!("projected functional supports powers 2 and 3, got {p}"));
        }
        Ok(self.projection(k).map(|v| v.powi(p as i32)).integral())
    }

    /// Closed-form `∫ f^p` where one exists.
    pub fn power_integral(&self, p: f64) -> Option<f64> {
        let integer = |q: f64| (q - 2.0).abs() < 1e-15 || (q - 3.0).abs() < 1e-15;
        match self {
            DensityModel::Uniform => Some(1.0),
            DensityModel::LinearRamp { a } => {
                let b = 2.0 * (1.0 - a);
                if b == 0.0 {
                    Some(1.0)
                } else if (p + 1.0).abs() < 1e-15 {
                    Some(((a + b) / a).ln() / b)
                } else {
                    Some(((a + b).powf(p + 1.0) - a.powf(p + 1.0)) / (b * (p + 1.0)))
                }
            }
            DensityModel::TrigPerturbed { amplitude, .. } if integer(p) => {
                let rho2 = amplitude * amplitude;
                Some(if p < 2.5 { 1.0 + rho2 / 2.0 } else { 1.0 + 1.5 * rho2 })
            }
            DensityModel::PerturbedUniform { .. } if integer(p) => {
                let h2 = self.bump_height().powi(2);
                Some(if p < 2.5 { 1.0 + h2 / 2.0 } else { 1.0 + 1.5 * h2 })
            }
            DensityModel::DyadicSelfSimilar { scale, .. } if integer(p) => {
                // Under Lebesgue measure the h_i are independent fair signs.
                let e = scale * scale * self.self_similar_tail_energy(0);
                Some(if p < 2.5 { 1.0 + e } else { 1.0 + 3.0 * e })
            }
            _ => None,
        }
    }

    /// Reference value of `∫ T(f)`: closed form when available, quadrature otherwise.
    pub fn true_functional(&self, spec: &FunctionalSpec) -> Result<FunctionalTruth> {
        let (lo, hi) = (self.f_min(), self.f_max());
        for y in [lo, 0.5 * (lo + hi), hi] {
            if !spec.value(y).is_finite() {
                return domain(format!("functional {} is undefined at density value {y}", spec.name()));
            }
        }
        let closed = match spec.kind() {
            FunctionalKind::Power(p) => self.power_integral(*p),
            FunctionalKind::Entropy => match self {
                DensityModel::Uniform => Some(0.0),
                DensityModel::LinearRamp { a } => {
                    let b = 2.0 * (1.0 - a);
                    if b == 0.0 {
                        Some(0.0)
                    } else {
                        // ∫_a^{a+b} y ln y dy / b
                        let g = |y: f64| if y == 0.0 { 0.0 } else { y * y * (2.0 * y.ln() - 1.0) / 4.0 };
                        Some((g(a + b) - g(*a)) / b)
                    }
                }
                _ => None,
            },
            FunctionalKind::Custom => None,
        };
        if let Some(value) = closed {
            return Ok(FunctionalTruth {
                functional: spec.name().to_string(),
                value,
                error: 0.0,
                provenance: Provenance::ClosedForm,
            });
        }
        let (value, error) = self.quadrature(spec);
        Ok(FunctionalTruth { functional: spec.name().to_string(), value, error, provenance: Provenance::Quadrature })
    }

    fn quadrature(&self, spec: &FunctionalSpec) -> (f64, f64) {
        let t = |y: f64| spec.value(y);
        match self {
            DensityModel::Uniform => (t(1.0), 0.0),
            DensityModel::LinearRamp { .. } => {
                let q = quad::integrate(|x| t(self.pdf_unchecked(x)), 0.0, 1.0, 1e-12, 40);
                (q.value, q.error)
            }
            DensityModel::TrigPerturbed { amplitude, .. } => {
                // Each period contributes the same integral.
                let q = quad::integrate(|s| t(1.0 + amplitude * (TAU * s).sin()), 0.0, 1.0, 1e-12, 40);
                (q.value, q.error)
            }
            DensityModel::PerturbedUniform { .. } => {
                // T(1 - αh(s)) = T(1 + αh(s + 1/2)), so the signs do not matter.
                let height = self.bump_height();
                let q = quad::integrate(|s| t(1.0 + height * (TAU * s).sin()), 0.0, 1.0, 1e-12, 40);
                (q.value, q.error)
            }
            DensityModel::DyadicSelfSimilar { .. } => {
                let levels = |d: u32| self.self_similar_enumeration(spec, d);
                let (_, depth, _) = self.ss_params();
                match depth {
                    Some(d) if d < SELF_SIMILAR_ENUM_LEVELS => (levels(d + 1), 0.0),
                    _ => {
                        let fine = levels(SELF_SIMILAR_ENUM_LEVELS);
                        let coarse = levels(SELF_SIMILAR_ENUM_LEVELS - 2);
                        (fine, (fine - coarse).abs())
                    }
                }
            }
        }
    }

    /// `E T(1 + cY)` with the first `levels` signs enumerated and the rest
    /// handled by a second-order Taylor correction.
    fn self_similar_enumeration(&self, spec: &FunctionalSpec, levels: u32) -> f64 {
        let (beta, _, scale) = self.ss_params();
        let mut heights = vec![1.0];
        for i in 0..levels {
            let w = scale * 2f64.powf(-(i as f64) * beta);
            heights = heights.iter().flat_map(|&p| [p + w, p - w]).collect();
        }
        let tail = scale * scale * self.self_similar_tail_energy(levels);
        heights.iter().map(|&z| spec.value(z) + 0.5 * spec.second(z) * tail).sum::<f64>() / heights.len() as f64
    }

    /// Grid check of the Hölder condition with exponent `beta` and constant `c`.
    pub fn holder_verify(&self, beta: f64, c: f64, grid_size: usize) -> HolderReport {
        let grid: Vec<f64> = (0..=grid_size).map(|i| i as f64 / grid_size as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&x| self.pdf_unchecked(x)).collect();
        let mut max_ratio: f64 = 0.0;
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                let ratio = (values[j] - values[i]).abs() / (grid[j] - grid[i]).powf(beta);
                max_ratio = max_ratio.max(ratio);
            }
        }
        HolderReport { beta, constant: c, grid_size, max_ratio, within: max_ratio <= c }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Solves `t + s (1 - cos 2πt) / (2π) = target` on `[0, 1]` for `|s| <= 1`.
fn invert_bump_cdf(s: f64, target: f64) -> f64 {
    let g = |t: f64| t + s * (1.0 - (TAU * t).cos()) / TAU - target;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = target;
    for _ in 0..100 {
        let value = g(t);
        if value > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = 1.0 + s * (TAU * t).sin();
        let mut next = if slope > 1e-12 { t - value / slope } else { 0.5 * (lo + hi) };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() < 1e-15 || hi - lo < 1e-15 {
            return next;
        }
        t = next;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn res(k: u64) -> DyadicResolution {
        DyadicResolution::from_k(k).unwrap()
    }

    fn fixtures() -> Vec<DensityModel> {
        vec![
            DensityModel::Uniform,
            DensityModel::linear_ramp(0.5).unwrap(),
            DensityModel::trig_perturbed(0.5, 3).unwrap(),
            DensityModel::self_similar(0.2, 0.5).unwrap(),
            DensityModel::DyadicSelfSimilar { beta: 0.3, depth: Some(6), scale: 0.1 },
            DensityModel::perturbed_uniform(0.2, 64, 1.0, SignPattern::Seeded(3)).unwrap(),
        ]
    }

    #[test]
    fn pdf_examples() {
        assert_eq!(DensityModel::Uniform.pdf(0.42).unwrap(), 1.0);
        assert_eq!(DensityModel::linear_ramp(0.5).unwrap().pdf(0.5).unwrap(), 1.0);
        let trig = DensityModel::trig_perturbed(0.5, 1).unwrap();
        assert!((trig.pdf(0.25).unwrap() - 1.5).abs() < 1e-15);
        assert!(DensityModel::Uniform.pdf(1.2).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        for m in fixtures() {
            // Smooth models by quadrature; every model through its exact bin masses.
            if !matches!(m, DensityModel::DyadicSelfSimilar { .. }) {
                let q = quad::integrate(|x| m.pdf_unchecked(x), 0.0, 1.0, 1e-13, 40);
                assert!((q.value - 1.0).abs() < 1e-10, "{m:?}: {}", q.value);
            }
            for level in [0, 3, 10] {
                let total = m.projection(DyadicResolution::from_level(level).unwrap()).integral();
                assert!((total - 1.0).abs() < 1e-12, "{m:?}: {total}");
            }
            assert!(m.f_min() >= 0.0 && m.f_max() < f64::INFINITY);
        }
    }

    #[test]
    fn finite_depth_self_similar_matches_quadrature() {
        let m = DensityModel::DyadicSelfSimilar { beta: 0.3, depth: Some(6), scale: 0.1 };
        // Piecewise constant on 2^7 bins: integrate bin by bin.
        let total: f64 = (0..128)
            .map(|j| {
                let (a, b) = (j as f64 / 128.0, (j + 1) as f64 / 128.0);
                quad::integrate(|x| m.pdf_unchecked(x), a + 1e-12, b - 1e-12, 1e-14, 10).value
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        let p = m.projection(res(128));
        for j in 0..128 {
            let x = (j as f64 + 0.5) / 128.0;
            assert!((p.values()[j] - m.pdf_unchecked(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn samplers_are_deterministic_and_in_range() {
        for m in fixtures() {
            let a = m.sample(500, &mut stream(1, Purpose::Example, 500, 0)).unwrap();
            let b = m.sample(500, &mut stream(1, Purpose::Example, 500, 0)).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|x| (0.0..=1.0).contains(x)));
        }
        assert!(DensityModel::Uniform.sample(0, &mut stream(1, Purpose::Example, 0, 0)).is_err());
    }

    #[test]
    fn linear_ramp_sample_mean() {
        let m = DensityModel::linear_ramp(0.5).unwrap();
        let n = 1_000_000;
        let x = m.sample(n, &mut stream(11, Purpose::Example, n as u64, 0)).unwrap();
        let mean = x.iter().sum::<f64>() / n as f64;
        // E X = 7/12, Var X = ∫x²(0.5+x) - (7/12)² = 5/12 - 49/144 = 11/144.
        let se = (11.0f64 / 144.0 / n as f64).sqrt();
        assert!((mean - 7.0 / 12.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn samplers_match_bin_masses() {
        // Chi-square style check against exact bin probabilities at k = 16.
        let k = res(16);
        let n = 200_000;
        for m in fixtures() {
            let x = m.sample(n, &mut stream(5, Purpose::Example, n as u64, 1)).unwrap();
            let mut counts = [0f64; 16];
            for &xi in &x {
                counts[k.bin0(xi)] += 1.0;
            }
            let probs = m.projection(k);
            let chi2: f64 = probs
                .values()
                .iter()
                .zip(counts)
                .map(|(&fbar, c)| {
                    let e = fbar / 16.0 * n as f64;
                    (c - e).powi(2) / e
                })
                .sum();
            // 15 degrees of freedom; the 0.9999 quantile is about 44.
            assert!(chi2 < 44.0, "{m:?}: chi2 = {chi2}");
        }
    }

    #[test]
    fn functional_examples() {
        let ramp = DensityModel::linear_ramp(0.5).unwrap();
        assert_eq!(DensityModel::Uniform.true_functional(&FunctionalSpec::square()).unwrap().value, 1.0);
        assert!((ramp.true_functional(&FunctionalSpec::cube()).unwrap().value - 1.25).abs() < 1e-14);
        assert!((ramp.true_functional(&FunctionalSpec::square()).unwrap().value - 13.0 / 12.0).abs() < 1e-14);
        // Closed forms agree with quadrature of the pdf.
        for m in fixtures() {
            for spec in [FunctionalSpec::square(), FunctionalSpec::cube(), FunctionalSpec::entropy(1e-3)] {
                let truth = m.true_functional(&spec).unwrap();
                let (q, err) = m.quadrature(&spec);
                assert!(err < 1e-8, "{m:?} {}: quadrature error {err}", spec.name());
                assert!((truth.value - q).abs() < 1e-9, "{m:?} {}: {} vs {q}", spec.name(), truth.value);
            }
        }
    }

    #[test]
    fn projected_functional_examples() {
        let ramp = DensityModel::linear_ramp(0.5).unwrap();
        assert_eq!(DensityModel::Uniform.projected_functional(res(64), 2).unwrap(), 1.0);
        assert!((ramp.projected_functional(res(1), 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((ramp.projected_functional(res(2), 2).unwrap() - 1.0625).abs() < 1e-15);
        assert!(ramp.projected_functional(res(2), 4).is_err());
    }

    #[test]
    fn projected_square_is_nondecreasing_and_converges() {
        for m in fixtures() {
            let truth = m.power_integral(2.0).unwrap();
            let mut prev = 0.0;
            for level in 0..16 {
                let v = m.projected_functional(DyadicResolution::from_level(level).unwrap(), 2).unwrap();
                assert!(v >= prev - 1e-13, "{m:?} at level {level}");
                assert!(v <= truth + 1e-12);
                prev = v;
            }
            if !matches!(m, DensityModel::DyadicSelfSimilar { depth: None, .. }) {
                assert!(truth - prev < 1e-5, "{m:?}: gap {}", truth - prev);
            }
        }
    }

    #[test]
    fn self_similar_gap_is_exact_power_law() {
        let beta = 0.2;
        let m = DensityModel::self_similar(beta, 0.5).unwrap();
        let DensityModel::DyadicSelfSimilar { scale, .. } = m else { unreachable!() };
        let total = m.power_integral(2.0).unwrap();
        let r = 2f64.powf(-2.0 * beta);
        for level in 0..18 {
            let k = DyadicResolution::from_level(level).unwrap();
            let gap = total - m.projected_functional(k, 2).unwrap();
            let exact = scale * scale * k.k_f64().powf(-2.0 * beta) / (1.0 - r);
            assert!((gap - exact).abs() < 1e-14, "level {level}: {gap} vs {exact}");
        }
    }

    #[test]
    fn perturbed_uniform_square_is_sign_independent() {
        let plus = DensityModel::perturbed_uniform(0.2, 64, 1.0, SignPattern::Positive).unwrap();
        let mixed = DensityModel::perturbed_uniform(0.2, 64, 1.0, SignPattern::Seeded(9)).unwrap();
        let k = res(1 << 12);
        let a = plus.projected_functional(k, 2).unwrap();
        let b = mixed.projected_functional(k, 2).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(plus.power_integral(2.0), mixed.power_integral(2.0));
        // Bins coarser than a block see whole periods only.
        assert!((plus.projected_functional(res(32), 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn holder_examples() {
        assert_eq!(DensityModel::Uniform.holder_verify(0.2, 1.0, 200).max_ratio, 0.0);
        let ramp = DensityModel::linear_ramp(0.5).unwrap().holder_verify(1.0, 1.0, 400);
        assert!((ramp.max_ratio - 1.0).abs() < 1e-9);
        // |g(x) - g(y)| <= min(2α, 2πα v|δ|) gives the constant 2π^β A <= 2π A.
        let amplitude = 1.0;
        let pu = DensityModel::perturbed_uniform(0.2, 64, amplitude, SignPattern::Seeded(1)).unwrap();
        let report = pu.holder_verify(0.2, TAU * amplitude, 2048);
        assert!(report.within, "{report:?}");
        assert!(report.max_ratio <= 2.0 * PI.powf(0.2) * amplitude + 1e-9);
    }

    #[test]
    fn validation_errors() {
        assert!(DensityModel::linear_ramp(0.0).is_err());
        assert!(DensityModel::trig_perturbed(1.0, 1).is_err());
        assert!(DensityModel::perturbed_uniform(0.2, 64, 3.0, SignPattern::Positive).is_err());
        assert!(DensityModel::perturbed_uniform(0.2, 2, 1.0, SignPattern::Explicit(vec![1, 0])).is_err());
        assert!(DensityModel::DyadicSelfSimilar { beta: 0.2, depth: None, scale: 0.2 }.validate().is_err());
    }

    #[test]
    fn bump_inverse_cdf() {
        for s in [-1.0, -0.4, 0.0, 0.7, 1.0] {
            for target in [0.0, 0.1, 0.5, 0.93, 0.999_999] {
                let t = invert_bump_cdf(s, target);
                let g = t + s * (1.0 - (TAU * t).cos()) / TAU;
                assert!((g - target).abs() < 1e-12, "s={s} target={target}");
            }
        }
    }
}
