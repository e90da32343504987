//! Monte Carlo experiments: configuration, deterministic parallel runs,
//! CSV and JSON output, and log-log rate regression.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cubic::{choose_k_triple, cubic_estimator_fast};
use crate::density::DensityModel;
use crate::error::{usage, Error, Result};
use crate::functional::FunctionalSpec;
use crate::general::{estimate_general, estimate_general_known_beta, pilot_size};
use crate::haar::{count_bins, DyadicResolution};
use crate::lepski::{adaptive_cubic, build_grid, calibrate_threshold, k_of_beta, select_modified, Calibration, LepskiGrid};
use crate::quadratic::quad_ustat_fast;
use crate::rng::{stream, Purpose, RNG_ALGORITHM};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "HAARFUNC_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// `U_n^(k)` at a fixed `k`, at `k = dyadic(k_per_n * n)`, or at `k(β)`.
    Quadratic {
        #[serde(default)]
        k: Option<u64>,
        #[serde(default)]
        k_per_n: Option<f64>,
        #[serde(default)]
        beta: Option<f64>,
    },
    QuadraticAdaptive,
    Cubic {
        beta: f64,
    },
    CubicAdaptive,
    General {
        functional: String,
        /// Known smoothness; adaptive selection when absent.
        #[serde(default)]
        beta: Option<f64>,
        /// Defaults to half the model's lower density bound.
        #[serde(default)]
        domain_floor: Option<f64>,
    },
}

impl EstimatorSpec {
    fn is_adaptive(&self) -> bool {
        matches!(
            self,
            EstimatorSpec::QuadraticAdaptive | EstimatorSpec::CubicAdaptive | EstimatorSpec::General { beta: None, .. }
        )
    }

    fn min_n(&self) -> usize {
        match self {
            EstimatorSpec::Quadratic { .. } | EstimatorSpec::QuadraticAdaptive => 8,
            EstimatorSpec::Cubic { .. } | EstimatorSpec::CubicAdaptive => 8,
            EstimatorSpec::General { beta: None, .. } => 32,
            EstimatorSpec::General { .. } => 16,
        }
    }
}

/// A threshold constant, or the keyword `"calibrate"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum COpt {
    Value(f64),
    Keyword(CalibrateKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrateKeyword {
    Calibrate,
}

impl Default for COpt {
    fn default() -> Self {
        COpt::Keyword(CalibrateKeyword::Calibrate)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

fn default_d() -> f64 {
    2.0
}

fn default_calibration_reps() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: DensityModel,
    pub estimator: EstimatorSpec,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default)]
    pub c_opt: COpt,
    #[serde(default = "default_calibration_reps")]
    pub calibration_reps: usize,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.reps == 0 {
            return usage("reps must be at least 1");
        }
        if self.n_list.is_empty() {
            return usage("n_list is empty");
        }
        let min = self.estimator.min_n();
        if let Some(&n) = self.n_list.iter().find(|&&n| n < min) {
            return usage(format!("n = {n} is below the estimator minimum {min}"));
        }
        if !(self.d > 1.0) {
            return usage(format!("d must exceed 1, got {}", self.d));
        }
        if let COpt::Value(c) = self.c_opt {
            if !(c >= 0.0) {
                return usage(format!("c_opt must be nonnegative, got {c}"));
            }
        }
        if let EstimatorSpec::General { functional, domain_floor, .. } = &self.estimator {
            FunctionalSpec::builtin(functional)?;
            if let Some(f) = domain_floor {
                if !(*f > 0.0) {
                    return usage("domain_floor must be positive");
                }
            }
        }
        Ok(())
    }

    /// The functional the estimator targets, with its domain floor set.
    pub fn target(&self) -> Result<FunctionalSpec> {
        match &self.estimator {
            EstimatorSpec::Quadratic { .. } | EstimatorSpec::QuadraticAdaptive => Ok(FunctionalSpec::square()),
            EstimatorSpec::Cubic { .. } | EstimatorSpec::CubicAdaptive => Ok(FunctionalSpec::cube()),
            EstimatorSpec::General { functional, domain_floor, .. } => {
                let spec = FunctionalSpec::builtin(functional)?;
                match domain_floor {
                    Some(f) => spec.with_floor(*f),
                    None if self.model.f_min() > 0.0 => spec.with_floor(self.model.f_min() / 2.0),
                    None => Ok(spec),
                }
            }
        }
    }

    /// Sample size the selection grid is built for.
    fn grid_n(&self, n: usize) -> usize {
        match self.estimator {
            EstimatorSpec::General { .. } => pilot_size(n),
            _ => n,
        }
    }
}

/// One replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub n: usize,
    pub rep: usize,
    pub estimate: f64,
    pub truth: f64,
    pub selected_j: Option<usize>,
    pub k3_used: Option<u64>,
    pub flags: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub n: usize,
    pub grid_n: usize,
    pub c_opt: f64,
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResults {
    pub rows: Vec<McRow>,
    pub thresholds: Vec<CalibrationRecord>,
    pub truth: f64,
}

struct Outcome {
    estimate: f64,
    selected_j: Option<usize>,
    k3_used: Option<u64>,
    flags: Vec<&'static str>,
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    target: FunctionalSpec,
    grid: Option<LepskiGrid>,
    c_opt: f64,
}

fn estimate_once(ctx: &Context<'_>, n: usize, rep: usize) -> Result<Outcome> {
    let config = ctx.config;
    let mut rng = stream(config.seed, Purpose::Simulation, n as u64, rep as u64);
    let x = config.model.sample(n, &mut rng)?;
    let grid = || ctx.grid.as_ref().expect("adaptive estimators carry a grid");
    let mut flags = Vec::new();
    let outcome = match &config.estimator {
        EstimatorSpec::Quadratic { k, k_per_n, beta } => {
            let k = match (k, k_per_n, beta) {
                (Some(k), None, None) => DyadicResolution::from_k(*k)?,
                (None, Some(f), None) => DyadicResolution::round_up(f * n as f64)?,
                (None, None, Some(b)) => k_of_beta(n, *b)?,
                _ => return usage("quadratic estimator needs exactly one of k, k_per_n, beta"),
            };
            let est = quad_ustat_fast(&count_bins(&x, &[k])?, k)?;
            Outcome { estimate: est.value, selected_j: None, k3_used: Some(k.k() as u64), flags }
        }
        EstimatorSpec::QuadraticAdaptive => {
            let sel = select_modified(&x, grid(), ctx.c_opt)?;
            if sel.top_fallback {
                flags.push("top_fallback");
            }
            Outcome { estimate: sel.estimate, selected_j: Some(sel.j_hat), k3_used: Some(sel.k_star.k() as u64), flags }
        }
        EstimatorSpec::Cubic { beta } => {
            let triple = choose_k_triple(*beta, n)?;
            let est = cubic_estimator_fast(&count_bins(&x, &triple.resolutions())?, triple)?;
            Outcome { estimate: est.value, selected_j: None, k3_used: Some(triple.k3.k() as u64), flags }
        }
        EstimatorSpec::CubicAdaptive => {
            let a = adaptive_cubic(&x, grid(), ctx.c_opt)?;
            if a.selection.top_fallback {
                flags.push("top_fallback");
            }
            if a.k3_raised {
                flags.push("k3_raised");
            }
            Outcome {
                estimate: a.estimate.value,
                selected_j: Some(a.selection.j_hat),
                k3_used: Some(a.estimate.ktriple.k3.k() as u64),
                flags,
            }
        }
        EstimatorSpec::General { beta, .. } => {
            let mut split = stream(config.seed, Purpose::Split, n as u64, rep as u64);
            let est = match beta {
                Some(b) => estimate_general_known_beta(&x, &ctx.target, *b, &mut split)?,
                None => estimate_general(&x, &ctx.target, grid(), ctx.c_opt, &mut split)?,
            };
            if est.clamped {
                flags.push("clamped");
            }
            Outcome { estimate: est.value, selected_j: est.j_hat, k3_used: Some(est.ktriple.k3.k() as u64), flags }
        }
    };
    Ok(outcome)
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|&t| t > 0)
}

/// Runs every `(n, rep)` replication with the thread count from [`THREADS_ENV`].
pub fn run_mc(config: &ExperimentConfig) -> Result<McResults> {
    run_mc_with_threads(config, threads_from_env())
}

/// As [`run_mc`] with an explicit worker count (`None` for the rayon default).
/// Rows come back ordered by `(n, rep)` whatever the schedule.
pub fn run_mc_with_threads(config: &ExperimentConfig, threads: Option<usize>) -> Result<McResults> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_mc_inner(config))
}

fn run_mc_inner(config: &ExperimentConfig) -> Result<McResults> {
    let target = config.target()?;
    let truth = config.model.true_functional(&target)?.value;
    let mut rows = Vec::new();
    let mut thresholds = Vec::new();
    for &n in &config.n_list {
        let grid_n = config.grid_n(n);
        let (grid, c_opt, calibration) = if config.estimator.is_adaptive() {
            let grid = build_grid(grid_n, config.d)?;
            let (c, cal) = match config.c_opt {
                COpt::Value(c) => (c, None),
                COpt::Keyword(_) => {
                    let cal = calibrate_threshold(&grid, config.calibration_reps, config.seed)?;
                    (cal.c_opt, Some(cal))
                }
            };
            (Some(grid), c, cal)
        } else {
            (None, f64::NAN, None)
        };
        thresholds.push(CalibrationRecord { n, grid_n, c_opt, calibration });
        let ctx = Context { config, target: target.clone(), grid, c_opt };
        let block: Vec<McRow> = (0..config.reps)
            .into_par_iter()
            .map(|rep| match estimate_once(&ctx, n, rep) {
                Ok(o) => McRow {
                    n,
                    rep,
                    estimate: o.estimate,
                    truth,
                    selected_j: o.selected_j,
                    k3_used: o.k3_used,
                    flags: o.flags.join("|"),
                },
                Err(e) => McRow {
                    n,
                    rep,
                    estimate: f64::NAN,
                    truth,
                    selected_j: None,
                    k3_used: None,
                    flags: format!("error: {e}").replace([',', '\n'], ";"),
                },
            })
            .collect();
        rows.extend(block);
    }
    Ok(McResults { rows, thresholds, truth })
}

/// 17 significant digits; non-finite values as `NaN`, `inf`, `-inf`.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

const CSV_HEADER: [&str; 7] = ["n", "rep", "estimate", "truth", "selected_j", "k3_used", "flags"];

pub fn write_csv<W: Write>(rows: &[McRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.rep.to_string(),
            format_float(r.estimate),
            format_float(r.truth),
            r.selected_j.map(|j| j.to_string()).unwrap_or_default(),
            r.k3_used.map(|k| k.to_string()).unwrap_or_default(),
            r.flags.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[McRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<McRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return usage(format!("unexpected CSV header {header:?}"));
    }
    let parse_err = |what: &str, v: &str| Error::Usage(format!("cannot parse {what} from {v:?}"));
    let mut rows = Vec::new();
    for record in r.records() {
        let rec = record?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let opt = |v: &str, what: &str| -> Result<Option<u64>> {
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| parse_err(what, v))
            }
        };
        rows.push(McRow {
            n: field(0).parse().map_err(|_| parse_err("n", field(0)))?,
            rep: field(1).parse().map_err(|_| parse_err("rep", field(1)))?,
            estimate: field(2).parse().map_err(|_| parse_err("estimate", field(2)))?,
            truth: field(3).parse().map_err(|_| parse_err("truth", field(3)))?,
            selected_j: opt(field(4), "selected_j")?.map(|j| j as usize),
            k3_used: opt(field(5), "k3_used")?,
            flags: field(6).to_string(),
        });
    }
    Ok(rows)
}

/// Monte Carlo summary at one sample size. `mse` is the mean squared error
/// and `variance` the population variance, so `mse = bias² + variance` up to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSummary {
    pub n: usize,
    pub reps: usize,
    pub failed: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub truth: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
    pub mse_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_n: Vec<NSummary>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub slope_ci: (f64, f64),
    pub ci_level: f64,
    /// `-8β/(1+4β)` when the smoothness is known.
    pub theoretical_slope: Option<f64>,
    /// The fit is undefined (constant or nonpositive MSE); the interval is infinite.
    pub degenerate: bool,
}

/// Per-`n` aggregates, ordered by `n`; rows with non-finite estimates are counted as failed.
pub fn summarize(rows: &[McRow]) -> Vec<NSummary> {
    let mut groups: BTreeMap<usize, Vec<&McRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.n).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(n, group)| {
            let truth = group[0].truth;
            let values: Vec<f64> = group.iter().map(|r| r.estimate).filter(|v| v.is_finite()).collect();
            let reps = values.len();
            let failed = group.len() - reps;
            let m = reps as f64;
            let mean = values.iter().sum::<f64>() / m;
            let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let bias = mean - truth;
            let sq: Vec<f64> = values.iter().map(|v| (v - truth).powi(2)).collect();
            let mse = sq.iter().sum::<f64>() / m;
            let sq_mean = mse;
            let sq_var = sq.iter().map(|s| (s - sq_mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            NSummary {
                n,
                reps,
                failed,
                mean,
                mean_se: (variance / (m - 1.0).max(1.0)).sqrt(),
                truth,
                bias,
                variance,
                mse,
                mse_se: (sq_var / m).sqrt(),
            }
        })
        .collect()
}

/// Ordinary least squares of `ln MSE` on `ln n` with a 95% Student-t interval.
pub fn rate_regression(rows: &[McRow], beta: Option<f64>) -> Result<RateReport> {
    let per_n = summarize(rows);
    if per_n.len() < 3 {
        return usage(format!("rate regression needs at least 3 distinct n, got {}", per_n.len()));
    }
    let theoretical_slope = beta.map(|b| -8.0 * b / (1.0 + 4.0 * b));
    let ci_level = 0.95;
    let usable = per_n.iter().all(|s| s.mse.is_finite() && s.mse > 0.0);
    let constant = per_n.windows(2).all(|w| w[0].mse == w[1].mse);
    if !usable || constant {
        let slope = if usable { 0.0 } else { f64::NAN };
        let intercept = if usable { per_n[0].mse.ln() } else { f64::NAN };
        return Ok(RateReport {
            per_n,
            slope,
            intercept,
            slope_se: f64::INFINITY,
            slope_ci: (f64::NEG_INFINITY, f64::INFINITY),
            ci_level,
            theoretical_slope,
            degenerate: true,
        });
    }
    let xs: Vec<f64> = per_n.iter().map(|s| (s.n as f64).ln()).collect();
    let ys: Vec<f64> = per_n.iter().map(|s| s.mse.ln()).collect();
    let (slope, intercept, slope_se) = ols(&xs, &ys);
    let df = (xs.len() - 2) as f64;
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Usage(e.to_string()))?.inverse_cdf(0.5 + ci_level / 2.0);
    Ok(RateReport {
        per_n,
        slope,
        intercept,
        slope_se,
        slope_ci: (slope - t * slope_se, slope + t * slope_se),
        ci_level,
        theoretical_slope,
        degenerate: false,
    })
}

/// `(slope, intercept, slope standard error)`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = if xs.len() > 2 { (ssr / (m - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, intercept, se)
}

/// Plot-ready `log_n,log_mse` lines.
pub fn plot_csv(report: &RateReport) -> String {
    let mut out = String::from("log_n,log_mse\n");
    for s in &report.per_n {
        out.push_str(&format!("{},{}\n", format_float((s.n as f64).ln()), format_float(s.mse.ln())));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub rng_algorithm: String,
    pub seed: u64,
    pub crate_version: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub metadata: Metadata,
    pub truth: f64,
    pub thresholds: Vec<CalibrationRecord>,
    pub per_n: Vec<NSummary>,
    /// Present when at least three sample sizes were run.
    pub rate: Option<RateReport>,
}

pub fn summarize_experiment(config: &ExperimentConfig, results: &McResults) -> ExperimentSummary {
    let rate = rate_regression(&results.rows, config.model.smoothness()).ok();
    ExperimentSummary {
        metadata: Metadata {
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed: config.seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        },
        truth: results.truth,
        thresholds: results.thresholds.clone(),
        per_n: summarize(&results.rows),
        rate,
    }
}

/// Runs the experiment and writes the configured CSV and summary files.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(McResults, ExperimentSummary)> {
    let results = run_mc(config)?;
    let summary = summarize_experiment(config, &results);
    if let Some(path) = &config.output.csv {
        write_csv(&results.rows, std::fs::File::create(path)?)?;
    }
    if let Some(path) = &config.output.summary {
        std::fs::write(path, serde_json::to_string_pretty(&summary)?)?;
    }
    Ok((results, summary))
}

/// How `estimate` picks its resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimateMode {
    KnownBeta(f64),
    Adaptive { c_opt: Option<f64>, d: f64, calibration_reps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub functional: String,
    pub n: usize,
    pub estimate: f64,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_opt: Option<f64>,
    pub resolutions: Vec<u64>,
    pub flags: Vec<String>,
}

/// Estimates `∫T(f)` from one sample: `square`/`renyi2` use the quadratic
/// statistic, `cube` the cubic one, anything else the split plug-in with the
/// pilot clamped at `floor` (half the density lower bound, when known).
pub fn estimate_functional(
    sample: &[f64],
    functional: &str,
    mode: EstimateMode,
    floor: Option<f64>,
    seed: u64,
) -> Result<EstimateReport> {
    let mut spec = FunctionalSpec::builtin(functional)?;
    if let Some(f) = floor {
        spec = spec.with_floor(f)?;
    }
    let n = sample.len();
    let mut flags = Vec::new();
    let report = |estimate, method: &str, beta, selected_j, c_opt, resolutions, flags| EstimateReport {
        functional: spec.name().to_string(),
        n,
        estimate,
        method: method.to_string(),
        beta,
        selected_j,
        c_opt,
        resolutions,
        flags,
    };
    let kind = match functional.trim() {
        "square" | "renyi2" => 2,
        "cube" => 3,
        _ => 0,
    };
    let calibrated = |grid: &LepskiGrid, c: Option<f64>, reps: usize| -> Result<f64> {
        match c {
            Some(c) => Ok(c),
            None => Ok(calibrate_threshold(grid, reps, seed)?.c_opt),
        }
    };
    match (kind, mode) {
        (2, EstimateMode::KnownBeta(b)) => {
            let k = k_of_beta(n, b)?;
            let v = quad_ustat_fast(&count_bins(sample, &[k])?, k)?.value;
            Ok(report(v, "quadratic", Some(b), None, None, vec![k.k() as u64], flags))
        }
        (2, EstimateMode::Adaptive { c_opt, d, calibration_reps }) => {
            let grid = build_grid(n, d)?;
            let c = calibrated(&grid, c_opt, calibration_reps)?;
            let sel = select_modified(sample, &grid, c)?;
            if sel.top_fallback {
                flags.push("top_fallback".to_string());
            }
            let k = vec![sel.k_star.k() as u64];
            Ok(report(sel.estimate, "quadratic_adaptive", Some(sel.beta), Some(sel.j_hat), Some(c), k, flags))
        }
        (3, EstimateMode::KnownBeta(b)) => {
            let t = choose_k_triple(b, n)?;
            let v = cubic_estimator_fast(&count_bins(sample, &t.resolutions())?, t)?.value;
            let ks = t.resolutions().iter().map(|k| k.k() as u64).collect();
            Ok(report(v, "cubic", Some(b), None, None, ks, flags))
        }
        (3, EstimateMode::Adaptive { c_opt, d, calibration_reps }) => {
            let grid = build_grid(n, d)?;
            let c = calibrated(&grid, c_opt, calibration_reps)?;
            let a = adaptive_cubic(sample, &grid, c)?;
            if a.selection.top_fallback {
                flags.push("top_fallback".to_string());
            }
            if a.k3_raised {
                flags.push("k3_raised".to_string());
            }
            let ks = a.estimate.ktriple.resolutions().iter().map(|k| k.k() as u64).collect();
            let (beta, j) = (a.selection.beta, a.selection.j_hat);
            Ok(report(a.estimate.value, "cubic_adaptive", Some(beta), Some(j), Some(c), ks, flags))
        }
        (_, mode) => {
            let mut split = stream(seed, Purpose::Split, n as u64, 0);
            let (est, c) = match mode {
                EstimateMode::KnownBeta(b) => (estimate_general_known_beta(sample, &spec, b, &mut split)?, None),
                EstimateMode::Adaptive { c_opt, d, calibration_reps } => {
                    let grid = build_grid(pilot_size(n), d)?;
                    let c = calibrated(&grid, c_opt, calibration_reps)?;
                    (estimate_general(sample, &spec, &grid, c, &mut split)?, Some(c))
                }
            };
            if est.clamped {
                flags.push("clamped".to_string());
            }
            let mut ks = vec![est.pilot_resolution.k() as u64];
            ks.extend(est.ktriple.resolutions().iter().map(|k| k.k() as u64));
            Ok(report(est.value, "general", Some(est.beta_hat), est.j_hat, c, ks, flags))
        }
    }
}

/// Reads one float per line; blank lines and `#` comments are skipped.
pub fn read_sample<R: Read>(mut reader: R) -> Result<Vec<f64>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| l.parse::<f64>().map_err(|_| Error::Usage(format!("line {}: cannot parse {l:?}", i + 1))))
        .collect()
}
