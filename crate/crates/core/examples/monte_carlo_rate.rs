//! A Monte Carlo experiment from a JSON config and its rate regression.

use haarfunc::harness::{csv_string, plot_csv, rate_regression, run_mc, ExperimentConfig};

fn main() -> haarfunc::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{
            "model": {"kind": "dyadic_self_similar", "beta": 0.2, "scale": 0.1},
            "estimator": {"type": "cubic", "beta": 0.2},
            "n_list": [512, 1024, 2048, 4096, 8192],
            "reps": 200,
            "seed": 42
        }"#,
    )?;
    let results = run_mc(&config)?;
    println!("{}", csv_string(&results.rows[..3])?);
    let report = rate_regression(&results.rows, config.model.smoothness())?;
    for s in &report.per_n {
        println!("n={:<5} bias {:+.2e} variance {:.2e} mse {:.2e}", s.n, s.bias, s.variance, s.mse);
    }
    println!(
        "slope {:.3} CI ({:.3}, {:.3}); reference {:.3}",
        report.slope,
        report.slope_ci.0,
        report.slope_ci.1,
        report.theoretical_slope.unwrap()
    );
    print!("{}", plot_csv(&report));
    Ok(())
}
