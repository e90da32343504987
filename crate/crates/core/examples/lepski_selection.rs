//! Smoothness grid, threshold calibration and the selection rules.

use haarfunc::density::{DensityModel, SignPattern};
use haarfunc::lepski::{adaptive_cubic, build_grid, calibrate_threshold, calibrate_two_point, select_modified, select_two_point};
use haarfunc::rng::{stream, Purpose};

fn main() -> haarfunc::Result<()> {
    let n = 1024;
    let grid = build_grid(n, 2.0)?;
    println!("grid for n={n}: N={}, s*={}, fallback exponent {}", grid.size, grid.s_star, grid.fallback_used);
    for e in &grid.entries {
        println!("  j={} k={} beta={:.4} k*={}", e.j, e.k, e.beta, e.k_star);
    }
    let cal = calibrate_threshold(&grid, 200, 7)?;
    println!("calibrated C = {:.4} (vacuous {})", cal.c_opt, cal.vacuous);

    let rough = DensityModel::perturbed_uniform(0.05, 256, 1.0, SignPattern::Seeded(1))?;
    for model in [DensityModel::Uniform, rough] {
        let x = model.sample(n, &mut stream(7, Purpose::Example, n as u64, 0))?;
        let sel = select_modified(&x, &grid, cal.c_opt)?;
        let cubic = adaptive_cubic(&x, &grid, cal.c_opt)?;
        println!(
            "{:<18} j={} beta={:.3} quad {:.5} cubic {:.5} (k3 raised {})",
            model.name(),
            sel.j_hat,
            sel.beta,
            sel.estimate,
            cubic.estimate.value,
            cubic.k3_raised
        );
    }

    let (b0, b1) = (0.2, 0.05);
    let c = calibrate_two_point(n, b0, b1, 200, 7)?.c_opt;
    let x = DensityModel::Uniform.sample(n, &mut stream(7, Purpose::Example, n as u64, 1))?;
    let tp = select_two_point(&x, b0, b1, c)?;
    println!("two-point on uniform: j={} I={:.2e} threshold {:.2e}", tp.j_hat, tp.i_hat, tp.threshold);
    Ok(())
}
