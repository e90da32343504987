//! Plug-in estimation of ∫T(f) for a smooth T with sample splitting.

use haarfunc::density::DensityModel;
use haarfunc::functional::FunctionalSpec;
use haarfunc::general::{estimate_general, estimate_general_known_beta, pilot_size};
use haarfunc::lepski::{build_grid, calibrate_threshold};
use haarfunc::rng::{stream, Purpose};

fn main() -> haarfunc::Result<()> {
    let model = DensityModel::linear_ramp(0.5)?;
    let n = 8192;
    let x = model.sample(n, &mut stream(5, Purpose::Example, n as u64, 0))?;
    let floor = model.f_min() / 2.0;

    let specs = [
        FunctionalSpec::entropy(floor),
        FunctionalSpec::power(1.5)?.with_floor(floor)?,
        FunctionalSpec::square(),
    ];
    for spec in &specs {
        let truth = model.true_functional(spec)?.value;
        let est = estimate_general_known_beta(&x, spec, 0.2, &mut stream(5, Purpose::Split, n as u64, 0))?;
        println!("{:<12} estimate {:.6} truth {:.6} terms {:?}", spec.name(), est.value, truth, est.term_values);
    }

    let grid = build_grid(pilot_size(n), 2.0)?;
    let c = calibrate_threshold(&grid, 200, 5)?.c_opt;
    let est = estimate_general(&x, &specs[0], &grid, c, &mut stream(5, Purpose::Split, n as u64, 1))?;
    println!("adaptive entropy {:.6} (beta_hat {:.3}, pilot k {})", est.value, est.beta_hat, est.pilot_resolution);
    Ok(())
}
