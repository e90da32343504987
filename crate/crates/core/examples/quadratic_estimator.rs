//! The quadratic U-statistic: bin-count path against the pairwise loop,
//! and its unbiasedness for the projected functional.

use haarfunc::density::DensityModel;
use haarfunc::haar::DyadicResolution;
use haarfunc::quadratic::{quad_ustat, quad_ustat_naive};
use haarfunc::rng::{stream, Purpose};

fn main() -> haarfunc::Result<()> {
    let model = DensityModel::linear_ramp(0.5)?;
    let k = DyadicResolution::from_k(256)?;

    let x = model.sample(300, &mut stream(3, Purpose::Example, 300, 0))?;
    let fast = quad_ustat(&x, k)?;
    let naive = quad_ustat_naive(&x, k)?;
    println!("fast {:.15}  naive {:.15}", fast.value, naive.value);

    let (n, reps) = (1024, 1000);
    let values: Vec<f64> = (0..reps)
        .map(|r| quad_ustat(&model.sample(n, &mut stream(3, Purpose::Example, n as u64, r)).unwrap(), k).unwrap().value)
        .collect();
    let mean = values.iter().sum::<f64>() / reps as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    let target = model.projected_functional(k, 2)?;
    println!("MC mean {mean:.6} ± {:.6}, projected target {target:.6}", sd / (reps as f64).sqrt());
    println!("full functional {:.6}", model.power_integral(2.0).unwrap());
    Ok(())
}
