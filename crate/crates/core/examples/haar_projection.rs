//! Dyadic bins, the Haar projection kernel and empirical projections.

use haarfunc::density::DensityModel;
use haarfunc::haar::{bin_index, count_bins, empirical_projection, kernel_eval, kernel_l2_mass, kernel_row_mass, DyadicResolution};
use haarfunc::rng::{stream, Purpose};

fn main() -> haarfunc::Result<()> {
    let k = DyadicResolution::from_k(8)?;
    for x in [0.0, 0.125, 0.126, 1.0] {
        println!("bin of {x:<6} at k=8: {}", bin_index(k, x)?);
    }
    println!("K_8(0.1, 0.12) = {}", kernel_eval(k, 0.1, 0.12)?);
    println!("row mass {} , L2 mass {}", kernel_row_mass(k, 0.3)?, kernel_l2_mass(k));

    let model = DensityModel::linear_ramp(0.5)?;
    let x = model.sample(4000, &mut stream(1, Purpose::Example, 4000, 0))?;
    let fine = DyadicResolution::from_k(32)?;
    let counts = count_bins(&x, &[k, fine])?;
    println!("counts at k=8: {:?}", counts.counts(k).unwrap());

    let est = empirical_projection(&x, k)?;
    let truth = model.projection(k);
    for (j, (a, b)) in est.values().iter().zip(truth.values()).enumerate() {
        println!("bin {j}: empirical {a:.3}  exact {b:.3}");
    }
    Ok(())
}
