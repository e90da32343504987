//! Density fixtures with exact truths, samplers and Hölder checks.

use haarfunc::density::{DensityModel, SignPattern};
use haarfunc::functional::FunctionalSpec;
use haarfunc::rng::{stream, Purpose};

fn main() -> haarfunc::Result<()> {
    let models = [
        DensityModel::Uniform,
        DensityModel::linear_ramp(0.5)?,
        DensityModel::trig_perturbed(0.4, 3)?,
        DensityModel::self_similar(0.2, 0.5)?,
        DensityModel::perturbed_uniform(0.1, 64, 1.0, SignPattern::Seeded(5))?,
    ];
    let functionals = [FunctionalSpec::square(), FunctionalSpec::cube(), FunctionalSpec::entropy(1e-3)];
    for m in &models {
        print!("{:<20} f in [{:.3}, {:.3}]", m.name(), m.f_min(), m.f_max());
        for t in &functionals {
            let truth = m.true_functional(t)?;
            print!("  {}={:.6} ({:?})", t.name(), truth.value, truth.provenance);
        }
        let draw = m.sample_with_stats(20_000, &mut stream(2, Purpose::Example, 20_000, 0))?;
        let mean = draw.points.iter().sum::<f64>() / draw.points.len() as f64;
        println!("  sample mean {mean:.4} acceptance {:.3}", draw.acceptance_rate);
    }
    let h = DensityModel::self_similar(0.2, 0.5)?.holder_verify(0.2, 2.0, 512);
    println!("self-similar Hölder check: max ratio {:.4}, within {}", h.max_ratio, h.within);
    Ok(())
}
