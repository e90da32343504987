//! The cubic estimator on a nested resolution triple.

use haarfunc::cubic::{choose_k_triple, cubic_estimator, cubic_estimator_naive, cubic_expectation, KTriple};
use haarfunc::density::DensityModel;
use haarfunc::rng::{stream, Purpose};

fn main() -> haarfunc::Result<()> {
    for beta in [0.05, 0.1, 0.2] {
        let t = choose_k_triple(beta, 4096)?;
        println!("beta {beta}: k = ({}, {}, {})", t.k1, t.k2, t.k3);
    }

    let model = DensityModel::linear_ramp(0.5)?;
    let small = KTriple::from_ks(8, 16, 64)?;
    let x = model.sample(40, &mut stream(4, Purpose::Example, 40, 0))?;
    let fast = cubic_estimator(&x, small)?;
    let naive = cubic_estimator_naive(&x, small)?;
    println!("n=40: fast {:.12} naive {:.12}", fast.value, naive.value);
    println!("terms {:?}", fast.term_values);

    let n = 4096;
    let t = choose_k_triple(0.2, n)?;
    let est = cubic_estimator(&model.sample(n, &mut stream(4, Purpose::Example, n as u64, 1))?, t)?;
    println!(
        "n={n}: estimate {:.6}, exact expectation {:.6}, truth {:.6}",
        est.value,
        cubic_expectation(&model, t)?,
        model.power_integral(3.0).unwrap()
    );
    Ok(())
}
