//! Brute-force quasi-probabilities decide whether an environment admits a
//! classical noise picture on a given measurement grid.

use noise_loom::envmodel::load_model;
use noise_loom::quasiprob::{eigenbasis_discrepancy, joint_quasiprob, validity_witness, TimeGrid};

fn main() -> noise_loom::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/models");
    for name in ["commuting.json", "noncommuting.json"] {
        let model = load_model(dir.join(name))?;
        let env = model.as_exact().expect("exact model");
        println!("{}", model.label());
        for k in 1..=3 {
            let grid = TimeGrid::uniform(0.5, 0.5, k)?;
            let w = validity_witness(env, &grid)?;
            println!(
                "  k = {k}: offdiag mass {:.3e}, Kolmogorov residual {:.3e}, eigenbasis gap {:.1e}",
                w.offdiag_mass,
                w.kolmogorov_residual,
                eigenbasis_discrepancy(env, &grid)?
            );
        }
    }

    let model = load_model(dir.join("noncommuting.json"))?;
    let q = joint_quasiprob(model.as_exact().unwrap(), &TimeGrid::uniform(0.5, 0.5, 2)?)?;
    println!("two-time table of the non-commuting model:");
    for (xi, zeta, value) in q.iter() {
        println!("  q({xi:?}, {zeta:?}) = {value:.4}");
    }
    Ok(())
}
