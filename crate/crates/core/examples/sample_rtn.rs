//! Samples telegraph-noise trajectories by repeated projective measurement
//! and saves them as a `traj-ens/1` file.

use noise_loom::envmodel::build_rtn_env;
use noise_loom::sampler::{load_ensemble, sample_ensemble, save_ensemble};

fn main() -> noise_loom::Result<()> {
    let env = build_rtn_env(1.0, 2.0)?;
    let ens = sample_ensemble(&env, 0.2, 50, 1000, 42)?;

    let path = std::env::temp_dir().join("noise-loom-rtn.traj");
    save_ensemble(&ens, &path)?;
    let back = load_ensemble(&path)?;
    assert_eq!(back, ens);

    println!("saved {} trajectories of length {} to {}", ens.len(), ens.steps(), path.display());
    println!("outcome values: {:?}", ens.omega_values());
    let first: Vec<f64> = ens.trajectory(0).values(ens.omega_values()).take(12).collect();
    println!("trajectory 0 starts {first:?}");
    for l in [0, 10, 49] {
        println!("P(xi(t_{l}) = +1) = {:.3}", ens.marginal(l)[1]);
    }
    Ok(())
}
