//! Shows the 1/sqrt(N_e) decrease of the replay error with ensemble size.

use noise_loom::envmodel::build_rtn_env;
use noise_loom::opensim::{exact_rtn_series, replay_ensemble, Integrator, SystemSpec};
use noise_loom::sampler::sample_ensemble;

fn main() -> noise_loom::Result<()> {
    let env = build_rtn_env(1.0, 2.0)?;
    let sys = SystemSpec::pure_dephasing();
    let seeds = 20;
    for n_e in [10, 100, 1000] {
        let mut total = 0.0;
        for seed in 0..seeds {
            let ens = sample_ensemble(&env, 0.2, 50, n_e, seed)?;
            let report = replay_ensemble(&sys, &ens, Integrator::Pc)?;
            let exact = exact_rtn_series(1.0, 2.0, report.times())?;
            total += report.with_exact(exact)?.error().unwrap().rms;
        }
        let rms = total / seeds as f64;
        println!("N_e = {n_e:5}: rms {rms:.4}, rms * sqrt(N_e) = {:.3}", rms * (n_e as f64).sqrt());
    }
    Ok(())
}
