//! Replays an ensemble through a dephasing qubit and compares the averaged
//! coherence with the closed-form telegraph-noise result.

use noise_loom::envmodel::build_rtn_env;
use noise_loom::opensim::{exact_rtn_series, replay_ensemble, Integrator, SystemSpec};
use noise_loom::sampler::sample_ensemble;

fn main() -> noise_loom::Result<()> {
    let (gamma, omega) = (1.0, 2.0);
    let ens = sample_ensemble(&build_rtn_env(gamma, omega)?, 0.2, 50, 1000, 42)?;
    let sys = SystemSpec::pure_dephasing();

    for integrator in [Integrator::Pc, Integrator::Rk4] {
        let report = replay_ensemble(&sys, &ens, integrator)?;
        let exact = exact_rtn_series(gamma, omega, report.times())?;
        let report = report.with_exact(exact)?;
        let err = report.error().expect("reference attached");
        println!("{integrator}: rms {:.4}, max {:.4}", err.rms, err.max);
        if integrator == Integrator::Pc {
            for (l, (t, c)) in report.times().iter().zip(report.tracked()).enumerate().step_by(10) {
                println!("  t = {t:4.1}  rho_01 = {:.4}  exact = {:.4}", c.re, report.exact().unwrap()[l]);
            }
        }
    }
    Ok(())
}
