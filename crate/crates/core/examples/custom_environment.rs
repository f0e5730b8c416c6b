//! Builds an environment from explicit matrices, samples it, and replays the
//! noise through a driven qubit.

use noise_loom::envmodel::{EnvironmentModel, ExactEnvironment, ModelSpec};
use noise_loom::opensim::{replay_ensemble, Integrator, SystemSpec};
use noise_loom::qcore::{pauli, CMatrix, DensityMatrix, Observable};
use noise_loom::quasiprob::{joint_prob, validity_witness, TimeGrid};
use noise_loom::sampler::sample_ensemble;

fn main() -> noise_loom::Result<()> {
    // three-level environment: V has a two-fold degenerate eigenvalue
    let h = CMatrix::from_real(3, &[0.0, 0.3, 0.0, 0.3, 0.5, 0.2, 0.0, 0.2, -0.4])?;
    let v = CMatrix::diag(&[1.0, 1.0, -1.0]);
    let env = ExactEnvironment::new(h, DensityMatrix::maximally_mixed(3), &v)?;
    let obs = Observable::from_matrix(&v)?;
    println!("coupling spectrum {:?}, projector defect {:.1e}", obs.values(), obs.defects().max());

    let grid = TimeGrid::uniform(0.0, 0.5, 3)?;
    let w = validity_witness(&env, &grid)?;
    println!("witness on 3 times: offdiag {:.3e}, residual {:.3e}", w.offdiag_mass, w.kolmogorov_residual);

    let model = EnvironmentModel::exact(env, "three-level demo");
    println!("model file:\n{}", ModelSpec::from_model(&model).to_json());
    let p = joint_prob(&model, &TimeGrid::uniform(0.0, 0.5, 2)?)?;
    println!("two-time sequence law {:?}", p.probs());

    let ens = sample_ensemble(&model, 0.1, 40, 500, 1)?;
    let sys = SystemSpec::new(pauli::x().scale_real(0.5), pauli::z().scale_real(0.5), DensityMatrix::basis_state(2, 0))?;
    let report = replay_ensemble(&sys, &ens, Integrator::Pc)?.with_element((0, 0))?;
    for (t, c) in report.times().iter().zip(report.tracked()).step_by(8) {
        println!("t = {t:.1}: population of |0> = {:.4}", c.re);
    }
    Ok(())
}
