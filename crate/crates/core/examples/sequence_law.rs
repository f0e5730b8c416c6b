//! Compares sampled sequence frequencies with the exact sequence law and
//! checks its Markov structure for telegraph noise.

use noise_loom::envmodel::build_rtn_env;
use noise_loom::quasiprob::{joint_prob, moment, TimeGrid};
use noise_loom::sampler::sample_ensemble;

fn main() -> noise_loom::Result<()> {
    let env = build_rtn_env(1.0, 2.0)?;
    let (dt, k, n) = (0.2, 3, 100_000);
    let exact = joint_prob(&env, &TimeGrid::uniform(0.0, dt, k)?)?;
    let ens = sample_ensemble(&env, dt, k, n, 7)?;

    let mut counts = vec![0usize; exact.probs().len()];
    for t in ens.trajectories() {
        counts[t.outcome_indices.iter().fold(0, |acc, &i| acc * 2 + i)] += 1;
    }
    let mut tv = 0.0;
    for ((seq, p), c) in exact.iter().zip(&counts) {
        let f = *c as f64 / n as f64;
        tv += 0.5 * (f - p).abs();
        println!("{seq:?}: exact {p:.5}, sampled {f:.5}");
    }
    println!("total variation {tv:.5}");

    let pair = joint_prob(&env, &TimeGrid::uniform(0.0, dt, 2)?)?;
    println!("<xi(0) xi(dt)> = {:.6} (e^(-0.4) = {:.6})", moment(&pair), (-0.4f64).exp());
    Ok(())
}
