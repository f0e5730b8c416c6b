//! Autocorrelation and power spectrum estimated from a sampled ensemble.

use noise_loom::envmodel::build_rtn_env;
use noise_loom::noisestats::{
    autocorrelation, estimate_psd, pooled_autocorrelation, rtn_autocorrelation, rtn_psd, LagWindow,
};
use noise_loom::sampler::sample_ensemble;

fn main() -> noise_loom::Result<()> {
    let ens = sample_ensemble(&build_rtn_env(1.0, 2.0)?, 0.2, 50, 1000, 42)?;

    println!("two-time estimator C(t_10, t_11) = {:.4}", autocorrelation(&ens, 10, 11)?);
    let acf = pooled_autocorrelation(&ens, 10)?;
    for ((s, c), e) in acf.lags.iter().zip(&acf.values).zip(&acf.stderr) {
        println!("s = {s:.1}: C = {c:.4} +- {e:.4}  (exact {:.4})", rtn_autocorrelation(1.0, 2.0, *s));
    }

    let psd = estimate_psd(&ens, LagWindow { max_lag: None, points: 9 })?;
    let err = psd.stderr.as_ref().unwrap();
    for ((w, s), e) in psd.omega.iter().zip(&psd.values).zip(err) {
        println!("omega = {w:6.2}: S = {s:.4} +- {e:.4}  (continuum {:.4})", rtn_psd(1.0, 2.0, *w));
    }
    Ok(())
}
