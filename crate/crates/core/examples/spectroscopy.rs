//! Dephasing spectroscopy: decay of a probe qubit under periodic pulse
//! sequences, computed in the Gaussian approximation, is inverted to sample
//! the noise power spectrum.

use std::f64::consts::PI;

use noise_loom::noisestats::{
    filter_function, gaussian_attenuation, reconstruct_psd, rtn_autocorrelation, rtn_psd, DecayObservation,
    PulseSequence,
};

fn main() -> noise_loom::Result<()> {
    let (gamma, omega0) = (1.0, 2.0);
    let echo = PulseSequence::echo(1.0)?;
    println!("echo filter: f(0.25) = {}, f(0.75) = {}", filter_function(&echo, 0.25)?, filter_function(&echo, 0.75)?);

    let mut observations = Vec::new();
    for omega_ctr in [10.0, 20.0, 40.0, 60.0, 80.0, 100.0] {
        let periods = (omega_ctr * 10.0 / (2.0 * PI)).ceil() as usize;
        let seq = PulseSequence::periodic(omega_ctr, periods)?;
        let t = seq.duration();
        let ratio = gaussian_attenuation(|a, b| rtn_autocorrelation(gamma, omega0, a - b), &seq, t)?;
        observations.push(DecayObservation { omega_ctr, ratio, t });
    }
    let est = reconstruct_psd(&observations)?;
    for (w, s) in est.omega.iter().zip(&est.values) {
        let exact = rtn_psd(gamma, omega0, *w);
        println!("omega_ctr = {w:5.1}: S = {s:.6}, exact {exact:.6}, error {:+.2}%", 100.0 * (s / exact - 1.0));
    }
    Ok(())
}
