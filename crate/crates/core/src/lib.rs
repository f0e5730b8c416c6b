//! Surrogate-noise trajectory sampling and replay.
//!
//! The crate simulates sequential projective measurements of an environment
//! observable to collect noise trajectories, stores them as ensembles, and
//! replays them through trajectory-conditioned unitary dynamics of a small
//! open system. Brute-force joint quasi-probabilities decide whether such a
//! noise picture is legitimate for a given environment, and a statistics
//! module characterizes the sampled noise (autocorrelation, spectra, and the
//! Gaussian dephasing-spectroscopy pipeline).
//!
//! Module map:
//!
//! - [`qcore`]: Hermitian eigensolver, projectors, unitary propagation
//! - [`envmodel`]: exact and Lindblad-reduced environments, model files
//! - [`sampler`]: Born-rule sampling of trajectory ensembles, `traj-ens/1` files
//! - [`quasiprob`]: joint (quasi-)probability tables and the validity witness
//! - [`opensim`]: ensemble replay (RK4 and piecewise-constant propagators)
//! - [`noisestats`]: autocorrelation, PSD, filter functions, spectroscopy
//! - [`cli`]: the `noise-loom` command-line front end

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod envmodel;
pub mod error;
pub mod fmt;
pub mod noisestats;
pub mod opensim;
pub mod qcore;
pub mod quasiprob;
pub mod sampler;

pub use error::{Error, Result};
