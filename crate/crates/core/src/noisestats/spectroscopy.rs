use std::f64::consts::PI;

use rayon::prelude::*;

use super::SpectralEstimate;
use crate::error::{Error, Result};

/// Instantaneous sign flips of the probe coupling on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    duration: f64,
    flips: Vec<f64>,
}

impl PulseSequence {
    pub fn new(duration: f64, flips: Vec<f64>) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!("duration must be positive, got {duration}")));
        }
        if flips.iter().any(|&t| !(t > 0.0 && t < duration)) {
            return Err(Error::InvalidParameter("pulse times must lie inside (0, T)".into()));
        }
        if flips.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("pulse times must be strictly increasing".into()));
        }
        Ok(PulseSequence { duration, flips })
    }

    /// Free induction: no pulses.
    pub fn free(duration: f64) -> Result<Self> {
        Self::new(duration, Vec::new())
    }

    /// Hahn echo: one pulse at `T/2`.
    pub fn echo(duration: f64) -> Result<Self> {
        Self::new(duration, vec![duration / 2.0])
    }

    /// `periods` cycles of a square wave with angular frequency `omega_ctr`.
    /// Pulses sit at `(m + 1/2) P/2` with `P = 2 pi / omega_ctr`, so the
    /// filter follows the sign of `cos(omega_ctr t)`.
    pub fn periodic(omega_ctr: f64, periods: usize) -> Result<Self> {
        if !(omega_ctr > 0.0) || periods == 0 {
            return Err(Error::InvalidParameter(format!(
                "need omega_ctr > 0 and at least one period, got {omega_ctr} and {periods}"
            )));
        }
        let period = 2.0 * PI / omega_ctr;
        let flips = (0..2 * periods).map(|m| (m as f64 + 0.5) * period / 2.0).collect();
        Self::new(periods as f64 * period, flips)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn flips(&self) -> &[f64] {
        &self.flips
    }
}

/// `+1` before the first pulse, changing sign at every pulse time.
pub fn filter_function(seq: &PulseSequence, t: f64) -> Result<f64> {
    if !(0.0..=seq.duration).contains(&t) {
        return Err(Error::OutOfDomain {
            t,
            duration: seq.duration,
        });
    }
    let passed = seq.flips.partition_point(|&tau| tau <= t);
    Ok(if passed % 2 == 0 { 1.0 } else { -1.0 })
}

/// Resolution of the double integral in [`gaussian_attenuation_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureOptions {
    /// largest cell edge
    pub max_cell: f64,
    /// Gauss-Legendre points per cell edge
    pub order: usize,
    /// cap on integrand evaluations
    pub budget: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            max_cell: 0.05,
            order: 8,
            budget: 200_000_000,
        }
    }
}

/// Nodes and weights on `[0, 1]` from Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n(x) and P_n'(x)
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// `exp(-chi)` with `chi = (1/2) int_0^t int_0^t f(t1) f(t2) C(t1, t2)`.
pub fn gaussian_attenuation<C>(c: C, seq: &PulseSequence, t: f64) -> Result<f64>
where
    C: Fn(f64, f64) -> f64 + Sync,
{
    gaussian_attenuation_with(c, seq, t, &QuadratureOptions::default())
}

/// [`gaussian_attenuation`] with explicit quadrature settings.
///
/// `[0, t]` is cut at every pulse and into cells no wider than `max_cell`.
/// Off-diagonal cell pairs use a tensor Gauss rule; diagonal cells are split
/// along `t1 = t2` into two triangles so that a kink of `C` on the diagonal
/// does not spoil convergence.
pub fn gaussian_attenuation_with<C>(c: C, seq: &PulseSequence, t: f64, opts: &QuadratureOptions) -> Result<f64>
where
    C: Fn(f64, f64) -> f64 + Sync,
{
    if !(0.0..=seq.duration).contains(&t) {
        return Err(Error::OutOfDomain {
            t,
            duration: seq.duration,
        });
    }
    if !(opts.max_cell > 0.0) || opts.order == 0 {
        return Err(Error::InvalidParameter("quadrature needs max_cell > 0 and order >= 1".into()));
    }
    if t == 0.0 {
        return Ok(1.0);
    }

    // cells (start, width, sign)
    let mut breaks = vec![0.0];
    breaks.extend(seq.flips.iter().copied().filter(|&tau| tau < t));
    breaks.push(t);
    let mut cells = Vec::new();
    for (s, w) in breaks.windows(2).enumerate() {
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        let len = w[1] - w[0];
        let pieces = ((len / opts.max_cell).ceil() as usize).max(1);
        let width = len / pieces as f64;
        for p in 0..pieces {
            cells.push((w[0] + p as f64 * width, width, sign));
        }
    }
    let required = cells
        .len()
        .saturating_mul(cells.len())
        .saturating_mul(opts.order * opts.order)
        .saturating_add(cells.len() * opts.order * opts.order);
    if required > opts.budget {
        return Err(Error::QuadratureBudget {
            required,
            budget: opts.budget,
        });
    }

    let (x, w) = gauss_legendre(opts.order);
    let c = &c;
    let chi: f64 = cells
        .par_iter()
        .enumerate()
        .map(|(a, &(a0, aw, af))| {
            let mut row = 0.0;
            for (b, &(b0, bw, bf)) in cells.iter().enumerate() {
                let mut sum = 0.0;
                if a == b {
                    // t2 < t1: t1 = a0 + aw u, t2 = a0 + aw u v, Jacobian aw^2 u
                    for (&u, &wu) in x.iter().zip(&w) {
                        for (&v, &wv) in x.iter().zip(&w) {
                            let t1 = a0 + aw * u;
                            let t2 = a0 + aw * u * v;
                            sum += wu * wv * u * (c(t1, t2) + c(t2, t1));
                        }
                    }
                    sum *= aw * aw;
                } else {
                    for (&u, &wu) in x.iter().zip(&w) {
                        let t1 = a0 + aw * u;
                        for (&v, &wv) in x.iter().zip(&w) {
                            sum += wu * wv * c(t1, b0 + bw * v);
                        }
                    }
                    sum *= aw * bw;
                }
                row += af * bf * sum;
            }
            row
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * 0.5;
    Ok((-chi).exp())
}

/// Coherence decay measured under a periodic sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayObservation {
    pub omega_ctr: f64,
    /// coherence at `t` divided by its initial value
    pub ratio: f64,
    pub t: f64,
}

/// `S(omega_ctr) = -(pi^2 / 4t) ln(ratio)` per observation.
pub fn reconstruct_psd(observations: &[DecayObservation]) -> Result<SpectralEstimate> {
    let mut omega = Vec::with_capacity(observations.len());
    let mut values = Vec::with_capacity(observations.len());
    for obs in observations {
        if !(obs.ratio > 0.0 && obs.ratio <= 1.0) {
            return Err(Error::InvalidRatio(obs.ratio));
        }
        if !(obs.t > 0.0) {
            return Err(Error::InvalidParameter(format!("decay time must be positive, got {}", obs.t)));
        }
        omega.push(obs.omega_ctr);
        values.push(-(PI * PI / (4.0 * obs.t)) * obs.ratio.ln());
    }
    Ok(SpectralEstimate {
        omega,
        values,
        stderr: None,
        estimator: "filter-function decay".into(),
    })
}
