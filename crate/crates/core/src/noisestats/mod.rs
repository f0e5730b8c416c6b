//! Statistics of sampled noise: moments, autocorrelation, power spectra, and
//! the filter-function spectroscopy pipeline.

mod spectroscopy;

use std::io::Write;

use rayon::prelude::*;

pub use spectroscopy::{
    filter_function, gaussian_attenuation, gaussian_attenuation_with, reconstruct_psd, DecayObservation,
    PulseSequence, QuadratureOptions,
};

use crate::error::{Error, Result};
use crate::fmt::decimal;
use crate::sampler::TrajectoryEnsemble;

/// Upper limit on jackknife groups; larger ensembles are split into this many
/// contiguous blocks of trajectories.
pub const MAX_JACKKNIFE_GROUPS: usize = 100;

fn check_index(ens: &TrajectoryEnsemble, l: usize) -> Result<()> {
    if l >= ens.steps() {
        return Err(Error::IndexOutOfRange {
            index: l,
            len: ens.steps(),
        });
    }
    Ok(())
}

/// Ensemble mean of `xi(t_l)`.
pub fn mean(ens: &TrajectoryEnsemble, l: usize) -> Result<f64> {
    check_index(ens, l)?;
    Ok((0..ens.len()).map(|j| ens.value(j, l)).sum::<f64>() / ens.len() as f64)
}

/// Estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Raw second moment `E[xi(t_l1) xi(t_l2)]` with the standard error of the
/// sample mean.
pub fn second_moment(ens: &TrajectoryEnsemble, l1: usize, l2: usize) -> Result<Estimate> {
    check_index(ens, l1)?;
    check_index(ens, l2)?;
    let n = ens.len() as f64;
    let products: Vec<f64> = (0..ens.len()).map(|j| ens.value(j, l1) * ens.value(j, l2)).collect();
    let value = products.iter().sum::<f64>() / n;
    let var = if ens.len() > 1 {
        products.iter().map(|p| (p - value).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(Estimate {
        value,
        stderr: (var / n).sqrt(),
    })
}

/// `(1/N) sum_j xi_j(t_l1) xi_j(t_l2) - (1/N^2) sum_{j,j'} xi_j(t_l1) xi_j'(t_l2)`
pub fn autocorrelation(ens: &TrajectoryEnsemble, l1: usize, l2: usize) -> Result<f64> {
    check_index(ens, l1)?;
    check_index(ens, l2)?;
    let n = ens.len() as f64;
    let (mut s1, mut s2, mut s12) = (0.0, 0.0, 0.0);
    for j in 0..ens.len() {
        let (a, b) = (ens.value(j, l1), ens.value(j, l2));
        s1 += a;
        s2 += b;
        s12 += a * b;
    }
    Ok(s12 / n - (s1 / n) * (s2 / n))
}

/// [`autocorrelation`] rescaled by `N / (N - 1)`, removing the bias of the
/// plug-in mean.
pub fn autocorrelation_unbiased(ens: &TrajectoryEnsemble, l1: usize, l2: usize) -> Result<f64> {
    if ens.len() < 2 {
        return Err(Error::InsufficientData("unbiased covariance needs at least 2 trajectories".into()));
    }
    let n = ens.len() as f64;
    Ok(autocorrelation(ens, l1, l2)? * n / (n - 1.0))
}

/// Stationary autocorrelation `C(s)` at lags `s = m dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcfEstimate {
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl AcfEstimate {
    /// CSV with header `lag,C,stderr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "lag,C,stderr")?;
        for ((s, c), e) in self.lags.iter().zip(&self.values).zip(&self.stderr) {
            writeln!(out, "{},{},{}", decimal(*s), decimal(*c), decimal(*e))?;
        }
        Ok(())
    }
}

/// Sums over one block of trajectories: `s1[l] = sum xi_l`,
/// `s2[m][l] = sum xi_l xi_{l+m}`.
#[derive(Clone)]
struct BlockSums {
    count: usize,
    s1: Vec<f64>,
    s2: Vec<Vec<f64>>,
}

impl BlockSums {
    fn collect(ens: &TrajectoryEnsemble, rows: std::ops::Range<usize>, max_lag: usize) -> Self {
        let k = ens.steps();
        let omega = ens.omega_values();
        let mut s1 = vec![0.0; k];
        let mut s2: Vec<Vec<f64>> = (0..=max_lag).map(|m| vec![0.0; k - m]).collect();
        let mut x = vec![0.0; k];
        let count = rows.len();
        for j in rows {
            for (slot, &i) in x.iter_mut().zip(&ens.trajectory(j).outcome_indices) {
                *slot = omega[i];
            }
            for l in 0..k {
                s1[l] += x[l];
            }
            for (m, row) in s2.iter_mut().enumerate() {
                for (l, acc) in row.iter_mut().enumerate() {
                    *acc += x[l] * x[l + m];
                }
            }
        }
        BlockSums { count, s1, s2 }
    }

    fn minus(&self, other: &BlockSums) -> BlockSums {
        BlockSums {
            count: self.count - other.count,
            s1: self.s1.iter().zip(&other.s1).map(|(a, b)| a - b).collect(),
            s2: self
                .s2
                .iter()
                .zip(&other.s2)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| a - b).collect())
                .collect(),
        }
    }

    fn add(&mut self, other: &BlockSums) {
        self.count += other.count;
        self.s1.iter_mut().zip(&other.s1).for_each(|(a, b)| *a += b);
        for (ra, rb) in self.s2.iter_mut().zip(&other.s2) {
            ra.iter_mut().zip(rb).for_each(|(a, b)| *a += b);
        }
    }

    /// Pooled two-term estimator: for each lag, the average over start
    /// indices of `mean(xi_l xi_{l+m}) - mean(xi_l) mean(xi_{l+m})`.
    fn pooled(&self) -> Vec<f64> {
        let n = self.count as f64;
        self.s2
            .iter()
            .enumerate()
            .map(|(m, row)| {
                let total: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(l, s)| s / n - (self.s1[l] / n) * (self.s1[l + m] / n))
                    .sum();
                total / row.len() as f64
            })
            .collect()
    }
}

/// Contiguous trajectory blocks used as jackknife groups.
fn jackknife_blocks(n: usize) -> Vec<std::ops::Range<usize>> {
    let groups = n.min(MAX_JACKKNIFE_GROUPS);
    (0..groups).map(|g| (g * n / groups)..((g + 1) * n / groups)).collect()
}

/// Delete-one-group jackknife: returns `(full estimate, replicates)`.
fn jackknife_acf(ens: &TrajectoryEnsemble, max_lag: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let blocks: Vec<BlockSums> = jackknife_blocks(ens.len())
        .into_par_iter()
        .map(|rows| BlockSums::collect(ens, rows, max_lag))
        .collect();
    let mut total = blocks[0].clone();
    for b in &blocks[1..] {
        total.add(b);
    }
    let replicates = if blocks.len() > 1 {
        blocks.par_iter().map(|b| total.minus(b).pooled()).collect()
    } else {
        Vec::new()
    };
    (total.pooled(), replicates)
}

/// Jackknife standard error of each component.
fn jackknife_stderr(replicates: &[Vec<f64>], len: usize) -> Vec<f64> {
    let g = replicates.len();
    if g < 2 {
        return vec![f64::NAN; len];
    }
    (0..len)
        .map(|i| {
            let mean = replicates.iter().map(|r| r[i]).sum::<f64>() / g as f64;
            let ss: f64 = replicates.iter().map(|r| (r[i] - mean).powi(2)).sum();
            ((g - 1) as f64 / g as f64 * ss).sqrt()
        })
        .collect()
}

/// Autocorrelation at lags `0..=max_lag` pooled over start times, with
/// jackknife errors over trajectory blocks.
pub fn pooled_autocorrelation(ens: &TrajectoryEnsemble, max_lag: usize) -> Result<AcfEstimate> {
    if max_lag >= ens.steps() {
        return Err(Error::IndexOutOfRange {
            index: max_lag,
            len: ens.steps(),
        });
    }
    let (values, replicates) = jackknife_acf(ens, max_lag);
    Ok(AcfEstimate {
        lags: (0..=max_lag).map(|m| m as f64 * ens.dt()).collect(),
        stderr: jackknife_stderr(&replicates, max_lag + 1),
        values,
    })
}

/// Power spectral density `S(omega)` with optional error bars.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralEstimate {
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub estimator: String,
}

impl SpectralEstimate {
    /// CSV with header `omega,S,stderr`; the last column is empty when no
    /// error bars exist.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "omega,S,stderr")?;
        for (i, (w, s)) in self.omega.iter().zip(&self.values).enumerate() {
            let err = self.stderr.as_ref().map(|e| decimal(e[i])).unwrap_or_default();
            writeln!(out, "{},{},{err}", decimal(*w), decimal(*s))?;
        }
        Ok(())
    }
}

/// Lag truncation and output frequency grid for [`estimate_psd`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagWindow {
    /// largest lag index used; `None` means `k - 1`
    pub max_lag: Option<usize>,
    /// number of frequencies spanning `[-pi/dt, pi/dt]`
    pub points: usize,
}

impl Default for LagWindow {
    fn default() -> Self {
        LagWindow {
            max_lag: None,
            points: 129,
        }
    }
}

/// Trapezoid-rule transform of an even autocorrelation sampled at
/// `s = m dt`: `dt [C_0 + 2 sum_m w_m C_m cos(omega m dt)]`, `w_M = 1/2`.
fn cosine_transform(acf: &[f64], dt: f64, omega: f64) -> f64 {
    let last = acf.len() - 1;
    let tail: f64 = acf
        .iter()
        .enumerate()
        .skip(1)
        .map(|(m, c)| {
            let w = if m == last { 0.5 } else { 1.0 };
            w * c * (omega * m as f64 * dt).cos()
        })
        .sum();
    dt * (acf[0] + 2.0 * tail)
}

/// Spectrum of the pooled autocorrelation with symmetric extension
/// `C(-s) = C(s)`, on a symmetric grid over the Nyquist band.
pub fn estimate_psd(ens: &TrajectoryEnsemble, window: LagWindow) -> Result<SpectralEstimate> {
    let k = ens.steps();
    if k < 4 {
        return Err(Error::InsufficientData(format!("spectral estimate needs k >= 4, got {k}")));
    }
    if window.points < 2 {
        return Err(Error::InvalidParameter("need at least 2 frequency points".into()));
    }
    let max_lag = window.max_lag.unwrap_or(k - 1);
    if max_lag == 0 || max_lag >= k {
        return Err(Error::InvalidParameter(format!("max lag must lie in 1..{k}, got {max_lag}")));
    }
    let dt = ens.dt();
    let nyquist = std::f64::consts::PI / dt;
    let omega: Vec<f64> = (0..window.points)
        .map(|i| nyquist * (2.0 * i as f64 - (window.points - 1) as f64) / (window.points - 1) as f64)
        .collect();
    let (acf, replicates) = jackknife_acf(ens, max_lag);
    let transform = |c: &[f64]| -> Vec<f64> { omega.iter().map(|&w| cosine_transform(c, dt, w)).collect() };
    let values = transform(&acf);
    let stderr = if replicates.len() >= 2 {
        let spectra: Vec<Vec<f64>> = replicates.par_iter().map(|r| transform(r)).collect();
        Some(jackknife_stderr(&spectra, omega.len()))
    } else {
        None
    };
    Ok(SpectralEstimate {
        omega,
        values,
        stderr,
        estimator: format!("pooled-acf trapezoid max_lag={max_lag}"),
    })
}

/// Power spectrum of random telegraph noise with switching rate `gamma` and
/// amplitude `omega0 / 2`: `(omega0^2 / 4) 4 gamma / (4 gamma^2 + omega^2)`.
pub fn rtn_psd(gamma: f64, omega0: f64, omega: f64) -> f64 {
    omega0 * omega0 / 4.0 * 4.0 * gamma / (4.0 * gamma * gamma + omega * omega)
}

/// Autocorrelation of the same process: `(omega0^2 / 4) e^{-2 gamma |s|}`.
pub fn rtn_autocorrelation(gamma: f64, omega0: f64, s: f64) -> f64 {
    omega0 * omega0 / 4.0 * (-2.0 * gamma * s.abs()).exp()
}
