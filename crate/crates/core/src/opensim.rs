//! Trajectory-conditioned von Neumann dynamics of a small open system.
//!
//! Each sampled noise trajectory drives `H(t) = H_S + xi(t) V_S`; averaging the
//! resulting states over the ensemble approximates the reduced dynamics.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qcore::{check_hermitian, unitary, CMatrix, DensityMatrix, C64};
use crate::sampler::{Trajectory, TrajectoryEnsemble};

/// Trajectories per work unit in [`replay_ensemble`]. Fixed so the summation
/// order does not depend on the thread count.
const REPLAY_CHUNK: usize = 64;

#[derive(Clone, Debug)]
pub struct SystemSpec {
    h_s: CMatrix,
    v_s: CMatrix,
    rho0: DensityMatrix,
}

impl SystemSpec {
    pub fn new(h_s: CMatrix, v_s: CMatrix, rho0: DensityMatrix) -> Result<Self> {
        check_hermitian(&h_s)?;
        check_hermitian(&v_s)?;
        h_s.check_dim(rho0.dim())?;
        v_s.check_dim(rho0.dim())?;
        Ok(SystemSpec { h_s, v_s, rho0 })
    }

    /// Qubit with `H_S = 0`, `V_S = Z/2`, starting in `|+><+|`.
    pub fn pure_dephasing() -> Self {
        SystemSpec {
            h_s: CMatrix::zeros(2),
            v_s: crate::qcore::pauli::z().scale_real(0.5),
            rho0: DensityMatrix::from_bloch(1.0, 0.0, 0.0).expect("pure state"),
        }
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h_s
    }

    pub fn coupling(&self) -> &CMatrix {
        &self.v_s
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn dim(&self) -> usize {
        self.rho0.dim()
    }

    fn generator(&self, xi: f64) -> CMatrix {
        &self.h_s + &self.v_s.scale_real(xi)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Integrator {
    /// exact propagator with `xi` held constant on each grid interval
    #[default]
    Pc,
    /// classical RK4 with step `2 dt`
    Rk4,
}

impl Integrator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Integrator::Pc => "pc",
            Integrator::Rk4 => "rk4",
        }
    }
}

impl fmt::Display for Integrator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pc" => Ok(Integrator::Pc),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(Error::InvalidParameter(format!("unknown integrator {other:?}, expected pc or rk4"))),
        }
    }
}

/// States on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
}

impl DensitySeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Entry `(i, j)` of every state.
    pub fn element(&self, (i, j): (usize, usize)) -> Vec<C64> {
        self.states.iter().map(|s| s[(i, j)]).collect()
    }

    fn check_compatible(&self, other: &DensitySeries) -> Result<()> {
        if self.times.len() != other.times.len() {
            return Err(Error::GridMismatch(format!(
                "series have {} and {} grid points",
                self.times.len(),
                other.times.len()
            )));
        }
        if let Some((a, b)) = self.times.iter().zip(&other.times).find(|(a, b)| (*a - *b).abs() > 1e-12 * a.abs().max(1.0)) {
            return Err(Error::GridMismatch(format!("grid times differ: {a} vs {b}")));
        }
        if let (Some(a), Some(b)) = (self.states.first(), other.states.first()) {
            if a.dim() != b.dim() {
                return Err(Error::DimensionMismatch {
                    expected: a.dim(),
                    found: b.dim(),
                });
            }
        }
        Ok(())
    }
}

fn trajectory_values(traj: &Trajectory, omega_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&index) = traj.outcome_indices.iter().find(|&&i| i >= omega_values.len()) {
        return Err(Error::IndexOutOfRange {
            index,
            len: omega_values.len(),
        });
    }
    if !(traj.grid_dt > 0.0) {
        return Err(Error::GridMismatch(format!("grid spacing must be positive, got {}", traj.grid_dt)));
    }
    Ok(traj.values(omega_values).collect())
}

/// `-i [H, rho]`
fn liouville(h: &CMatrix, rho: &CMatrix) -> CMatrix {
    h.commutator(rho).scale(C64::new(0.0, -1.0))
}

/// RK4 with step `h = 2 dt`. Step `n` reads `xi` at grid indices `2n`,
/// `2n + 1` (both interior stages) and `2n + 2`, so `floor((k - 1) / 2)`
/// steps fit in a trajectory of length `k`; a final odd sample is unused.
pub fn evolve_trajectory_rk4(sys: &SystemSpec, traj: &Trajectory, omega_values: &[f64]) -> Result<DensitySeries> {
    let xi = trajectory_values(traj, omega_values)?;
    let k = xi.len();
    if k < 3 {
        return Err(Error::GridMismatch(format!(
            "RK4 with step 2*dt needs at least 3 samples, got {k}"
        )));
    }
    let h = 2.0 * traj.grid_dt;
    let steps = (k - 1) / 2;
    let mut rho = sys.rho0.matrix().clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(traj.t0);
    states.push(rho.clone());
    for n in 0..steps {
        let start = sys.generator(xi[2 * n]);
        let mid = sys.generator(xi[2 * n + 1]);
        let end = sys.generator(xi[2 * n + 2]);
        let k1 = liouville(&start, &rho);
        let k2 = liouville(&mid, &(&rho + &k1.scale_real(h / 2.0)));
        let k3 = liouville(&mid, &(&rho + &k2.scale_real(h / 2.0)));
        let k4 = liouville(&end, &(&rho + &k3.scale_real(h)));
        let incr = &(&k1 + &k2.scale_real(2.0)) + &(&k3.scale_real(2.0) + &k4);
        rho = (&rho + &incr.scale_real(h / 6.0)).hermitian_part();
        times.push(traj.t0 + (n + 1) as f64 * h);
        states.push(rho.clone());
    }
    Ok(DensitySeries { times, states })
}

/// Exact ordered product of `exp[-i dt (H_S + xi_l V_S)]`, one factor per
/// sample. Returns `k + 1` states at `t0, t0 + dt, ..., t0 + k dt`.
pub fn evolve_trajectory_exact_pc(sys: &SystemSpec, traj: &Trajectory, omega_values: &[f64]) -> Result<DensitySeries> {
    let props = pc_propagators(sys, omega_values, traj.grid_dt)?;
    evolve_pc_with(sys, traj, omega_values, &props)
}

fn pc_propagators(sys: &SystemSpec, omega_values: &[f64], dt: f64) -> Result<Vec<CMatrix>> {
    omega_values.iter().map(|&x| unitary(&sys.generator(x), dt)).collect()
}

fn evolve_pc_with(sys: &SystemSpec, traj: &Trajectory, omega_values: &[f64], props: &[CMatrix]) -> Result<DensitySeries> {
    trajectory_values(traj, omega_values)?;
    if traj.is_empty() {
        return Err(Error::GridMismatch("trajectory is empty".into()));
    }
    let k = traj.len();
    let mut rho = sys.rho0.matrix().clone();
    let mut times = Vec::with_capacity(k + 1);
    let mut states = Vec::with_capacity(k + 1);
    times.push(traj.t0);
    states.push(rho.clone());
    for (l, &index) in traj.outcome_indices.iter().enumerate() {
        let u = &props[index];
        rho = &(u * &rho) * &u.adjoint();
        times.push(traj.time(l + 1));
        states.push(rho.clone());
    }
    Ok(DensitySeries { times, states })
}

pub fn evolve_trajectory(
    sys: &SystemSpec,
    traj: &Trajectory,
    omega_values: &[f64],
    integrator: Integrator,
) -> Result<DensitySeries> {
    match integrator {
        Integrator::Pc => evolve_trajectory_exact_pc(sys, traj, omega_values),
        Integrator::Rk4 => evolve_trajectory_rk4(sys, traj, omega_values),
    }
}

/// Deviations of one tracked matrix element from a reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub rms: f64,
    pub max: f64,
    pub per_time: Vec<f64>,
}

pub fn error_report(values: &[C64], reference: &[C64]) -> Result<ErrorReport> {
    if values.len() != reference.len() {
        return Err(Error::GridMismatch(format!(
            "{} values against {} reference points",
            values.len(),
            reference.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::GridMismatch("empty series".into()));
    }
    let per_time: Vec<f64> = values.iter().zip(reference).map(|(a, b)| (a - b).norm()).collect();
    let rms = (per_time.iter().map(|d| d * d).sum::<f64>() / per_time.len() as f64).sqrt();
    let max = per_time.iter().copied().fold(0.0, f64::max);
    Ok(ErrorReport { rms, max, per_time })
}

/// Ensemble-averaged states with an optional exact reference for the
/// tracked element.
#[derive(Clone, Debug)]
pub struct SimulationReport {
    average: DensitySeries,
    n_e: usize,
    integrator: Integrator,
    element: (usize, usize),
    exact: Option<Vec<f64>>,
}

impl SimulationReport {
    pub fn times(&self) -> &[f64] {
        &self.average.times
    }

    pub fn average(&self) -> &DensitySeries {
        &self.average
    }

    pub fn ensemble_size(&self) -> usize {
        self.n_e
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    pub fn element(&self) -> (usize, usize) {
        self.element
    }

    /// Selects the matrix element reported by [`Self::tracked`]; default `(0, 1)`.
    pub fn with_element(mut self, element: (usize, usize)) -> Result<Self> {
        let dim = self.average.states[0].dim();
        if element.0 >= dim || element.1 >= dim {
            return Err(Error::IndexOutOfRange {
                index: element.0.max(element.1),
                len: dim,
            });
        }
        self.element = element;
        Ok(self)
    }

    pub fn with_exact(mut self, exact: Vec<f64>) -> Result<Self> {
        if exact.len() != self.average.len() {
            return Err(Error::GridMismatch(format!(
                "{} reference values for {} grid times",
                exact.len(),
                self.average.len()
            )));
        }
        self.exact = Some(exact);
        Ok(self)
    }

    pub fn exact(&self) -> Option<&[f64]> {
        self.exact.as_deref()
    }

    pub fn tracked(&self) -> Vec<C64> {
        self.average.element(self.element)
    }

    pub fn error(&self) -> Option<ErrorReport> {
        let exact: Vec<C64> = self.exact.as_ref()?.iter().map(|&x| C64::new(x, 0.0)).collect();
        error_report(&self.tracked(), &exact).ok()
    }

    /// Largest trace or Hermiticity defect among the averaged states.
    pub fn state_defect(&self) -> f64 {
        self.average
            .states
            .iter()
            .map(|s| (s.trace() - 1.0).norm().max(s.hermiticity_error()))
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,re,im,abs,exact,abs_err`; the last two columns
    /// are empty without a reference.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use crate::fmt::decimal;
        writeln!(out, "t,re,im,abs,exact,abs_err")?;
        for (l, (t, c)) in self.average.times.iter().zip(self.tracked()).enumerate() {
            let (exact, err) = match &self.exact {
                Some(e) => (decimal(e[l]), decimal((c - e[l]).norm())),
                None => (String::new(), String::new()),
            };
            writeln!(out, "{},{},{},{},{exact},{err}", decimal(*t), decimal(c.re), decimal(c.im), decimal(c.norm()))?;
        }
        Ok(())
    }
}

/// Entry-wise mean of equally gridded series, summed in list order.
pub fn ensemble_average(series: &[DensitySeries], integrator: Integrator) -> Result<SimulationReport> {
    let first = series
        .first()
        .ok_or_else(|| Error::GridMismatch("no series to average".into()))?;
    if first.is_empty() {
        return Err(Error::GridMismatch("series is empty".into()));
    }
    let mut sum = first.states.clone();
    for s in &series[1..] {
        first.check_compatible(s)?;
        for (acc, m) in sum.iter_mut().zip(&s.states) {
            *acc = &*acc + m;
        }
    }
    let scale = 1.0 / series.len() as f64;
    Ok(SimulationReport {
        average: DensitySeries {
            times: first.times.clone(),
            states: sum.iter().map(|m| m.scale_real(scale)).collect(),
        },
        n_e: series.len(),
        integrator,
        element: (0, 1.min(first.states[0].dim() - 1)),
        exact: None,
    })
}

/// Evolves every trajectory of the ensemble and averages. Work is split into
/// fixed chunks evaluated in parallel and summed in order, so the result is
/// bit-identical for any thread count.
pub fn replay_ensemble(sys: &SystemSpec, ens: &TrajectoryEnsemble, integrator: Integrator) -> Result<SimulationReport> {
    let omega = ens.omega_values();
    let props = match integrator {
        Integrator::Pc => pc_propagators(sys, omega, ens.dt())?,
        Integrator::Rk4 => Vec::new(),
    };
    let evolve = |traj: &Trajectory| match integrator {
        Integrator::Pc => evolve_pc_with(sys, traj, omega, &props),
        Integrator::Rk4 => evolve_trajectory_rk4(sys, traj, omega),
    };
    let partials = ens
        .trajectories()
        .par_chunks(REPLAY_CHUNK)
        .map(|chunk| {
            let mut acc = evolve(&chunk[0])?;
            for traj in &chunk[1..] {
                let s = evolve(traj)?;
                for (a, m) in acc.states.iter_mut().zip(&s.states) {
                    *a = &*a + m;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ensemble_average(&partials, integrator)?;
    // partial sums were averaged over chunks; rescale to the trajectory mean
    let scale = partials.len() as f64 / ens.len() as f64;
    for m in report.average.states.iter_mut() {
        *m = m.scale_real(scale);
    }
    report.n_e = ens.len();
    Ok(report)
}

/// Closed-form coherence `rho_01(t)` of the pure-dephasing qubit under
/// random telegraph noise of switching rate `gamma` and amplitude `omega/2`:
/// `(1/2) e^{-gamma t} [cosh(mu gamma t) + sinh(mu gamma t) / mu]`,
/// `mu = sqrt(1 - omega^2 / (4 gamma^2))`, continued analytically for
/// `omega > 2 gamma`.
pub fn exact_rtn_coherence(gamma: f64, omega: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(t >= 0.0) || !t.is_finite() || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("need finite t >= 0 and omega, got t = {t}, omega = {omega}")));
    }
    let mu2 = 1.0 - omega * omega / (4.0 * gamma * gamma);
    let gt = gamma * t;
    let envelope = 0.5 * (-gt).exp();
    let mu = mu2.abs().sqrt();
    let value = if mu < 1e-8 {
        envelope * (1.0 + gt)
    } else if mu2 > 0.0 {
        envelope * ((mu * gt).cosh() + (mu * gt).sinh() / mu)
    } else {
        envelope * ((mu * gt).cos() + (mu * gt).sin() / mu)
    };
    Ok(value)
}

/// [`exact_rtn_coherence`] on each time.
pub fn exact_rtn_series(gamma: f64, omega: f64, times: &[f64]) -> Result<Vec<f64>> {
    times.iter().map(|&t| exact_rtn_coherence(gamma, omega, t)).collect()
}
