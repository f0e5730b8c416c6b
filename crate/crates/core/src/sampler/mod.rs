//! Sequential projective measurement of the environment coupling.
//!
//! A trajectory is produced by measuring the coupling observable at
//! `t_1 = 0`, collapsing the state onto the observed eigenspace, letting it
//! evolve freely for one grid interval, and repeating. Outcomes are stored as
//! indices into the observable's spectrum.

mod io;
mod rng;

use rand::Rng;
use rayon::prelude::*;

pub use io::{load_ensemble, read_ensemble, save_ensemble, write_ensemble, FORMAT_TAG};
pub use rng::{splitmix64, stream_seed, trajectory_rng};

use crate::envmodel::{EnvironmentModel, Propagator};
use crate::error::{Error, Result};
use crate::qcore::{CMatrix, DensityMatrix, Observable};

/// Smallest probability an outcome may have and still be selected.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-14;

/// Allowed deviation of the Born probabilities from summing to one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-10;

/// Outcome sequence on a uniform grid `t0, t0 + dt, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub outcome_indices: Vec<usize>,
    pub grid_dt: f64,
    pub t0: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.outcome_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome_indices.is_empty()
    }

    pub fn time(&self, l: usize) -> f64 {
        self.t0 + l as f64 * self.grid_dt
    }

    /// Outcome values `xi(t_l)` given the spectrum the indices refer to.
    pub fn values<'a>(&'a self, omega_values: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.outcome_indices.iter().map(move |&i| omega_values[i])
    }
}

/// Equal-length trajectories sampled from one model.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    trajectories: Vec<Trajectory>,
    omega_values: Vec<f64>,
    model_fingerprint: String,
    master_seed: u64,
    created_at: String,
}

impl TrajectoryEnsemble {
    /// Checks that all trajectories share length, grid, and index range.
    pub fn new(
        trajectories: Vec<Trajectory>,
        omega_values: Vec<f64>,
        model_fingerprint: impl Into<String>,
        master_seed: u64,
        created_at: impl Into<String>,
    ) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InsufficientData("ensemble needs at least one trajectory".into()))?;
        if first.is_empty() {
            return Err(Error::InsufficientData("trajectories need at least one outcome".into()));
        }
        if !(first.grid_dt > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing must be positive, got {}", first.grid_dt)));
        }
        for (j, traj) in trajectories.iter().enumerate() {
            if traj.len() != first.len() || traj.grid_dt != first.grid_dt || traj.t0 != first.t0 {
                return Err(Error::GridMismatch(format!(
                    "trajectory {j} does not share the grid of trajectory 0"
                )));
            }
            if let Some(&bad) = traj.outcome_indices.iter().find(|&&i| i >= omega_values.len()) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    len: omega_values.len(),
                });
            }
        }
        Ok(TrajectoryEnsemble {
            trajectories,
            omega_values,
            model_fingerprint: model_fingerprint.into(),
            master_seed,
            created_at: created_at.into(),
        })
    }

    /// Number of trajectories `N_e`.
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Measurements per trajectory `k`.
    pub fn steps(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.trajectories[0].grid_dt
    }

    pub fn t0(&self) -> f64 {
        self.trajectories[0].t0
    }

    pub fn omega_values(&self) -> &[f64] {
        &self.omega_values
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, j: usize) -> &Trajectory {
        &self.trajectories[j]
    }

    /// `xi^{(j)}(t_l)`
    pub fn value(&self, j: usize, l: usize) -> f64 {
        self.omega_values[self.trajectories[j].outcome_indices[l]]
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn created_at(&self) -> &str {
        &self.created_at
    }

    pub fn with_created_at(mut self, created_at: impl Into<String>) -> Self {
        self.created_at = created_at.into();
        self
    }

    /// The first `n` trajectories as a smaller ensemble.
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.len(),
            });
        }
        Ok(TrajectoryEnsemble {
            trajectories: self.trajectories[..n].to_vec(),
            ..self.clone()
        })
    }

    /// Empirical frequency of each outcome at grid index `l`.
    pub fn marginal(&self, l: usize) -> Vec<f64> {
        let mut counts = vec![0usize; self.omega_values.len()];
        for traj in &self.trajectories {
            counts[traj.outcome_indices[l]] += 1;
        }
        counts.iter().map(|&c| c as f64 / self.len() as f64).collect()
    }
}

/// Result of one projective measurement.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub index: usize,
    pub collapsed: DensityMatrix,
    pub probability: f64,
}

/// Born-rule probabilities `tr(P_i rho)` for every outcome.
pub fn born_probabilities(state: &CMatrix, obs: &Observable) -> Vec<f64> {
    obs.projectors().iter().map(|p| p.inner(state).re).collect()
}

fn measure_matrix(state: &CMatrix, obs: &Observable, rand01: f64) -> Result<(usize, CMatrix, f64)> {
    let probs = born_probabilities(state, obs);
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(Error::InvalidState(format!("Born probabilities sum to {total}")));
    }
    // inverse CDF
    let mut cumulative = 0.0;
    let mut index = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if rand01 < cumulative {
            index = i;
            break;
        }
    }
    let probability = probs[index];
    if probability < MIN_OUTCOME_PROBABILITY {
        return Err(Error::DegenerateDistribution { index, probability });
    }
    let proj = obs.projector(index);
    let collapsed = (&(proj * state) * proj).scale_real(1.0 / probability).hermitian_part();
    Ok((index, collapsed, probability))
}

/// Draws one outcome with probability `tr(P_i rho)` by inverting the
/// cumulative distribution at `rand01`, and returns the collapsed state
/// `P_i rho P_i / p_i`.
pub fn measure_once(state: &DensityMatrix, obs: &Observable, rand01: f64) -> Result<Measurement> {
    state.matrix().check_dim(obs.dim())?;
    let (index, collapsed, probability) = measure_matrix(state.matrix(), obs, rand01)?;
    Ok(Measurement {
        index,
        collapsed: DensityMatrix::new_unchecked(collapsed),
        probability,
    })
}

fn sample_with<R: Rng + ?Sized>(
    propagator: &Propagator,
    obs: &Observable,
    initial: &CMatrix,
    dt: f64,
    k: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut state = initial.clone();
    let mut outcome_indices = Vec::with_capacity(k);
    for l in 0..k {
        let (index, collapsed, _) = measure_matrix(&state, obs, rng.random::<f64>())?;
        outcome_indices.push(index);
        if l + 1 < k {
            state = propagator.apply(&collapsed);
        }
    }
    Ok(Trajectory {
        outcome_indices,
        grid_dt: dt,
        t0: 0.0,
    })
}

fn check_grid(dt: f64, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("a trajectory needs at least one measurement".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("measurement interval must be positive, got {dt}")));
    }
    Ok(())
}

/// Samples `k` measurement outcomes spaced by `dt`, starting from the model's
/// initial state at `t_1 = 0`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    env: &EnvironmentModel,
    dt: f64,
    k: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    check_grid(dt, k)?;
    let propagator = env.propagator(dt)?;
    sample_with(&propagator, env.coupling(), env.initial_state().matrix(), dt, k, rng)
}

/// Samples `n_e` independent trajectories in parallel. Trajectory `j` uses
/// [`trajectory_rng`]`(master_seed, j)`, so the result is independent of the
/// thread count.
pub fn sample_ensemble(
    env: &EnvironmentModel,
    dt: f64,
    k: usize,
    n_e: usize,
    master_seed: u64,
) -> Result<TrajectoryEnsemble> {
    check_grid(dt, k)?;
    if n_e == 0 {
        return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
    }
    let propagator = env.propagator(dt)?;
    let obs = env.coupling();
    let initial = env.initial_state().matrix();
    let trajectories = (0..n_e)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_rng(master_seed, j as u64);
            sample_with(&propagator, obs, initial, dt, k, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryEnsemble::new(
        trajectories,
        obs.values().to_vec(),
        env.fingerprint(),
        master_seed,
        timestamp(),
    )
}

pub(crate) fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::{build_rtn_env, ExactEnvironment};
    use crate::qcore::pauli;

    fn rtn() -> EnvironmentModel {
        build_rtn_env(1.0, 2.0).unwrap()
    }

    #[test]
    fn mixed_state_gives_even_odds() {
        let env = rtn();
        let probs = born_probabilities(DensityMatrix::maximally_mixed(2).matrix(), env.coupling());
        assert_eq!(probs, vec![0.5, 0.5]);
        let low = measure_once(&DensityMatrix::maximally_mixed(2), env.coupling(), 0.49).unwrap();
        let high = measure_once(&DensityMatrix::maximally_mixed(2), env.coupling(), 0.51).unwrap();
        assert_eq!((low.index, high.index), (0, 1));
        assert_eq!(low.probability, 0.5);
    }

    #[test]
    fn eigenstate_is_certain_and_unchanged() {
        let env = rtn();
        let plus = DensityMatrix::basis_state(2, 0);
        for u in [0.0, 0.3, 0.999_999] {
            let m = measure_once(&plus, env.coupling(), u).unwrap();
            assert_eq!(env.coupling().values()[m.index], 1.0);
            assert_eq!(m.probability, 1.0);
            assert!(m.collapsed.matrix().max_abs_diff(plus.matrix()) < 1e-15);
        }
    }

    #[test]
    fn born_rule_on_partially_polarized_state() {
        let env = rtn();
        let z = (-0.4f64).exp();
        let rho = DensityMatrix::from_bloch(0.0, 0.0, z).unwrap();
        let probs = born_probabilities(rho.matrix(), env.coupling());
        assert!((probs[1] - (1.0 + z) / 2.0).abs() < 1e-15);
        assert!((probs[1] - 0.835160023017820).abs() < 1e-12);
        let m = measure_once(&rho, env.coupling(), 0.5).unwrap();
        assert_eq!(m.index, 1);
        assert!(m.collapsed.matrix().max_abs_diff(DensityMatrix::basis_state(2, 0).matrix()) < 1e-15);
    }

    #[test]
    fn impossible_outcome_is_reported() {
        let env = rtn();
        // u at the top of the range falls through to the last (certain) outcome
        let plus = DensityMatrix::basis_state(2, 0);
        assert_eq!(measure_once(&plus, env.coupling(), 1.0).unwrap().index, 1);
        let three = Observable::from_matrix(&CMatrix::diag(&[0.0, 1.0, 2.0])).unwrap();
        let state = DensityMatrix::basis_state(3, 1);
        // u >= cumulative total selects the last outcome, which is impossible here
        assert!(matches!(
            measure_once(&state, &three, 1.0),
            Err(Error::DegenerateDistribution { index: 2, .. })
        ));
    }

    #[test]
    fn frozen_dynamics_gives_constant_trajectories() {
        let env = build_rtn_env(1e-12, 2.0).unwrap();
        let ens = sample_ensemble(&env, 0.2, 50, 50, 9).unwrap();
        for traj in ens.trajectories() {
            assert!(traj.outcome_indices.iter().all(|&i| i == traj.outcome_indices[0]));
        }
    }

    #[test]
    fn ensembles_are_deterministic_and_thread_independent() {
        let env = rtn();
        let a = sample_ensemble(&env, 0.2, 20, 64, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_ensemble(&env, 0.2, 20, 64, 42).unwrap());
        assert_eq!(a.trajectories(), b.trajectories());
        let c = sample_ensemble(&env, 0.2, 20, 64, 43).unwrap();
        assert_ne!(a.trajectories(), c.trajectories());
        // single trajectory equals the ensemble slot with the same stream
        let mut rng = trajectory_rng(42, 5);
        let single = sample_trajectory(&env, 0.2, 20, &mut rng).unwrap();
        assert_eq!(&single, a.trajectory(5));
    }

    #[test]
    fn exact_environment_sampling_follows_collapse() {
        // [H, V] = 0: the measured value never changes
        let rho = DensityMatrix::new(CMatrix::diag(&[0.25, 0.75])).unwrap();
        let env = EnvironmentModel::exact(
            ExactEnvironment::new(pauli::z().scale_real(3.0), rho, &pauli::z()).unwrap(),
            "commuting",
        );
        let ens = sample_ensemble(&env, 0.3, 10, 400, 1).unwrap();
        for traj in ens.trajectories() {
            assert!(traj.outcome_indices.iter().all(|&i| i == traj.outcome_indices[0]));
        }
        let p_plus = ens.marginal(0)[1];
        // binomial std err sqrt(0.25*0.75/400) ~ 0.0217
        assert!((p_plus - 0.25).abs() < 4.0 * 0.0217);
    }

    #[test]
    fn bad_grid_is_rejected() {
        let env = rtn();
        assert!(sample_ensemble(&env, 0.0, 5, 5, 0).is_err());
        assert!(sample_ensemble(&env, 0.2, 0, 5, 0).is_err());
        assert!(sample_ensemble(&env, 0.2, 5, 0, 0).is_err());
    }

    #[test]
    fn ensemble_constructor_validates() {
        let t = |idx: Vec<usize>| Trajectory {
            outcome_indices: idx,
            grid_dt: 0.2,
            t0: 0.0,
        };
        assert!(TrajectoryEnsemble::new(vec![t(vec![0, 1]), t(vec![1])], vec![-1.0, 1.0], "", 0, "").is_err());
        assert!(matches!(
            TrajectoryEnsemble::new(vec![t(vec![0, 2])], vec![-1.0, 1.0], "", 0, ""),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
        let ens = TrajectoryEnsemble::new(vec![t(vec![0, 1]), t(vec![1, 1])], vec![-1.0, 1.0], "", 0, "").unwrap();
        assert_eq!(ens.value(0, 0), -1.0);
        assert_eq!(ens.marginal(1), vec![0.0, 1.0]);
        assert_eq!(ens.head(1).unwrap().len(), 1);
    }
}
