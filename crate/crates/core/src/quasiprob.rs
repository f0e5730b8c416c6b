//! Joint probabilities and quasi-probabilities of measured outcome sequences.
//!
//! For an exact environment (H_E, rho_E, V_E) the quasi-probability of a pair
//! of outcome sequences `(xi, zeta)` on times `t_1 < ... < t_k` is
//!
//! ```text
//! q(xi, zeta) = tr[ A(xi) rho_E A(zeta)^H ],   A(xi) = P~(xi_k, t_k) ... P~(xi_1, t_1)
//! ```
//!
//! with interaction-picture projectors `P~(x, t) = e^{itH} P(x) e^{-itH}`.
//! Sequence probabilities are the diagonal `xi = zeta`; they are computed
//! independently by chaining collapse and free evolution, which also covers
//! Lindblad-reduced environments. A noise picture is consistent on a grid when
//! all weight sits on the diagonal and the diagonal marginalizes consistently.

use std::io::Write;

use rayon::prelude::*;

use crate::envmodel::{EnvironmentModel, ExactEnvironment, Propagator};
use crate::error::{Error, Result};
use crate::qcore::{CMatrix, Observable, C64};

/// Default cap on the number of stored table entries.
pub const DEFAULT_TABLE_BUDGET: usize = 1_000_000;

/// Strictly increasing measurement times.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("time grid is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("time grid has non-finite entries".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(format!(
                "time grid must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        Ok(TimeGrid { times })
    }

    /// `t0, t0 + dt, ..., t0 + (k - 1) dt`
    pub fn uniform(t0: f64, dt: f64, k: usize) -> Result<Self> {
        Self::new((0..k).map(|l| t0 + l as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The grid with time index `j` removed.
    pub fn without(&self, j: usize) -> Result<Self> {
        let times: Vec<f64> = self
            .times
            .iter()
            .enumerate()
            .filter(|&(l, _)| l != j)
            .map(|(_, &t)| t)
            .collect();
        Self::new(times)
    }
}

fn check_budget(n_values: usize, exponent: usize, budget: usize) -> Result<()> {
    let required = (n_values as u128).saturating_pow(exponent as u32);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// Digits of `index` in base `n`, most significant first (time order).
fn sequence(mut index: usize, n: usize, k: usize) -> Vec<usize> {
    let mut seq = vec![0; k];
    for slot in seq.iter_mut().rev() {
        *slot = index % n;
        index /= n;
    }
    seq
}

fn sequence_index(seq: &[usize], n: usize) -> usize {
    seq.iter().fold(0, |acc, &d| acc * n + d)
}

fn join_seq(seq: &[usize]) -> String {
    seq.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(";")
}

/// Joint quasi-probabilities `q(xi, zeta)` over all outcome-index sequences.
///
/// Only entries with `xi_k == zeta_k` are stored; the rest vanish identically.
#[derive(Clone, Debug)]
pub struct QuasiProbTable {
    grid: TimeGrid,
    omega_values: Vec<f64>,
    /// index: `seq_index(xi) * n^(k-1) + seq_index(zeta_1..zeta_{k-1})`
    entries: Vec<C64>,
}

impl QuasiProbTable {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn omega_values(&self) -> &[f64] {
        &self.omega_values
    }

    fn n(&self) -> usize {
        self.omega_values.len()
    }

    fn k(&self) -> usize {
        self.grid.len()
    }

    pub fn get(&self, xi: &[usize], zeta: &[usize]) -> C64 {
        let k = self.k();
        assert!(xi.len() == k && zeta.len() == k, "sequence length must match the grid");
        if xi[k - 1] != zeta[k - 1] {
            return C64::new(0.0, 0.0);
        }
        let n = self.n();
        let tail = n.pow((k - 1) as u32);
        self.entries[sequence_index(xi, n) * tail + sequence_index(&zeta[..k - 1], n)]
    }

    /// Stored entries as `(xi, zeta, q)`.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, Vec<usize>, C64)> + '_ {
        let n = self.n();
        let k = self.k();
        let tail = n.pow((k - 1) as u32);
        self.entries.iter().enumerate().map(move |(i, &q)| {
            let xi = sequence(i / tail, n, k);
            let mut zeta = sequence(i % tail, n, k - 1);
            zeta.push(xi[k - 1]);
            (xi, zeta, q)
        })
    }

    pub fn total(&self) -> C64 {
        self.entries.iter().sum()
    }

    /// `xi = zeta` entries as a probability table (real parts).
    pub fn diagonal(&self) -> ProbTable {
        let n = self.n();
        let k = self.k();
        let probs = (0..n.pow(k as u32))
            .map(|i| {
                let xi = sequence(i, n, k);
                self.get(&xi, &xi).re
            })
            .collect();
        ProbTable {
            grid: self.grid.clone(),
            omega_values: self.omega_values.clone(),
            probs,
        }
    }

    /// Largest `|q(xi, zeta) - conj(q(zeta, xi))|`.
    pub fn swap_asymmetry(&self) -> f64 {
        self.iter()
            .map(|(xi, zeta, q)| (q - self.get(&zeta, &xi).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `xi,zeta,re,im`; sequences are `;`-joined outcome
    /// indices in time order. Entries with `xi_k != zeta_k` are omitted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use crate::fmt::decimal;
        writeln!(out, "xi,zeta,re,im")?;
        for (xi, zeta, q) in self.iter() {
            writeln!(out, "{},{},{},{}", join_seq(&xi), join_seq(&zeta), decimal(q.re), decimal(q.im))?;
        }
        Ok(())
    }
}

/// Probabilities of outcome-index sequences on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    grid: TimeGrid,
    omega_values: Vec<f64>,
    probs: Vec<f64>,
}

impl ProbTable {
    pub fn new(grid: TimeGrid, omega_values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let expected = omega_values.len().pow(grid.len() as u32);
        if probs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: probs.len(),
            });
        }
        Ok(ProbTable {
            grid,
            omega_values,
            probs,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn omega_values(&self) -> &[f64] {
        &self.omega_values
    }

    /// Flat probabilities, `xi_1` most significant.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, seq: &[usize]) -> f64 {
        self.probs[sequence_index(seq, self.omega_values.len())]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let n = self.omega_values.len();
        let k = self.grid.len();
        self.probs.iter().enumerate().map(move |(i, &p)| (sequence(i, n, k), p))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Sums out time index `j`.
    pub fn marginalize(&self, j: usize) -> Result<ProbTable> {
        let k = self.grid.len();
        if j >= k {
            return Err(Error::IndexOutOfRange { index: j, len: k });
        }
        let n = self.omega_values.len();
        let mut probs = vec![0.0; n.pow((k - 1) as u32)];
        for (mut seq, p) in self.iter() {
            seq.remove(j);
            probs[sequence_index(&seq, n)] += p;
        }
        ProbTable::new(self.grid.without(j)?, self.omega_values.clone(), probs)
    }

    /// Total variation distance `(1/2) sum |p - q|`.
    pub fn total_variation(&self, other: &ProbTable) -> Result<f64> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.probs.len(),
                found: other.probs.len(),
            });
        }
        Ok(0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// CSV with header `xi,p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        use crate::fmt::decimal;
        writeln!(out, "xi,p")?;
        for (seq, p) in self.iter() {
            writeln!(out, "{},{}", join_seq(&seq), decimal(p))?;
        }
        Ok(())
    }
}

pub fn joint_quasiprob(env: &ExactEnvironment, grid: &TimeGrid) -> Result<QuasiProbTable> {
    joint_quasiprob_with_budget(env, grid, DEFAULT_TABLE_BUDGET)
}

/// Brute-force table of `q(xi, zeta)` from products of interaction-picture
/// projectors. Requires `|Omega|^(2k-1) <= budget`.
pub fn joint_quasiprob_with_budget(env: &ExactEnvironment, grid: &TimeGrid, budget: usize) -> Result<QuasiProbTable> {
    let obs = env.coupling();
    let n = obs.len();
    let k = grid.len();
    check_budget(n, 2 * k - 1, budget)?;

    // P~(x, t_l) for every time and outcome
    let heisenberg: Vec<Vec<CMatrix>> = grid
        .times()
        .iter()
        .map(|&t| {
            let u = env.propagator(t);
            let u_dag = u.adjoint();
            obs.projectors().iter().map(|p| &(&u_dag * p) * &u).collect()
        })
        .collect();

    // A(xi) for every sequence, built time by time
    let mut chains: Vec<CMatrix> = heisenberg[0].clone();
    for projectors in &heisenberg[1..] {
        chains = chains
            .iter()
            .flat_map(|a| projectors.iter().map(move |p| p * a))
            .collect();
    }

    let rho = env.initial_state().matrix();
    let tail = n.pow((k - 1) as u32);
    let entries: Vec<C64> = chains
        .par_iter()
        .enumerate()
        .flat_map_iter(|(xi_index, a_xi)| {
            let left = a_xi * rho;
            let last = xi_index % n;
            let chains = &chains;
            (0..tail).map(move |zeta_prefix| chains[zeta_prefix * n + last].inner(&left))
        })
        .collect();

    Ok(QuasiProbTable {
        grid: grid.clone(),
        omega_values: obs.values().to_vec(),
        entries,
    })
}

/// Sequence probabilities by chaining unnormalized collapse and free evolution:
/// `p = tr[P_k E_{k-1}( ... E_1(P_1 rho(t_1) P_1) ... ) P_k]`.
fn chain_probabilities(obs: &Observable, start: &CMatrix, steps: &[Propagator]) -> Vec<f64> {
    fn recurse(obs: &Observable, state: &CMatrix, steps: &[Propagator], out: &mut Vec<f64>) {
        for proj in obs.projectors() {
            let collapsed = &(proj * state) * proj;
            match steps.split_first() {
                None => out.push(collapsed.trace().re),
                Some((step, rest)) => recurse(obs, &step.apply(&collapsed), rest, out),
            }
        }
    }
    let mut out = Vec::with_capacity(obs.len().pow(steps.len() as u32 + 1));
    recurse(obs, start, steps, &mut out);
    out
}

pub fn joint_prob(env: &EnvironmentModel, grid: &TimeGrid) -> Result<ProbTable> {
    joint_prob_with_budget(env, grid, DEFAULT_TABLE_BUDGET)
}

/// Probability of every outcome sequence on `grid` for sequential projective
/// measurement of the coupling, starting from the model's initial state at
/// `t = 0`.
pub fn joint_prob_with_budget(env: &EnvironmentModel, grid: &TimeGrid, budget: usize) -> Result<ProbTable> {
    let obs = env.coupling();
    check_budget(obs.len(), grid.len(), budget)?;
    let times = grid.times();
    if times[0] < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "first measurement time must be nonnegative, got {}",
            times[0]
        )));
    }
    let start = env.propagator(times[0])?.apply(env.initial_state().matrix());
    let steps = times
        .windows(2)
        .map(|w| env.propagator(w[1] - w[0]))
        .collect::<Result<Vec<_>>>()?;
    ProbTable::new(grid.clone(), obs.values().to_vec(), chain_probabilities(obs, &start, &steps))
}

/// Sequence probabilities from the eigenstate-sum formula
/// `sum <n_1|rho(t_1)|n_1> prod |<n_{l+1}| e^{-i(t_{l+1}-t_l)H} |n_l>|^2`,
/// where each `n_l` runs over the eigenvectors of the observed eigenvalue.
///
/// This drops coherences inside degenerate eigenspaces, so it agrees with
/// [`joint_prob`] only when those coherences play no role.
pub fn joint_prob_eigenbasis(env: &ExactEnvironment, grid: &TimeGrid) -> Result<ProbTable> {
    let obs = env.coupling();
    let n = obs.len();
    let k = grid.len();
    check_budget(n, k, DEFAULT_TABLE_BUDGET)?;
    let times = grid.times();

    // flattened eigenbasis with outcome labels
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let mut label: Vec<usize> = Vec::new();
    for x in 0..n {
        for v in obs.eigenvectors(x) {
            basis.push(v.clone());
            label.push(x);
        }
    }
    let dim = basis.len();
    let u0 = env.propagator(times[0]);
    let rho_t1 = &(&u0 * env.initial_state().matrix()) * &u0.adjoint();
    let populations: Vec<f64> = basis
        .iter()
        .map(|v| {
            let rv = rho_t1.mul_vec(v);
            v.iter().zip(&rv).map(|(a, b)| a.conj() * b).sum::<C64>().re
        })
        .collect();
    // |<m|U|n>|^2 per interval
    let transitions: Vec<Vec<Vec<f64>>> = times
        .windows(2)
        .map(|w| {
            let u = env.propagator(w[1] - w[0]);
            let images: Vec<Vec<C64>> = basis.iter().map(|v| u.mul_vec(v)).collect();
            (0..dim)
                .map(|m| {
                    (0..dim)
                        .map(|nn| {
                            basis[m]
                                .iter()
                                .zip(&images[nn])
                                .map(|(a, b)| a.conj() * b)
                                .sum::<C64>()
                                .norm_sqr()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let probs = (0..n.pow(k as u32))
        .map(|i| {
            let seq = sequence(i, n, k);
            let mut weights: Vec<f64> = (0..dim)
                .map(|b| if label[b] == seq[0] { populations[b] } else { 0.0 })
                .collect();
            for (l, trans) in transitions.iter().enumerate() {
                weights = (0..dim)
                    .map(|m| {
                        if label[m] != seq[l + 1] {
                            return 0.0;
                        }
                        (0..dim).map(|b| trans[m][b] * weights[b]).sum()
                    })
                    .collect();
            }
            weights.iter().sum()
        })
        .collect();
    ProbTable::new(grid.clone(), obs.values().to_vec(), probs)
}

/// Largest absolute difference between [`joint_prob`] and
/// [`joint_prob_eigenbasis`] on the same grid.
pub fn eigenbasis_discrepancy(env: &ExactEnvironment, grid: &TimeGrid) -> Result<f64> {
    let sequential = joint_prob(&EnvironmentModel::exact(env.clone(), ""), grid)?;
    let eigensum = joint_prob_eigenbasis(env, grid)?;
    Ok(sequential
        .probs()
        .iter()
        .zip(eigensum.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Diagnostics of the noise-representation condition on one grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidityWitness {
    /// `sum |q(xi, zeta)|` over pairs with `xi != zeta`
    pub offdiag_mass: f64,
    /// max over non-final time indices `j` of
    /// `max |sum_{xi_j} p^(k) - p^(k-1)|`
    pub kolmogorov_residual: f64,
}

impl ValidityWitness {
    pub fn holds(&self, tol: f64) -> bool {
        self.offdiag_mass <= tol && self.kolmogorov_residual <= tol
    }
}

pub fn validity_witness(env: &ExactEnvironment, grid: &TimeGrid) -> Result<ValidityWitness> {
    validity_witness_with_budget(env, grid, DEFAULT_TABLE_BUDGET)
}

pub fn validity_witness_with_budget(env: &ExactEnvironment, grid: &TimeGrid, budget: usize) -> Result<ValidityWitness> {
    let table = joint_quasiprob_with_budget(env, grid, budget)?;
    let offdiag_mass = table
        .iter()
        .filter(|(xi, zeta, _)| xi != zeta)
        .map(|(_, _, q)| q.norm())
        .fold(0.0, |acc, x| acc + x);

    let k = grid.len();
    let model = EnvironmentModel::exact(env.clone(), "");
    let full = table.diagonal();
    let mut kolmogorov_residual: f64 = 0.0;
    // marginalizing the final time holds identically, so only earlier ones are tested
    for j in 0..k.saturating_sub(1) {
        let marginal = full.marginalize(j)?;
        let reduced = joint_prob_with_budget(&model, marginal.grid(), budget)?;
        let worst = marginal
            .probs()
            .iter()
            .zip(reduced.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        kolmogorov_residual = kolmogorov_residual.max(worst);
    }
    Ok(ValidityWitness {
        offdiag_mass,
        kolmogorov_residual,
    })
}

/// `sum over sequences of (prod_l xi_l) p(xi)`
pub fn moment(p: &ProbTable) -> f64 {
    let omega = p.omega_values();
    p.iter()
        .map(|(seq, prob)| seq.iter().map(|&i| omega[i]).product::<f64>() * prob)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envmodel::build_rtn_env;
    use crate::qcore::{pauli, unitary, DensityMatrix};
    use proptest::prelude::*;

    fn noncommuting_demo() -> ExactEnvironment {
        ExactEnvironment::new(
            pauli::x().scale_real(0.5 * 1.5),
            DensityMatrix::basis_state(2, 0),
            &pauli::z(),
        )
        .unwrap()
    }

    /// Schroedinger-picture form
    /// `tr[P(x2) W P(x1) rho(t_1) P(z1) W^H P(x2)]` with `W = e^{-i(t_2 - t_1)H}`.
    type PairEntry = ((usize, usize), (usize, usize), C64);

    fn two_time_oracle(h: &CMatrix, rho: &CMatrix, v: &CMatrix, t1: f64, t2: f64) -> Vec<PairEntry> {
        let obs = Observable::from_matrix(v).unwrap();
        let u1 = unitary(h, t1).unwrap();
        let rho_t1 = &(&u1 * rho) * &u1.adjoint();
        let fwd = unitary(h, t2 - t1).unwrap();
        let back = fwd.adjoint();
        let mut out = Vec::new();
        for x1 in 0..obs.len() {
            for x2 in 0..obs.len() {
                for z1 in 0..obs.len() {
                    let left = &(&(obs.projector(x2) * &fwd) * obs.projector(x1)) * &rho_t1;
                    let right = &(obs.projector(z1) * &back) * obs.projector(x2);
                    out.push(((x1, x2), (z1, x2), (&left * &right).trace()));
                }
            }
        }
        out
    }

    #[test]
    fn single_time_table_is_born_rule() {
        let env = noncommuting_demo();
        let grid = TimeGrid::new(vec![0.7]).unwrap();
        let q = joint_quasiprob(&env, &grid).unwrap();
        let u = unitary(env.hamiltonian(), 0.7).unwrap();
        let rho_t = &(&u * env.initial_state().matrix()) * &u.adjoint();
        for x in 0..2 {
            let born = env.coupling().projector(x).inner(&rho_t).re;
            let entry = q.get(&[x], &[x]);
            assert!((entry.re - born).abs() < 1e-14 && entry.im.abs() < 1e-14);
            assert!(entry.re >= 0.0);
        }
        assert!((q.total() - 1.0).norm() < 1e-14);
        let w = validity_witness(&env, &grid).unwrap();
        assert_eq!(w.offdiag_mass, 0.0);
        assert_eq!(w.kolmogorov_residual, 0.0);
    }

    #[test]
    fn two_time_table_matches_relative_propagator_form() {
        let env = noncommuting_demo();
        let (t1, t2) = (0.3, 1.1);
        let grid = TimeGrid::new(vec![t1, t2]).unwrap();
        let q = joint_quasiprob(&env, &grid).unwrap();
        let oracle = two_time_oracle(env.hamiltonian(), env.initial_state().matrix(), env.coupling().source(), t1, t2);
        let mut offdiag = 0.0;
        for ((x1, x2), (z1, z2), expected) in oracle {
            let got = q.get(&[x1, x2], &[z1, z2]);
            assert!((got - expected).norm() < 1e-13, "{x1}{x2}/{z1}{z2}: {got} vs {expected}");
            if x1 != z1 {
                offdiag += expected.norm();
            }
        }
        assert!(offdiag > 1e-3);
        assert!((q.total() - 1.0).norm() < 1e-13);
        assert!(q.swap_asymmetry() < 1e-14);
        assert!(q.get(&[0, 0], &[0, 1]).norm() == 0.0);
    }

    #[test]
    fn commuting_environment_has_no_offdiagonal_weight() {
        let h = CMatrix::diag(&[0.4, -1.2, 2.0]);
        let v = CMatrix::diag(&[1.0, 1.0, -0.5]);
        let rho = DensityMatrix::new(CMatrix::diag(&[0.2, 0.5, 0.3])).unwrap();
        let env = ExactEnvironment::new(h, rho, &v).unwrap();
        for k in 1..=3 {
            let grid = TimeGrid::uniform(0.1, 0.35, k).unwrap();
            let w = validity_witness(&env, &grid).unwrap();
            assert!(w.offdiag_mass < 1e-12 && w.kolmogorov_residual < 1e-12, "k={k}: {w:?}");
        }
    }

    #[test]
    fn rtn_marginals_and_pairs() {
        let env = build_rtn_env(1.0, 2.0).unwrap();
        let p1 = joint_prob(&env, &TimeGrid::new(vec![0.0]).unwrap()).unwrap();
        assert_eq!(p1.probs(), &[0.5, 0.5]);

        let p2 = joint_prob(&env, &TimeGrid::uniform(0.0, 0.2, 2).unwrap()).unwrap();
        let stay = 0.5 * (1.0 + (-0.4f64).exp()) / 2.0;
        assert!((p2.get(&[1, 1]) - stay).abs() < 1e-14);
        assert!((p2.get(&[1, 1]) - 0.417580011508910).abs() < 1e-12);
        assert!((p2.total() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rtn_moments() {
        let env = build_rtn_env(1.0, 2.0).unwrap();
        let p1 = joint_prob(&env, &TimeGrid::new(vec![0.6]).unwrap()).unwrap();
        assert!(moment(&p1).abs() < 1e-15);
        let p2 = joint_prob(&env, &TimeGrid::uniform(0.0, 0.2, 2).unwrap()).unwrap();
        assert!((moment(&p2) - (-0.4f64).exp()).abs() < 1e-14);
        assert!((moment(&p2) - 0.670320046035639).abs() < 1e-12);
        // equal-time second moment through the squared observable
        let squared = ProbTable::new(
            p1.grid().clone(),
            p1.omega_values().iter().map(|x| x * x).collect(),
            p1.probs().to_vec(),
        )
        .unwrap();
        assert!((moment(&squared) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn budget_guard() {
        let env = noncommuting_demo();
        let grid = TimeGrid::uniform(0.0, 0.1, 10).unwrap();
        match joint_quasiprob_with_budget(&env, &grid, 1000) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, 1 << 19);
                assert_eq!(budget, 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(joint_prob_with_budget(&EnvironmentModel::exact(env, ""), &grid, 1024).is_ok());
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![1.0, 0.5]).is_err());
        assert_eq!(TimeGrid::uniform(0.0, 0.5, 3).unwrap().without(1).unwrap().times(), &[0.0, 1.0]);
    }

    #[test]
    fn csv_export() {
        let env = noncommuting_demo();
        let q = joint_quasiprob(&env, &TimeGrid::uniform(0.0, 0.5, 2).unwrap()).unwrap();
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "xi,zeta,re,im");
        assert_eq!(lines.len(), 1 + 8);
        assert!(lines[1].starts_with("0;0,0;0,"));
    }

    #[test]
    fn degenerate_coherence_separates_the_two_routes() {
        // V has a two-fold eigenspace; rho is coherent inside it
        let v = CMatrix::diag(&[1.0, 1.0, -1.0]);
        let h = CMatrix::from_real(3, &[0.0, 0.0, 0.8, 0.0, 0.0, 0.3, 0.8, 0.3, 0.0]).unwrap();
        let psi = [C64::new(0.6, 0.0), C64::new(0.8, 0.0), C64::new(0.0, 0.0)];
        let rho = DensityMatrix::new(CMatrix::outer(&psi, &psi)).unwrap();
        let env = ExactEnvironment::new(h, rho, &v).unwrap();
        let grid = TimeGrid::uniform(0.0, 0.9, 2).unwrap();
        assert!(eigenbasis_discrepancy(&env, &grid).unwrap() > 1e-3);
    }

    fn random_exact(dim: usize, xs: &[f64], nondegenerate: bool) -> ExactEnvironment {
        let herm = |offset: usize| {
            CMatrix::from_fn(dim, |i, j| C64::new(xs[offset + i * dim + j], xs[offset + 16 + j * dim + i])).hermitian_part()
        };
        let h = herm(0);
        let a = herm(32);
        let rho = {
            let m = &a * &a.adjoint();
            let tr = m.trace().re;
            DensityMatrix::new(m.scale_real(1.0 / tr).hermitian_part()).unwrap()
        };
        let v = if nondegenerate {
            let spectrum: Vec<f64> = (0..dim).map(|i| i as f64).collect();
            let u = unitary(&herm(64), 1.0).unwrap();
            (&(&u * &CMatrix::diag(&spectrum)) * &u.adjoint()).hermitian_part()
        } else {
            herm(64)
        };
        ExactEnvironment::new(h, rho, &v).unwrap()
    }

    proptest! {
        #[test]
        fn swap_symmetry_and_normalization(
            dim in 1usize..=4,
            k in 1usize..=3,
            xs in proptest::collection::vec(-1.0f64..1.0, 96),
            dt in 0.05f64..1.5,
        ) {
            prop_assume!(xs[32..64].iter().any(|x| x.abs() > 0.2));
            let env = random_exact(dim, &xs, false);
            let q = joint_quasiprob(&env, &TimeGrid::uniform(0.0, dt, k).unwrap()).unwrap();
            prop_assert!(q.swap_asymmetry() < 1e-10);
            prop_assert!((q.total() - 1.0).norm() < 1e-10);
        }

        #[test]
        fn diagonal_matches_measurement_chain(
            dim in 1usize..=4,
            k in 1usize..=3,
            xs in proptest::collection::vec(-1.0f64..1.0, 96),
            t0 in 0.0f64..1.0,
            dt in 0.05f64..1.5,
        ) {
            prop_assume!(xs[32..64].iter().any(|x| x.abs() > 0.2));
            let env = random_exact(dim, &xs, false);
            let grid = TimeGrid::uniform(t0, dt, k).unwrap();
            let diag = joint_quasiprob(&env, &grid).unwrap().diagonal();
            let chain = joint_prob(&EnvironmentModel::exact(env, ""), &grid).unwrap();
            for (a, b) in diag.probs().iter().zip(chain.probs()) {
                prop_assert!((a - b).abs() < 1e-10);
                prop_assert!(*b >= -1e-12);
            }
            prop_assert!((chain.total() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn eigenstate_sum_agrees_for_nondegenerate_coupling(
            dim in 1usize..=4,
            k in 1usize..=3,
            xs in proptest::collection::vec(-1.0f64..1.0, 96),
            dt in 0.05f64..1.5,
        ) {
            prop_assume!(xs[32..64].iter().any(|x| x.abs() > 0.2));
            let env = random_exact(dim, &xs, true);
            prop_assert_eq!(env.coupling().len(), dim);
            prop_assert!(eigenbasis_discrepancy(&env, &TimeGrid::uniform(0.0, dt, k).unwrap()).unwrap() < 1e-10);
        }

        #[test]
        fn rtn_is_a_markov_chain(
            gamma in 0.1f64..3.0,
            dt in 0.05f64..1.0,
            k in 1usize..=5,
        ) {
            let env = build_rtn_env(gamma, 2.0).unwrap();
            let p = joint_prob(&env, &TimeGrid::uniform(0.0, dt, k).unwrap()).unwrap();
            let stay = (1.0 + (-2.0 * gamma * dt).exp()) / 2.0;
            for (seq, prob) in p.iter() {
                let expected = seq.windows(2).fold(0.5, |acc, w| acc * if w[0] == w[1] { stay } else { 1.0 - stay });
                prop_assert!((prob - expected).abs() < 1e-12);
            }
        }
    }
}
