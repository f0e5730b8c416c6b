//! Measurable environments.
//!
//! Two backends share one interface: an exact unitary model given by the
//! triplet (H_E, rho_E, V_E), and a Lindblad-reduced model where only the
//! measured subsystem is kept and its dynamics is a fixed generator. The
//! random-telegraph environment is a Lindblad model on a single qubit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qcore::{
    check_hermitian, eigh, expm, pauli, unitary_from_eigen, CMatrix, DensityMatrix, HermitianEigen,
    Observable, C64,
};

const GENERATOR_TOL: f64 = 1e-12;

/// Linear map on `dim x dim` matrices, stored as a `dim^2 x dim^2` matrix acting
/// on row-major vectorized operands (`vec(rho)[i * dim + j] = rho[i][j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
}

impl Superoperator {
    /// Tabulates a linear map by applying it to every matrix unit `|i><j|`.
    pub fn from_fn(dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let n = dim * dim;
        let mut matrix = CMatrix::zeros(n);
        for col in 0..n {
            let mut unit = CMatrix::zeros(dim);
            unit[(col / dim, col % dim)] = C64::new(1.0, 0.0);
            let image = f(&unit);
            for (row, z) in image.as_slice().iter().enumerate() {
                matrix[(row, col)] = *z;
            }
        }
        Superoperator { dim, matrix }
    }

    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        matrix.check_dim(dim * dim)?;
        Ok(Superoperator { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        apply_vectorized(&self.matrix, rho)
    }

    /// `exp(t L)`
    pub fn exp(&self, t: f64) -> CMatrix {
        expm(&self.matrix.scale_real(t))
    }
}

fn apply_vectorized(m: &CMatrix, rho: &CMatrix) -> CMatrix {
    let out = m.mul_vec(rho.as_slice());
    CMatrix::from_vec(rho.dim(), out).expect("superoperator preserves shape")
}

/// Closed environment: free Hamiltonian, initial state, and measured coupling.
#[derive(Clone, Debug)]
pub struct ExactEnvironment {
    hamiltonian: CMatrix,
    hamiltonian_eigen: HermitianEigen,
    initial_state: DensityMatrix,
    coupling: Observable,
}

impl ExactEnvironment {
    pub fn new(hamiltonian: CMatrix, initial_state: DensityMatrix, coupling: &CMatrix) -> Result<Self> {
        let dim = initial_state.dim();
        hamiltonian.check_dim(dim)?;
        coupling.check_dim(dim)?;
        let hamiltonian_eigen = eigh(&hamiltonian)?;
        let coupling = Observable::from_matrix(coupling)?;
        Ok(ExactEnvironment {
            hamiltonian,
            hamiltonian_eigen,
            initial_state,
            coupling,
        })
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    pub fn coupling(&self) -> &Observable {
        &self.coupling
    }

    pub fn dim(&self) -> usize {
        self.initial_state.dim()
    }

    /// `exp(-i t H_E)`
    pub fn propagator(&self, t: f64) -> CMatrix {
        unitary_from_eigen(&self.hamiltonian_eigen, t)
    }
}

/// Reduced environment evolving under a fixed Markovian generator.
#[derive(Clone, Debug)]
pub struct LindbladEnvironment {
    generator: Superoperator,
    initial_state: DensityMatrix,
    coupling: Observable,
}

impl LindbladEnvironment {
    /// Validates that the generator preserves trace and Hermiticity.
    pub fn new(generator: Superoperator, initial_state: DensityMatrix, coupling: &CMatrix) -> Result<Self> {
        let dim = initial_state.dim();
        if generator.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: generator.dim(),
            });
        }
        coupling.check_dim(dim)?;
        let scale = generator.matrix().max_abs().max(1.0);
        let m = generator.matrix();
        for i in 0..dim {
            for j in 0..dim {
                let col = i * dim + j;
                // trace of L(|i><j|)
                let tr: C64 = (0..dim).map(|k| m[(k * dim + k, col)]).sum();
                if tr.norm() > GENERATOR_TOL * scale {
                    return Err(Error::InvalidParameter(format!(
                        "generator does not preserve trace: tr L(|{i}><{j}|) = {tr}"
                    )));
                }
                // L(|j><i|) must equal L(|i><j|)^H
                let mirrored = j * dim + i;
                for a in 0..dim {
                    for b in 0..dim {
                        let lhs = m[(a * dim + b, mirrored)];
                        let rhs = m[(b * dim + a, col)].conj();
                        if (lhs - rhs).norm() > GENERATOR_TOL * scale {
                            return Err(Error::InvalidParameter(
                                "generator does not preserve Hermiticity".into(),
                            ));
                        }
                    }
                }
            }
        }
        let coupling = Observable::from_matrix(coupling)?;
        Ok(LindbladEnvironment {
            generator,
            initial_state,
            coupling,
        })
    }

    pub fn generator(&self) -> &Superoperator {
        &self.generator
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    pub fn coupling(&self) -> &Observable {
        &self.coupling
    }

    pub fn dim(&self) -> usize {
        self.initial_state.dim()
    }
}

#[derive(Clone, Debug)]
pub enum Backend {
    Exact(ExactEnvironment),
    Lindblad(LindbladEnvironment),
}

/// Parameters of a random-telegraph environment, kept when a model was built
/// from them so callers can look up the matching closed-form results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RtnParams {
    pub gamma: f64,
    pub omega: f64,
}

/// An environment together with a label and a content fingerprint.
#[derive(Clone, Debug)]
pub struct EnvironmentModel {
    backend: Backend,
    label: String,
    fingerprint: String,
    rtn: Option<RtnParams>,
}

impl EnvironmentModel {
    pub fn exact(env: ExactEnvironment, label: impl Into<String>) -> Self {
        Self::assemble(Backend::Exact(env), label.into(), None)
    }

    pub fn lindblad(env: LindbladEnvironment, label: impl Into<String>) -> Self {
        Self::assemble(Backend::Lindblad(env), label.into(), None)
    }

    fn assemble(backend: Backend, label: String, rtn: Option<RtnParams>) -> Self {
        let fingerprint = fingerprint(&backend);
        EnvironmentModel {
            backend,
            label,
            fingerprint,
            rtn,
        }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn as_exact(&self) -> Option<&ExactEnvironment> {
        match &self.backend {
            Backend::Exact(env) => Some(env),
            Backend::Lindblad(_) => None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Hex SHA-256 of the model contents (matrix entries at full precision).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn rtn_params(&self) -> Option<RtnParams> {
        self.rtn
    }

    pub fn coupling(&self) -> &Observable {
        match &self.backend {
            Backend::Exact(env) => env.coupling(),
            Backend::Lindblad(env) => env.coupling(),
        }
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        match &self.backend {
            Backend::Exact(env) => env.initial_state(),
            Backend::Lindblad(env) => env.initial_state(),
        }
    }

    pub fn dim(&self) -> usize {
        self.initial_state().dim()
    }

    /// Free-evolution map over a time step `dt >= 0`.
    pub fn propagator(&self, dt: f64) -> Result<Propagator> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "propagation time must be finite and nonnegative, got {dt}"
            )));
        }
        Ok(match &self.backend {
            Backend::Exact(env) => Propagator::Unitary(env.propagator(dt)),
            Backend::Lindblad(env) => Propagator::Superoperator(env.generator().exp(dt)),
        })
    }
}

/// Precomputed free evolution over a fixed interval.
#[derive(Clone, Debug)]
pub enum Propagator {
    /// `U`, applied as `U rho U^H`
    Unitary(CMatrix),
    /// `exp(dt L)` in vectorized form
    Superoperator(CMatrix),
}

impl Propagator {
    /// Applies the map to an arbitrary (not necessarily normalized) operator.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        match self {
            Propagator::Unitary(u) => &(u * rho) * &u.adjoint(),
            Propagator::Superoperator(m) => apply_vectorized(m, rho),
        }
    }
}

fn fingerprint(backend: &Backend) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"noise-loom/model/1\0");
    let mut feed = |tag: &[u8], m: &CMatrix| {
        hasher.update(tag);
        hasher.update((m.dim() as u64).to_le_bytes());
        for z in m.as_slice() {
            hasher.update(z.re.to_bits().to_le_bytes());
            hasher.update(z.im.to_bits().to_le_bytes());
        }
    };
    match backend {
        Backend::Exact(env) => {
            feed(b"exact:H", env.hamiltonian());
            feed(b"rho", env.initial_state().matrix());
            feed(b"V", env.coupling().source());
        }
        Backend::Lindblad(env) => {
            feed(b"lindblad:L", env.generator().matrix());
            feed(b"rho", env.initial_state().matrix());
            feed(b"V", env.coupling().source());
        }
    }
    hex::encode(hasher.finalize())
}

/// Random-telegraph environment: a qubit under `L rho = -(gamma/2)[X,[X,rho]]`
/// in the stationary state `I/2`, measured through `(omega/2) Z`.
pub fn build_rtn_env(gamma: f64, omega: f64) -> Result<EnvironmentModel> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("omega must be finite, got {omega}")));
    }
    let x = pauli::x();
    let generator = Superoperator::from_fn(2, |rho| {
        x.commutator(&x.commutator(rho)).scale_real(-gamma / 2.0)
    });
    let env = LindbladEnvironment::new(
        generator,
        DensityMatrix::maximally_mixed(2),
        &pauli::z().scale_real(omega / 2.0),
    )?;
    Ok(EnvironmentModel::assemble(
        Backend::Lindblad(env),
        format!("rtn(gamma={gamma}, omega={omega})"),
        Some(RtnParams { gamma, omega }),
    ))
}

/// `rho(t + dt)` under the model's free dynamics.
pub fn propagate(env: &EnvironmentModel, rho: &DensityMatrix, dt: f64) -> Result<DensityMatrix> {
    rho.matrix().check_dim(env.dim())?;
    let out = env.propagator(dt)?.apply(rho.matrix());
    Ok(DensityMatrix::new_unchecked(out.hermitian_part()))
}

/// Frobenius norm of `L rho` (Lindblad) or `[H_E, rho_E]` (exact).
pub fn stationarity_residual(env: &EnvironmentModel) -> f64 {
    match env.backend() {
        Backend::Exact(e) => e.hamiltonian().commutator(e.initial_state().matrix()).frobenius_norm(),
        Backend::Lindblad(e) => e.generator().apply(e.initial_state().matrix()).frobenius_norm(),
    }
}

/// On-disk model definition. Matrices are flat row-major lists of
/// `[re, im]` pairs; a Lindblad generator is the `dim^2 x dim^2` matrix acting
/// on row-major vectorized density matrices.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ModelSpec {
    Rtn {
        gamma: f64,
        omega: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Exact {
        #[serde(rename = "H")]
        hamiltonian: Vec<[f64; 2]>,
        rho: Vec<[f64; 2]>,
        #[serde(rename = "V")]
        coupling: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Lindblad {
        generator: Vec<[f64; 2]>,
        rho: Vec<[f64; 2]>,
        #[serde(rename = "V")]
        coupling: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

fn square_from_pairs(what: &str, pairs: &[[f64; 2]]) -> Result<CMatrix> {
    let dim = (pairs.len() as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim != pairs.len() {
        return Err(Error::InvalidParameter(format!(
            "{what}: {} entries do not form a square matrix",
            pairs.len()
        )));
    }
    CMatrix::from_vec(dim, pairs.iter().map(|p| C64::new(p[0], p[1])).collect())
}

fn pairs_from_matrix(m: &CMatrix) -> Vec<[f64; 2]> {
    m.as_slice().iter().map(|z| [z.re, z.im]).collect()
}

impl ModelSpec {
    pub fn build(&self) -> Result<EnvironmentModel> {
        match self {
            ModelSpec::Rtn { gamma, omega, label } => {
                let mut model = build_rtn_env(*gamma, *omega)?;
                if let Some(label) = label {
                    model.label = label.clone();
                }
                Ok(model)
            }
            ModelSpec::Exact {
                hamiltonian,
                rho,
                coupling,
                label,
            } => {
                let h = square_from_pairs("H", hamiltonian)?;
                check_hermitian(&h)?;
                let rho = DensityMatrix::new(square_from_pairs("rho", rho)?)?;
                let v = square_from_pairs("V", coupling)?;
                let env = ExactEnvironment::new(h, rho, &v)?;
                Ok(EnvironmentModel::exact(env, label.clone().unwrap_or_else(|| "exact".into())))
            }
            ModelSpec::Lindblad {
                generator,
                rho,
                coupling,
                label,
            } => {
                let rho = DensityMatrix::new(square_from_pairs("rho", rho)?)?;
                let dim = rho.dim();
                let generator = Superoperator::from_matrix(dim, square_from_pairs("generator", generator)?)?;
                let v = square_from_pairs("V", coupling)?;
                let env = LindbladEnvironment::new(generator, rho, &v)?;
                Ok(EnvironmentModel::lindblad(env, label.clone().unwrap_or_else(|| "lindblad".into())))
            }
        }
    }

    /// Explicit-matrix description of a built model.
    pub fn from_model(model: &EnvironmentModel) -> Self {
        let label = Some(model.label().to_string());
        match model.backend() {
            Backend::Exact(e) => ModelSpec::Exact {
                hamiltonian: pairs_from_matrix(e.hamiltonian()),
                rho: pairs_from_matrix(e.initial_state().matrix()),
                coupling: pairs_from_matrix(e.coupling().source()),
                label,
            },
            Backend::Lindblad(e) => ModelSpec::Lindblad {
                generator: pairs_from_matrix(e.generator().matrix()),
                rho: pairs_from_matrix(e.initial_state().matrix()),
                coupling: pairs_from_matrix(e.coupling().source()),
                label,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(e.line(), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }
}

/// Reads and builds a JSON model file.
pub fn load_model(path: impl AsRef<Path>) -> Result<EnvironmentModel> {
    let text = std::fs::read_to_string(path)?;
    ModelSpec::from_json(&text)?.build()
}
