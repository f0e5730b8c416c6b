use super::eigen::{check_hermitian, eigh, unitary};
use super::matrix::CMatrix;
use crate::error::{Error, Result};

pub const TOL_TRACE: f64 = 1e-12;
pub const TOL_MIN_EIGENVALUE: f64 = 1e-10;

/// Deviations of a matrix from the density-matrix conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmDiagnostics {
    /// `|tr(rho) - 1|`
    pub trace_error: f64,
    /// max entry of `|rho - rho^H|`
    pub hermiticity_error: f64,
    /// smallest eigenvalue of the Hermitian part
    pub min_eigenvalue: f64,
}

pub fn dm_diagnostics(rho: &CMatrix) -> DmDiagnostics {
    let min_eigenvalue = eigh(&rho.hermitian_part())
        .map(|e| e.values[0])
        .unwrap_or(f64::NAN);
    DmDiagnostics {
        trace_error: (rho.trace() - 1.0).norm(),
        hermiticity_error: rho.hermiticity_error(),
        min_eigenvalue,
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let d = dm_diagnostics(&m);
        if d.hermiticity_error > super::eigen::TOL_HERM {
            return Err(Error::InvalidState(format!(
                "hermiticity error {:e}",
                d.hermiticity_error
            )));
        }
        if d.trace_error > TOL_TRACE {
            return Err(Error::InvalidState(format!("trace error {:e}", d.trace_error)));
        }
        if d.min_eigenvalue < -TOL_MIN_EIGENVALUE {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:e}",
                d.min_eigenvalue
            )));
        }
        Ok(DensityMatrix(m))
    }

    /// Wraps a matrix already known to be a valid state (internal hot loops).
    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        DensityMatrix(m)
    }

    /// `I / dim`
    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    /// `|k><k|` in the computational basis.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut m = CMatrix::zeros(dim);
        m[(k, k)] = 1.0.into();
        DensityMatrix(m)
    }

    /// Qubit state with Bloch vector `(x, y, z)`; fails for `|r| > 1`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(bloch_matrix(x, y, z))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Qubit Bloch vector `(tr(rho X), tr(rho Y), tr(rho Z))`.
    pub fn bloch(&self) -> [f64; 3] {
        assert_eq!(self.dim(), 2, "Bloch vector is defined for qubits only");
        let m = &self.0;
        [
            2.0 * m[(0, 1)].re,
            -2.0 * m[(0, 1)].im,
            (m[(0, 0)] - m[(1, 1)]).re,
        ]
    }
}

pub(crate) fn bloch_matrix(x: f64, y: f64, z: f64) -> CMatrix {
    use super::matrix::C64;
    CMatrix::from_vec(
        2,
        vec![
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * x, -0.5 * y),
            C64::new(0.5 * x, 0.5 * y),
            C64::new(0.5 * (1.0 - z), 0.0),
        ],
    )
    .expect("2x2 entries")
}

/// `exp(-itH) rho exp(itH)`.
pub fn evolve_unitary(rho: &DensityMatrix, h: &CMatrix, t: f64) -> Result<DensityMatrix> {
    check_hermitian(h)?;
    h.check_dim(rho.dim())?;
    let u = unitary(h, t)?;
    let out = &(&u * rho.matrix()) * &u.adjoint();
    Ok(DensityMatrix(out.hermitian_part()))
}
