//! Dense complex linear algebra for small Hermitian problems.
//!
//! Everything here is a pure function of its inputs. Dimensions are expected
//! to stay at desk scale (tens of states), so all storage is dense.

mod density;
mod eigen;
mod expm;
mod matrix;

pub use density::{dm_diagnostics, evolve_unitary, DensityMatrix, DmDiagnostics, TOL_MIN_EIGENVALUE, TOL_TRACE};
pub use eigen::{
    eigh, spectral_decompose, unitary, HermitianEigen, Observable, ProjectorDefects,
    DEFAULT_DEGENERACY_TOL, TOL_HERM,
};
pub use expm::{expm, solve};
pub use matrix::{pauli, CMatrix, C64};

#[cfg(test)]
pub(crate) use density::bloch_matrix;
pub(crate) use eigen::{check_hermitian, unitary_from_eigen};
