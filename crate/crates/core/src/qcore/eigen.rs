//! Hermitian eigendecomposition by cyclic complex Jacobi rotations, and the
//! spectral (projector) form of observables built on it.

use super::matrix::{CMatrix, C64};
use crate::error::{Error, Result};

/// Maximum tolerated `|A - A^H|` entry, scaled by `max(1, max|A|)`.
pub const TOL_HERM: f64 = 1e-12;

/// Default eigenvalue clustering threshold, relative to the spectral scale.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a Hermitian matrix; column `j` of `vectors` belongs to `values[j]`.
/// Values are sorted ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

pub(crate) fn check_hermitian(m: &CMatrix) -> Result<()> {
    let deviation = m.hermiticity_error();
    if deviation > TOL_HERM * m.max_abs().max(1.0) {
        return Err(Error::NonHermitianInput { deviation });
    }
    Ok(())
}

/// Diagonalizes a Hermitian matrix.
pub fn eigh(m: &CMatrix) -> Result<HermitianEigen> {
    check_hermitian(m)?;
    Ok(jacobi(m.hermitian_part()))
}

fn off_diagonal_sq(a: &CMatrix) -> f64 {
    let n = a.dim();
    let mut s = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            s += a[(p, q)].norm_sqr();
        }
    }
    2.0 * s
}

fn jacobi(mut a: CMatrix) -> HermitianEigen {
    let n = a.dim();
    let mut v = CMatrix::identity(n);
    let scale_sq = a.frobenius_norm().powi(2);
    let target = (f64::EPSILON * 0.25).powi(2) * scale_sq;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_sq(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                // W = diag(1, e^{-i phi}) makes the pivot real; R is the real rotation.
                // G = W R = [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let phase = apq / mag;
                let conj_phase = phase.conj();
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // A <- A G
                for i in 0..n {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = aip * c - aiq * conj_phase * s;
                    a[(i, q)] = aip * s + aiq * conj_phase * c;
                }
                // A <- G^H A
                for j in 0..n {
                    let apj = a[(p, j)];
                    let aqj = a[(q, j)];
                    a[(p, j)] = apj * c - aqj * phase * s;
                    a[(q, j)] = apj * s + aqj * phase * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
                // V <- V G
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = vip * c - viq * conj_phase * s;
                    v[(i, q)] = vip * s + viq * conj_phase * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    HermitianEigen { values, vectors }
}

/// Spectral decomposition of a Hermitian operator: unique eigenvalues in
/// ascending order and the orthogonal projector onto each eigenspace.
#[derive(Clone, Debug)]
pub struct Observable {
    values: Vec<f64>,
    projectors: Vec<CMatrix>,
    source: CMatrix,
    /// Eigenvectors grouped per unique value.
    eigenvectors: Vec<Vec<Vec<C64>>>,
}

/// Worst-case violations of the projector algebra of an [`Observable`].
#[derive(Clone, Copy, Debug, Default)]
pub struct ProjectorDefects {
    pub idempotency: f64,
    pub hermiticity: f64,
    pub orthogonality: f64,
    pub completeness: f64,
    pub reconstruction: f64,
}

impl ProjectorDefects {
    pub fn max(&self) -> f64 {
        [
            self.idempotency,
            self.hermiticity,
            self.orthogonality,
            self.completeness,
            self.reconstruction,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Groups eigenvalues closer than `degeneracy_tol * scale` (single linkage on
/// the sorted spectrum), where `scale` is the larger of the spectral range and
/// the largest eigenvalue magnitude.
pub fn spectral_decompose(m: &CMatrix, degeneracy_tol: f64) -> Result<Observable> {
    if !(degeneracy_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degeneracy tolerance must be nonnegative, got {degeneracy_tol}"
        )));
    }
    let eig = eigh(m)?;
    let n = m.dim();
    let lo = eig.values[0];
    let hi = eig.values[n - 1];
    let scale = (hi - lo).max(lo.abs()).max(hi.abs());
    let threshold = degeneracy_tol * scale;

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match clusters.last_mut() {
            Some(cluster) if eig.values[i] - eig.values[*cluster.last().unwrap()] <= threshold => {
                cluster.push(i)
            }
            _ => clusters.push(vec![i]),
        }
    }

    let mut values = Vec::with_capacity(clusters.len());
    let mut projectors = Vec::with_capacity(clusters.len());
    let mut eigenvectors = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let mean = cluster.iter().map(|&i| eig.values[i]).sum::<f64>() / cluster.len() as f64;
        let vecs: Vec<Vec<C64>> = cluster.iter().map(|&i| eig.vectors.column(i)).collect();
        let mut proj = CMatrix::zeros(n);
        for v in &vecs {
            proj = &proj + &CMatrix::outer(v, v);
        }
        values.push(mean);
        projectors.push(proj.hermitian_part());
        eigenvectors.push(vecs);
    }

    Ok(Observable {
        values,
        projectors,
        source: m.clone(),
        eigenvectors,
    })
}

impl Observable {
    /// Spectral decomposition with the default degeneracy tolerance.
    pub fn from_matrix(m: &CMatrix) -> Result<Self> {
        spectral_decompose(m, DEFAULT_DEGENERACY_TOL)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn projector(&self, index: usize) -> &CMatrix {
        &self.projectors[index]
    }

    pub fn source(&self) -> &CMatrix {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// Number of distinct outcomes `|Omega|`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Orthonormal eigenvectors spanning the eigenspace of `values()[index]`.
    pub fn eigenvectors(&self, index: usize) -> &[Vec<C64>] {
        &self.eigenvectors[index]
    }

    pub fn defects(&self) -> ProjectorDefects {
        let n = self.dim();
        let mut d = ProjectorDefects::default();
        let mut sum = CMatrix::zeros(n);
        let mut recon = CMatrix::zeros(n);
        for (i, p) in self.projectors.iter().enumerate() {
            d.idempotency = d.idempotency.max((p * p).max_abs_diff(p));
            d.hermiticity = d.hermiticity.max(p.hermiticity_error());
            for q in &self.projectors[i + 1..] {
                d.orthogonality = d.orthogonality.max((p * q).max_abs());
            }
            sum = &sum + p;
            recon = &recon + &p.scale_real(self.values[i]);
        }
        d.completeness = sum.max_abs_diff(&CMatrix::identity(n));
        d.reconstruction = recon.max_abs_diff(&self.source);
        d
    }
}

/// `exp(-i t H)` for Hermitian `H`, built from its eigendecomposition.
pub fn unitary(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = eigh(h)?;
    Ok(unitary_from_eigen(&eig, t))
}

pub(crate) fn unitary_from_eigen(eig: &HermitianEigen, t: f64) -> CMatrix {
    let n = eig.vectors.dim();
    let phases: Vec<C64> = eig.values.iter().map(|&l| C64::from_polar(1.0, -l * t)).collect();
    CMatrix::from_fn(n, |i, j| {
        (0..n)
            .map(|k| eig.vectors[(i, k)] * phases[k] * eig.vectors[(j, k)].conj())
            .sum()
    })
}
