//! Exponential of general (non-normal) dense matrices: degree-13 Padé
//! approximant with scaling and squaring.

use super::matrix::{CMatrix, C64};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn lin(terms: &[(f64, &CMatrix)], dim: usize) -> CMatrix {
    let mut out = CMatrix::zeros(dim);
    for (coef, m) in terms {
        for (o, x) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *o += x * *coef;
        }
    }
    out
}

/// `exp(A)` for an arbitrary square matrix.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.dim();
    let norm = a.norm_one();
    if norm == 0.0 {
        return CMatrix::identity(n);
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale_real(0.5f64.powi(squarings));

    let b = &PADE13;
    let id = CMatrix::identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * &lin(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let u_tail = lin(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)], n);
    let u = &a * &(&u_inner + &u_tail);
    let v_inner = &a6 * &lin(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let v_tail = lin(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)], n);
    let v = &v_inner + &v_tail;

    let mut r = solve(&(&v - &u), &(&v + &u)).expect("Padé denominator is nonsingular");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Solves `A X = B` by LU factorization with partial pivoting.
/// Returns `None` when `A` is numerically singular.
pub fn solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    let n = a.dim();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[(i, col)].norm().total_cmp(&lu[(j, col)].norm()))
            .unwrap();
        if lu[(pivot, col)].norm() == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot, j)];
                lu[(pivot, j)] = tmp;
                let tmp = x[(col, j)];
                x[(col, j)] = x[(pivot, j)];
                x[(pivot, j)] = tmp;
            }
        }
        let inv = C64::new(1.0, 0.0) / lu[(col, col)];
        for i in col + 1..n {
            let factor = lu[(i, col)] * inv;
            if factor.norm() == 0.0 {
                continue;
            }
            for j in col..n {
                let v = lu[(col, j)];
                lu[(i, j)] -= factor * v;
            }
            for j in 0..n {
                let v = x[(col, j)];
                x[(i, j)] -= factor * v;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = C64::new(1.0, 0.0) / lu[(col, col)];
        for j in 0..n {
            x[(col, j)] *= inv;
        }
        for i in 0..col {
            let factor = lu[(i, col)];
            for j in 0..n {
                let v = x[(col, j)];
                x[(i, j)] -= factor * v;
            }
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::super::eigen::unitary;
    use super::super::matrix::pauli;
    use super::*;

    fn taylor(a: &CMatrix, terms: usize) -> CMatrix {
        let mut sum = CMatrix::identity(a.dim());
        let mut term = CMatrix::identity(a.dim());
        for k in 1..terms {
            term = (&term * a).scale_real(1.0 / k as f64);
            sum = &sum + &term;
        }
        sum
    }

    #[test]
    fn matches_taylor_series_for_small_nonnormal_matrix() {
        let a = CMatrix::from_vec(
            3,
            vec![
                C64::new(0.1, 0.2),
                C64::new(0.5, 0.0),
                C64::new(0.0, -0.3),
                C64::new(0.0, 0.0),
                C64::new(-0.4, 0.1),
                C64::new(0.7, 0.0),
                C64::new(0.2, 0.2),
                C64::new(0.0, 0.0),
                C64::new(0.3, -0.1),
            ],
        )
        .unwrap();
        assert!(expm(&a).max_abs_diff(&taylor(&a, 40)) < 1e-14);
        // large norm exercises squaring
        let big = a.scale_real(20.0);
        let reference = {
            let mut r = taylor(&big.scale_real(1.0 / 64.0), 40);
            for _ in 0..6 {
                r = &r * &r;
            }
            r
        };
        let e = expm(&big);
        assert!(e.max_abs_diff(&reference) < 1e-9 * reference.max_abs());
    }

    #[test]
    fn agrees_with_eigen_route_for_hermitian_generators() {
        let h = &pauli::x().scale_real(0.8) + &pauli::z().scale_real(-1.3);
        for t in [0.0, 0.3, 7.5] {
            let e = expm(&h.scale(C64::new(0.0, -t)));
            assert!(e.max_abs_diff(&unitary(&h, t).unwrap()) < 1e-13);
        }
    }

    #[test]
    fn nilpotent_closed_form() {
        let a = CMatrix::from_real(2, &[0.0, 3.0, 0.0, 0.0]).unwrap();
        let expected = CMatrix::from_real(2, &[1.0, 3.0, 0.0, 1.0]).unwrap();
        assert!(expm(&a).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn solve_detects_singular_matrix() {
        let a = CMatrix::from_real(2, &[1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(solve(&a, &CMatrix::identity(2)).is_none());
    }
}
