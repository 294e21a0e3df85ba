//! Full singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! Jacobi is slow for big matrices but computes small singular values to high
//! relative accuracy, which is what rank decisions on Jacobians need. Every
//! matrix here has at most a few hundred rows and a handful of columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::scalar::Real;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `M = U * diag(S[..k]) * Vt[..k, :]` with `k = min(m, n)`.
///
/// `singular_values` has one entry per column of `M` (length `n`, padded
/// with zeros when `m < n`) so that every row of `vt` has a singular value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SvdFactors<R: Real> {
    /// `m x k`, orthonormal columns.
    pub u: DMatrix<R>,
    /// Non-increasing, non-negative, length `n`.
    pub singular_values: Vec<R>,
    /// `n x n`, orthonormal rows.
    pub vt: DMatrix<R>,
}

impl<R: Real> SvdFactors<R> {
    pub fn reconstruct(&self) -> DMatrix<R> {
        let k = self.u.ncols();
        let mut us = self.u.clone();
        for j in 0..k {
            let s = self.singular_values[j];
            us.column_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        us * self.vt.rows(0, k)
    }

    /// Number of singular values with `s_i / s_1 >= rel_tol`.
    pub fn rank(&self, rel_tol: R) -> usize {
        numerical_rank(&self.singular_values, rel_tol)
    }

    /// Rows of `vt` whose singular value ratio falls below `rel_tol`, as
    /// columns of an `n x d` matrix.
    pub fn null_space(&self, rel_tol: R) -> DMatrix<R> {
        let r = self.rank(rel_tol);
        self.vt.rows(r, self.vt.nrows() - r).transpose()
    }
}

pub fn numerical_rank<R: Real>(singular_values: &[R], rel_tol: R) -> usize {
    let Some(&s1) = singular_values.first() else {
        return 0;
    };
    if s1 <= R::zero() {
        return 0;
    }
    singular_values.iter().filter(|&&s| s / s1 >= rel_tol).count()
}

/// Full SVD with deterministic signs: in each right singular vector the first
/// entry of largest magnitude is positive.
pub fn svd<R: Real>(m: &DMatrix<R>) -> Result<SvdFactors<R>> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("svd"));
    }
    let (rows, cols) = m.shape();
    let mut w = m.clone();
    let mut v = DMatrix::<R>::identity(cols, cols);
    let eps = R::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (R::zero(), R::zero(), R::zero());
                for i in 0..rows {
                    let (a, b) = (w[(i, p)], w[(i, q)]);
                    alpha += a * a;
                    beta += b * b;
                    gamma += a * b;
                }
                if gamma.is_zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (R::cst(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (R::one() + zeta * zeta).sqrt());
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (a, b) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * a - s * b;
                    w[(i, q)] = s * a + c * b;
                }
                for i in 0..cols {
                    let (a, b) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * a - s * b;
                    v[(i, q)] = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<R> = (0..cols).map(|j| w.column(j).iter().map(|&x| x * x).sum::<R>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    // Stable sort keeps ties in column order, so the result is deterministic.
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let k = rows.min(cols);
    let mut singular_values = Vec::with_capacity(cols);
    let mut vt = DMatrix::<R>::zeros(cols, cols);
    let mut u = DMatrix::<R>::zeros(rows, k);
    let mut u_filled = vec![false; k];

    for (out, &j) in order.iter().enumerate() {
        let mut sign = R::one();
        // Largest-magnitude entry of the right vector, first on ties.
        let mut best = 0;
        for i in 1..cols {
            if v[(i, j)].abs() > v[(best, j)].abs() {
                best = i;
            }
        }
        if v[(best, j)] < R::zero() {
            sign = -R::one();
        }
        for i in 0..cols {
            vt[(out, i)] = sign * v[(i, j)];
        }
        let s = if out < k { norms[j] } else { R::zero() };
        singular_values.push(s);
        if out < k && s > R::zero() && s > norms[order[0]] * eps * R::cst(rows.max(cols) as f64) {
            for i in 0..rows {
                u[(i, out)] = sign * w[(i, j)] / s;
            }
            u_filled[out] = true;
        }
    }
    complete_orthonormal_columns(&mut u, &u_filled);

    Ok(SvdFactors {
        u,
        singular_values,
        vt,
    })
}

/// Fill the columns not marked in `filled` so that all columns of `u` are
/// orthonormal, by Gram–Schmidt against the standard basis.
fn complete_orthonormal_columns<R: Real>(u: &mut DMatrix<R>, filled: &[bool]) {
    let rows = u.nrows();
    let mut candidate = 0;
    for col in 0..u.ncols() {
        if filled[col] {
            continue;
        }
        // Columns filled so far, including earlier completions.
        let done: Vec<usize> = (0..u.ncols())
            .filter(|&c| filled[c] || c < col)
            .filter(|&c| c != col)
            .collect();
        while candidate < rows {
            let mut e = DMatrix::<R>::zeros(rows, 1);
            e[(candidate, 0)] = R::one();
            candidate += 1;
            for _ in 0..2 {
                for &c in &done {
                    let proj = u.column(c).dot(&e.column(0));
                    for i in 0..rows {
                        e[(i, 0)] -= proj * u[(i, c)];
                    }
                }
            }
            let norm = e.column(0).iter().map(|&x| x * x).sum::<R>().sqrt();
            if norm > R::cst(1e-3) {
                for i in 0..rows {
                    u[(i, col)] = e[(i, 0)] / norm;
                }
                break;
            }
        }
    }
}

/// Orthonormal basis (columns) of the numerical null space of `m`.
pub fn null_space<R: Real>(m: &DMatrix<R>, rel_tol: R) -> Result<DMatrix<R>> {
    Ok(svd(m)?.null_space(rel_tol))
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases. Subspaces of different dimension are at `pi/2`; two
/// empty subspaces coincide.
pub fn max_principal_angle<R: Real>(a: &DMatrix<R>, b: &DMatrix<R>) -> Result<R> {
    if a.ncols() != b.ncols() {
        return Ok(R::cst(std::f64::consts::FRAC_PI_2));
    }
    if a.ncols() == 0 {
        return Ok(R::zero());
    }
    // sin of the largest angle = ||(I - A A^T) B||_2, accurate for small angles.
    let residual = b - a * (a.transpose() * b);
    let s = svd(&residual)?;
    let sin = s.singular_values[0].min(R::one());
    Ok(sin.asin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn assert_orthonormal_cols(m: &DMatrix<f64>, tol: f64) {
        let g = m.transpose() * m;
        let err = frob(&(g - DMatrix::identity(m.ncols(), m.ncols())));
        assert!(err < tol, "orthonormality deviation {err}");
    }

    #[test]
    fn rank_one_all_ones() {
        let m = DMatrix::from_element(2, 2, 1.0f64);
        let f = svd(&m).unwrap();
        assert!((f.singular_values[0] - 2.0).abs() < 1e-14);
        assert!(f.singular_values[1].abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((f.vt[(0, 0)] - r).abs() < 1e-14 && (f.vt[(0, 1)] - r).abs() < 1e-14);
        assert!((f.vt[(1, 0)] - r).abs() < 1e-14 && (f.vt[(1, 1)] + r).abs() < 1e-14);
    }

    #[test]
    fn identity_and_diagonal() {
        let f = svd(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(f.singular_values, vec![1.0, 1.0, 1.0]);

        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0f64, 3.0, 2.0]));
        let f = svd(&d).unwrap();
        assert_eq!(f.singular_values, vec![3.0, 2.0, 1.0]);
        // a signed permutation
        for i in 0..3 {
            let nonzero = (0..3).filter(|&j| f.vt[(i, j)] != 0.0).count();
            assert_eq!(nonzero, 1);
            assert!(f.vt.row(i).iter().all(|x| *x == 0.0 || x.abs() == 1.0));
        }
    }

    #[test]
    fn wide_and_tall_reconstruct() {
        let tall = DMatrix::from_fn(7, 3, |i, j| ((i * 3 + j) as f64).sin() + 0.1 * j as f64);
        let wide = tall.transpose();
        for m in [tall, wide] {
            let f = svd(&m).unwrap();
            let err = frob(&(f.reconstruct() - &m)) / frob(&m);
            assert!(err < 1e-12, "reconstruction {err}");
            assert_orthonormal_cols(&f.u, 1e-12);
            assert_orthonormal_cols(&f.vt.transpose(), 1e-12);
            assert_eq!(f.singular_values.len(), m.ncols());
            assert!(f.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_completes_u() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 1.0, 1.0]);
        let f = svd(&m).unwrap();
        assert_eq!(f.rank(1e-10), 2);
        assert_orthonormal_cols(&f.u, 1e-12);
        let ns = f.null_space(1e-10);
        assert_eq!(ns.ncols(), 1);
        assert!(frob(&(&m * &ns)) < 1e-12);
    }

    #[test]
    fn zero_matrix() {
        let f = svd(&DMatrix::<f64>::zeros(3, 2)).unwrap();
        assert_eq!(f.singular_values, vec![0.0, 0.0]);
        assert_eq!(f.rank(1e-8), 0);
        assert_orthonormal_cols(&f.u, 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        assert_eq!(svd(&m).unwrap_err(), Error::NonFinite("svd"));
    }

    #[test]
    fn principal_angles() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let e2 = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let t = 1e-9f64;
        let tilted = DMatrix::from_column_slice(3, 1, &[t.cos(), t.sin(), 0.0]);
        assert!(max_principal_angle(&e1, &e1).unwrap() < 1e-15);
        assert!((max_principal_angle(&e1, &e2).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((max_principal_angle(&e1, &tilted).unwrap() - t).abs() < 1e-15);
        let empty = DMatrix::<f64>::zeros(3, 0);
        assert_eq!(max_principal_angle(&empty, &empty).unwrap(), 0.0);
        assert!(max_principal_angle(&empty, &e1).unwrap() > 1.5);
    }

    #[test]
    fn single_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0f32, 0.0, 4.0, 5.0]);
        let f = svd(&m).unwrap();
        // singular values of [[3,0],[4,5]] are 3*sqrt(5) and sqrt(5)
        assert!((f.singular_values[0] - 3.0 * 5f32.sqrt()).abs() < 1e-5);
        assert!((f.singular_values[1] - 5f32.sqrt()).abs() < 1e-5);
    }
}
