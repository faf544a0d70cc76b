//! Small dense linear-algebra kernels.
//!
//! The rest of the crate works in `ndarray`; these wrappers convert to
//! `nalgebra` for the two decompositions we need (LU with partial pivoting
//! and a symmetric eigendecomposition) and convert back. All matrices here
//! are tiny (class count by class count), so the copies are irrelevant.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Result, SrgError};

fn to_na(m: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// 2-norm condition number via singular values; `f64::INFINITY` when the
/// smallest singular value underflows to zero.
pub fn condition_estimate(m: ArrayView2<'_, f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = to_na(m).singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve `a * x = b` for `x` (multiple right-hand sides) by LU with partial
/// pivoting. `a` must be square; returns `SingularBlock` when the
/// factorization cannot produce a solution.
pub fn solve(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SrgError::NonSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(SrgError::dim("linear solve rhs rows", n, b.nrows()));
    }
    if n == 0 {
        return Ok(Array2::zeros((0, b.ncols())));
    }
    let lu = to_na(a).lu();
    match lu.solve(&to_na(b)) {
        Some(x) => {
            let x = from_na(&x);
            if x.iter().any(|v| !v.is_finite()) {
                Err(SrgError::SingularBlock {
                    condition: condition_estimate(a),
                })
            } else {
                Ok(x)
            }
        }
        None => Err(SrgError::SingularBlock {
            condition: condition_estimate(a),
        }),
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns, in
/// the same ascending order.
pub fn symmetric_eigen(m: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(SrgError::NonSquare {
            rows: n,
            cols: m.ncols(),
        });
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let eig = SymmetricEigen::try_new(to_na(m), f64::EPSILON, 0)
        .ok_or_else(|| SrgError::EigenFailure("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}
