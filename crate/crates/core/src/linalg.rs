//! Thin bridge between `ndarray` storage and the `nalgebra` factorizations.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{EcvError, Result};

pub(crate) const EIGEN_TOLERANCE: f64 = 1e-10;

pub(crate) fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn to_dvector(v: ArrayView1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub(crate) fn to_array1(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Eigenpairs of a symmetric matrix, ordered by decreasing eigenvalue.
///
/// Ties keep the solver's output order. Each eigenvector is flipped so its
/// first nonzero coordinate is positive.
pub(crate) struct SortedEigen {
    pub values: Vec<f64>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: Array2<f64>,
}

pub(crate) fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Result<SortedEigen> {
    let (r, c) = a.dim();
    if r != c {
        return Err(EcvError::DimensionMismatch {
            expected: r,
            found: c,
        });
    }
    let eig = nalgebra::SymmetricEigen::try_new(to_dmatrix(a), f64::EPSILON, 0)
        .ok_or_else(|| EcvError::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..r).collect();
    // stable: equal eigenvalues keep ascending solver index
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let scale = eig.eigenvectors.amax().max(1.0);
    let mut vectors = Array2::zeros((r, r));
    let mut values = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let sign = col
            .iter()
            .find(|v| v.abs() > EIGEN_TOLERANCE * scale)
            .map_or(1.0, |v| v.signum());
        for i in 0..r {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    Ok(SortedEigen { values, vectors })
}

/// Symmetric square root `V diag(sqrt(max(λ, 0))) Vᵀ`.
pub(crate) fn symmetric_sqrt(eig: &SortedEigen) -> Array2<f64> {
    let p = eig.values.len();
    let mut scaled = eig.vectors.clone();
    for (j, &lambda) in eig.values.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..p {
            scaled[[i, j]] *= s;
        }
    }
    scaled.dot(&eig.vectors.t())
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub(crate) fn spd_solve(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let chol = nalgebra::Cholesky::new(to_dmatrix(a))
        .ok_or_else(|| EcvError::Numeric("matrix is not positive definite".into()))?;
    Ok(to_array1(&chol.solve(&to_dvector(b))))
}

/// Minimum-norm least-squares solution of `x β ≈ y` through the SVD.
///
/// Singular values below `max(rows, cols) · ε · s_max` are treated as zero.
pub(crate) fn min_norm_lstsq(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let (r, c) = x.dim();
    let svd = nalgebra::SVD::try_new(to_dmatrix(x), true, true, f64::EPSILON, 0)
        .ok_or_else(|| EcvError::Numeric("SVD did not converge".into()))?;
    let s_max = svd.singular_values.max();
    let cutoff = r.max(c) as f64 * f64::EPSILON * s_max;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * to_dvector(y);
    let mut coef = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            coef[i] = uty[i] / s;
        }
    }
    Ok(to_array1(&(v_t.transpose() * coef)))
}
