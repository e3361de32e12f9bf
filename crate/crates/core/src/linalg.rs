//! Dense symmetric eigendecomposition helpers.
//!
//! The solver and generators only need the symmetric (self-adjoint) case, so
//! everything funnels through one wrapper around `nalgebra`'s
//! `SymmetricEigen`. Inputs are `ndarray` matrices; the conversion cost is
//! negligible next to the O(n^3) factorization.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix: `values[i]` pairs with the
/// eigenvector stored in column `i` of `vectors`. Values are ascending.
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

fn to_nalgebra(m: &ArrayView2<f64>) -> nalgebra::DMatrix<f64> {
    let (r, c) = m.dim();
    nalgebra::DMatrix::from_fn(r, c, |i, j| m[[i, j]])
}

/// Symmetric eigendecomposition. The input is used as-is; callers symmetrize
/// beforehand when the matrix may carry floating-point asymmetry.
pub fn sym_eigen(m: &ArrayView2<f64>) -> Result<SymEigen> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            got: format!("{r}x{c}"),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    let eig = to_nalgebra(m).symmetric_eigen();

    // Sort ascending; nalgebra does not guarantee an order.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());

    let mut values = Array1::zeros(r);
    let mut vectors = Array2::zeros((r, r));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        for i in 0..r {
            vectors[[i, dst]] = eig.eigenvectors[(i, src)];
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "symmetric eigendecomposition produced non-finite eigenvalues (n = {r})"
        )));
    }
    Ok(SymEigen { values, vectors })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &ArrayView2<f64>) -> Result<f64> {
    Ok(sym_eigen(m)?.values[0])
}

/// Reconstructs `V diag(w) V^T` using only the columns of `V` selected by
/// `keep`. Used by the PSD projection, which modifies few eigenvalues once
/// the iterates are close to the cone.
pub fn reconstruct_selected(eig: &SymEigen, keep: &[usize], weights: &[f64]) -> Array2<f64> {
    let n = eig.vectors.nrows();
    let k = keep.len();
    let mut scaled = Array2::zeros((n, k));
    let mut basis = Array2::zeros((k, n));
    for (col, (&idx, &w)) in keep.iter().zip(weights).enumerate() {
        for i in 0..n {
            let v = eig.vectors[[i, idx]];
            scaled[[i, col]] = v * w;
            basis[[col, i]] = v;
        }
    }
    scaled.dot(&basis)
}
