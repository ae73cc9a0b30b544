//! Thin SVD through faer.
//!
//! nalgebra 0.35's `svd` can return factors that do not reproduce the input
//! when singular values cluster (e.g. `Xᵀ Y` for intersecting subspaces,
//! where several canonical correlations equal 1), so every decomposition in
//! this crate goes through faer instead.

use nalgebra::DMatrix;

use crate::error::{Result, RtwError};

/// `a = u diag(singular_values) vᵀ` with `k = min(rows, cols)` columns in
/// `u` and `v`, singular values in non-increasing order.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = m
        .thin_svd()
        .map_err(|e| RtwError::DegenerateInput(format!("SVD did not converge: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    let values: Vec<f64> = (0..k).map(|i| s[i]).collect();
    // Keep the documented order even if the backend ever stops sorting.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| values[y].total_cmp(&values[x]));
    Ok(ThinSvd {
        u: DMatrix::from_fn(a.nrows(), k, |i, j| u[(i, order[j])]),
        singular_values: order.iter().map(|&i| values[i]).collect(),
        v: DMatrix::from_fn(a.ncols(), k, |i, j| v[(i, order[j])]),
    })
}
