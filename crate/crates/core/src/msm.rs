//! Canonical angles between hypo subspaces (mutual subspace method).

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::thin_svd;
use crate::subspace::HypoSubspace;

/// Which argument of [`canonical_angles`] a subspace was passed as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    First,
    Second,
}

/// SVD of `Xᵀ Y` for orthonormal bases `X` (smaller side) and `Y`.
///
/// `alpha`/`beta_right` and the canonical vectors are stored in the
/// smaller-first orientation; [`CanonicalDecomposition::coefficients`] and
/// [`CanonicalDecomposition::canonical_vectors`] map them back to the
/// argument order the caller used.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDecomposition {
    pub kappas: Vec<f64>,
    /// Singular values before clamping to `[0, 1]`.
    pub raw_kappas: Vec<f64>,
    pub alpha: DMatrix<f64>,
    pub beta_right: DMatrix<f64>,
    pub canonical_vectors_left: DMatrix<f64>,
    pub canonical_vectors_right: DMatrix<f64>,
    /// True when the second argument had the smaller dimension and the
    /// inputs were swapped internally.
    pub swapped: bool,
    left_dims: (usize, usize),
    right_dims: (usize, usize),
}

impl CanonicalDecomposition {
    /// Number of canonical pairs `m_p = min(m_x, m_y)`.
    pub fn len(&self) -> usize {
        self.kappas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappas.is_empty()
    }

    fn is_left(&self, side: Side) -> bool {
        (side == Side::First) != self.swapped
    }

    /// Canonical coefficient matrix (`m_side x m_p`) for the subspace
    /// passed as `side`.
    pub fn coefficients(&self, side: Side) -> &DMatrix<f64> {
        if self.is_left(side) {
            &self.alpha
        } else {
            &self.beta_right
        }
    }

    /// Canonical vectors (`d_te x m_p`) lying in the subspace passed as `side`.
    pub fn canonical_vectors(&self, side: Side) -> &DMatrix<f64> {
        if self.is_left(side) {
            &self.canonical_vectors_left
        } else {
            &self.canonical_vectors_right
        }
    }

    /// `(d_te, m)` of the subspace passed as `side`.
    pub fn subspace_dims(&self, side: Side) -> (usize, usize) {
        if self.is_left(side) {
            self.left_dims
        } else {
            self.right_dims
        }
    }
}

pub fn canonical_angles(s1: &HypoSubspace, s2: &HypoSubspace) -> Result<CanonicalDecomposition> {
    if s1.te_dim() != s2.te_dim() {
        return invalid(format!(
            "subspaces live in different spaces: {} vs {}",
            s1.te_dim(),
            s2.te_dim()
        ));
    }
    let swapped = s1.dim() > s2.dim();
    let (x, y) = if swapped { (s2, s1) } else { (s1, s2) };
    let cross = x.basis().tr_mul(y.basis());
    let svd = thin_svd(&cross)?;
    let (u, v) = (&svd.u, &svd.v);
    let mp = svd.singular_values.len();
    let order: Vec<usize> = (0..mp).collect();

    let mut alpha = DMatrix::zeros(x.dim(), mp);
    let mut beta = DMatrix::zeros(y.dim(), mp);
    let mut raw = Vec::with_capacity(mp);
    for (k, &src) in order.iter().enumerate() {
        alpha.column_mut(k).copy_from(&u.column(src));
        beta.column_mut(k).copy_from(&v.column(src));
        raw.push(svd.singular_values[src]);
    }
    let kappas = raw.iter().map(|&k| k.clamp(0.0, 1.0)).collect();
    let canonical_vectors_left = x.basis() * &alpha;
    let canonical_vectors_right = y.basis() * &beta;
    Ok(CanonicalDecomposition {
        kappas,
        raw_kappas: raw,
        alpha,
        beta_right: beta,
        canonical_vectors_left,
        canonical_vectors_right,
        swapped,
        left_dims: (x.te_dim(), x.dim()),
        right_dims: (y.te_dim(), y.dim()),
    })
}

/// Mean of the first `r` squared canonical correlations.
pub fn similarity(cd: &CanonicalDecomposition, r: usize) -> Result<f64> {
    if r == 0 || r > cd.len() {
        return invalid(format!(
            "number of angles r = {r} outside 1..={}",
            cd.len()
        ));
    }
    Ok(cd.kappas[..r].iter().map(|k| k * k).sum::<f64>() / r as f64)
}
