//! Hypo subspaces: non-centered PCA of a set of TE features.
//!
//! The basis is taken from the thin SVD of the `d_te x L` TE matrix `F`
//! (the left singular vectors are the eigenvectors of `F Fᵀ`, no mean is
//! removed). Alongside the basis the subspace keeps the coefficients `B`
//! with `F B = basis`, which the attention analysis needs to walk canonical
//! vectors back to individual TE features.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result, RtwError};
use crate::linalg::thin_svd;
use crate::sampling::TESet;

/// Singular values at or below `RANK_TOLERANCE * sigma_max` are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HypoSubspace {
    basis: DMatrix<f64>,
    singular_values: Vec<f64>,
    te_coeffs: DMatrix<f64>,
    source_id: String,
}

impl HypoSubspace {
    /// Reassembles a subspace from stored parts, checking shapes only.
    pub fn from_parts(
        basis: DMatrix<f64>,
        singular_values: Vec<f64>,
        te_coeffs: DMatrix<f64>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let m = basis.ncols();
        if m == 0 || basis.nrows() == 0 {
            return invalid("subspace basis must be non-empty");
        }
        if singular_values.len() != m || te_coeffs.ncols() != m {
            return invalid(format!(
                "subspace parts disagree on dimension: basis {m}, singular values {}, coefficients {}",
                singular_values.len(),
                te_coeffs.ncols()
            ));
        }
        Ok(Self {
            basis,
            singular_values,
            te_coeffs,
            source_id: source_id.into(),
        })
    }

    /// Wraps an orthonormal basis as a subspace whose "TE features" are the
    /// basis columns themselves (so `te_coeffs` is the identity).
    pub fn from_orthonormal_basis(basis: DMatrix<f64>, source_id: impl Into<String>) -> Result<Self> {
        let m = basis.ncols();
        Self::from_parts(basis, vec![1.0; m], DMatrix::identity(m, m), source_id)
    }

    /// `d_te x m` matrix with orthonormal columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Descending, strictly positive.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `L x m` coefficients `B` with `F B = basis`.
    pub fn te_coeffs(&self) -> &DMatrix<f64> {
        &self.te_coeffs
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn te_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of TE features the subspace was built from.
    pub fn te_count(&self) -> usize {
        self.te_coeffs.nrows()
    }

    /// Orthogonal projector `basis basisᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Builds the hypo subspace of one TE set.
pub fn build_hypo_subspace(te: &TESet, m: usize, normalize_te: bool) -> Result<HypoSubspace> {
    if te.is_empty() {
        return invalid("TE set is empty");
    }
    build_from_te_matrix(te.te_matrix(), m, normalize_te, te.source_id())
}

/// Builds one subspace from the pooled TE features of several sets.
pub fn build_pooled_subspace(
    sets: &[&TESet],
    m: usize,
    normalize_te: bool,
    source_id: &str,
) -> Result<HypoSubspace> {
    let first = sets
        .first()
        .ok_or_else(|| RtwError::InvalidArgument("no TE sets to pool".into()))?;
    let d = first.te_dim();
    if let Some(bad) = sets.iter().find(|s| s.te_dim() != d) {
        return invalid(format!(
            "cannot pool TE sets of dimension {d} and {} ({})",
            bad.te_dim(),
            bad.source_id()
        ));
    }
    let total: usize = sets.iter().map(|s| s.len()).sum();
    let mut f = DMatrix::zeros(d, total);
    let mut col = 0;
    for s in sets {
        for feat in s.features() {
            f.column_mut(col).copy_from_slice(&feat.vector);
            col += 1;
        }
    }
    build_from_te_matrix(f, m, normalize_te, source_id)
}

/// Dominant `m`-dimensional left singular subspace of `f` (`d_te x L`).
///
/// `m` is clipped to the numerical rank. With `normalize_te` the columns
/// are scaled to unit length before the SVD; the returned coefficients
/// still refer to the unscaled columns.
pub fn build_from_te_matrix(
    f: DMatrix<f64>,
    m: usize,
    normalize_te: bool,
    source_id: &str,
) -> Result<HypoSubspace> {
    if m == 0 {
        return invalid("subspace dimension must be at least 1");
    }
    if f.ncols() == 0 || f.nrows() == 0 {
        return invalid("TE matrix is empty");
    }
    let l = f.ncols();
    let scales: Vec<f64> = if normalize_te {
        f.column_iter()
            .map(|c| {
                let n = c.norm();
                if n > 0.0 {
                    1.0 / n
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        vec![1.0; l]
    };
    let mut work = f;
    if normalize_te {
        for (mut c, &s) in work.column_iter_mut().zip(&scales) {
            c *= s;
        }
    }
    if work.iter().all(|&v| v == 0.0) {
        return Err(RtwError::DegenerateInput(format!(
            "TE matrix of {source_id} is all zeros"
        )));
    }

    let svd = thin_svd(&work)?;
    let (u, v) = (&svd.u, &svd.v);
    let order: Vec<usize> = (0..svd.singular_values.len()).collect();
    let sigma_max = svd.singular_values[0];
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > RANK_TOLERANCE * sigma_max)
        .count();
    let dim = m.min(rank);
    if dim == 0 {
        return Err(RtwError::DegenerateInput(format!(
            "TE matrix of {source_id} has numerical rank 0"
        )));
    }

    let d = u.nrows();
    let mut basis = DMatrix::zeros(d, dim);
    let mut coeffs = DMatrix::zeros(l, dim);
    let mut singular_values = Vec::with_capacity(dim);
    for (k, &src) in order.iter().take(dim).enumerate() {
        let sigma = svd.singular_values[src];
        let col = u.column(src);
        let pivot = col.iter().fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        basis.column_mut(k).copy_from(&(col * sign));
        for i in 0..l {
            coeffs[(i, k)] = sign * v[(i, src)] / sigma * scales[i];
        }
        singular_values.push(sigma);
    }
    Ok(HypoSubspace {
        basis,
        singular_values,
        te_coeffs: coeffs,
        source_id: source_id.to_owned(),
    })
}

/// Coordinates `basisᵀ v` of `v` in the subspace.
pub fn project(sub: &HypoSubspace, v: &[f64]) -> Result<DVector<f64>> {
    if v.len() != sub.te_dim() {
        return invalid(format!(
            "vector of length {} does not match subspace ambient dimension {}",
            v.len(),
            sub.te_dim()
        ));
    }
    Ok(sub.basis.tr_mul(&DVector::from_column_slice(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform};
    use crate::sampling::{generate_te_set, FeatureSequence};
    use proptest::prelude::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = seeded(seed);
        DMatrix::from_fn(rows, cols, |_, _| uniform(&mut r, -1.0, 1.0))
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    fn check_invariants(sub: &HypoSubspace, f: &DMatrix<f64>) {
        let m = sub.dim();
        let gram = sub.basis().tr_mul(sub.basis());
        assert!(max_abs(&(gram - DMatrix::identity(m, m))) < 1e-10);
        assert!(sub.singular_values().windows(2).all(|w| w[0] >= w[1]));
        assert!(sub.singular_values().iter().all(|&s| s > 0.0));
        assert!(max_abs(&(f * sub.te_coeffs() - sub.basis())) < 1e-8);
    }

    #[test]
    fn rank_one_case() {
        let f = DMatrix::from_column_slice(3, 1, &[3.0, 0.0, -4.0]);
        let sub = build_from_te_matrix(f.clone(), 1, false, "r1").unwrap();
        assert_eq!(sub.dim(), 1);
        let expected = [0.6, 0.0, -0.8];
        // Sign convention makes the largest-magnitude entry positive.
        let sign = -1.0;
        for (a, b) in sub.basis().iter().zip(expected) {
            assert!((a - sign * b).abs() < 1e-14);
        }
        assert!((sub.te_coeffs()[(0, 0)].abs() - 0.2).abs() < 1e-14);
        check_invariants(&sub, &f);
    }

    #[test]
    fn orthogonal_columns_projector_matches_gram_inverse() {
        let f = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let sub = build_from_te_matrix(f.clone(), 2, false, "o").unwrap();
        let gram_inv = (f.transpose() * &f).try_inverse().unwrap();
        let oracle = &f * gram_inv * f.transpose();
        assert!(max_abs(&(sub.projector() - oracle)) < 1e-10);
        check_invariants(&sub, &f);
    }

    #[test]
    fn random_projector_matches_gram_inverse() {
        let f = random_matrix(9, 4, 1);
        let sub = build_from_te_matrix(f.clone(), 4, false, "g").unwrap();
        let oracle = &f * (f.transpose() * &f).try_inverse().unwrap() * f.transpose();
        assert!(max_abs(&(sub.projector() - oracle)) < 1e-10);
    }

    #[test]
    fn dimension_is_clipped_to_rank() {
        let a = random_matrix(6, 2, 2);
        let mix = random_matrix(2, 5, 3);
        let f = &a * mix;
        let sub = build_from_te_matrix(f.clone(), 5, false, "rank2").unwrap();
        assert_eq!(sub.dim(), 2);
        check_invariants(&sub, &f);
    }

    #[test]
    fn degenerate_inputs() {
        let z = DMatrix::zeros(4, 3);
        assert!(matches!(
            build_from_te_matrix(z, 2, false, "z"),
            Err(RtwError::DegenerateInput(_))
        ));
        assert!(build_from_te_matrix(random_matrix(3, 3, 0), 0, false, "m0").is_err());
    }

    #[test]
    fn normalized_coefficients_refer_to_raw_features() {
        let mut f = random_matrix(10, 6, 4);
        f.column_mut(2).scale_mut(50.0);
        let sub = build_from_te_matrix(f.clone(), 3, true, "n").unwrap();
        check_invariants(&sub, &f);
    }

    #[test]
    fn eigenvalues_of_gram_match_squared_singular_values() {
        let f = random_matrix(12, 7, 5);
        let sub = build_from_te_matrix(f.clone(), 7, false, "e").unwrap();
        let mut eig: Vec<f64> = (&f * f.transpose()).symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (s, e) in sub.singular_values().iter().zip(&eig) {
            assert!(((s * s) - e).abs() <= 1e-6 * e.abs());
        }
    }

    #[test]
    fn duplication_and_scaling_keep_the_span() {
        let f = random_matrix(8, 3, 6);
        let base = build_from_te_matrix(f.clone(), 3, false, "b").unwrap();
        let mut doubled = DMatrix::zeros(8, 6);
        doubled.columns_mut(0, 3).copy_from(&f);
        doubled.columns_mut(3, 3).copy_from(&f);
        let dup = build_from_te_matrix(doubled, 3, false, "d").unwrap();
        assert!(max_abs(&(dup.projector() - base.projector())) < 1e-8);
        let scaled = build_from_te_matrix(&f * 7.5, 3, false, "s").unwrap();
        assert!(max_abs(&(scaled.projector() - base.projector())) < 1e-8);
    }

    #[test]
    fn builds_from_te_sets() {
        let frames = (0..6).map(|j| vec![(j as f64).sin(), (j as f64).cos(), j as f64]).collect();
        let seq = FeatureSequence::new("s", frames).unwrap();
        let te = generate_te_set(&seq, 3, 8, 1).unwrap();
        let sub = build_hypo_subspace(&te, 4, false).unwrap();
        check_invariants(&sub, &te.te_matrix());
        assert_eq!(sub.te_count(), 8);
        let pooled = build_pooled_subspace(&[&te, &te], 4, false, "p").unwrap();
        assert!(max_abs(&(pooled.projector() - sub.projector())) < 1e-8);
    }

    #[test]
    fn projection_contracts() {
        let f = random_matrix(6, 3, 8);
        let sub = build_from_te_matrix(f, 3, false, "p").unwrap();
        let first: Vec<f64> = sub.basis().column(0).iter().copied().collect();
        let c = project(&sub, &first).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
        assert!(project(&sub, &[1.0, 2.0]).is_err());

        let axis = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let line = HypoSubspace::from_orthonormal_basis(axis, "x").unwrap();
        let c = project(&line, &[0.0, 2.0, -3.0]).unwrap();
        assert!(c[0].abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn projection_obeys_bessel(seed in any::<u64>()) {
            let f = random_matrix(7, 3, seed);
            let sub = build_from_te_matrix(f, 3, false, "b").unwrap();
            let mut r = seeded(seed ^ 1);
            let v: Vec<f64> = (0..7).map(|_| uniform(&mut r, -5.0, 5.0)).collect();
            let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(project(&sub, &v).unwrap().norm() <= norm_v + 1e-12);
        }
    }
}
