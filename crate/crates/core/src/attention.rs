//! RTW attention patterns, self-attention patterns and their comparison.
//!
//! An RTW attention pattern traces canonical vector `u_k` back to the input
//! frames in two hops:
//!
//! * TE features to canonical vector: `W = B α`, where `B` are the subspace's
//!   TE coefficients and `α` the canonical coefficients of that side, so
//!   `F W[:, k] = u_k`.
//! * frames to TE features: `Ŵ[j, i] = selection[i, j] / c_j`.
//!
//! The pattern is `t = Ŵ W[:, k]`, normalized to unit length. A canonical
//! pair `(u_k, v_k)` is only defined up to a joint sign flip, so each
//! pattern is oriented to have a non-negative entry sum.
//!
//! Self-attention patterns are the column sums of `softmax(Q Kᵀ / √d_k)`
//! for one head.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Result, RtwError};
use crate::msm::{CanonicalDecomposition, Side};
use crate::rng::{self, uniform};
use crate::sampling::{FeatureSequence, TESet};
use crate::subspace::HypoSubspace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum PatternKind {
    /// Contribution to the `k`-th canonical vector (zero-based).
    RtwCanonical(usize),
    /// Attention received per frame under head `h` (zero-based).
    SelfHead(usize),
}

impl PatternKind {
    pub fn name(&self) -> &'static str {
        match self {
            PatternKind::RtwCanonical(_) => "rtw_canonical",
            PatternKind::SelfHead(_) => "self_head",
        }
    }

    pub fn index(&self) -> usize {
        match *self {
            PatternKind::RtwCanonical(i) | PatternKind::SelfHead(i) => i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionPattern {
    pub weights: Vec<f64>,
    pub kind: PatternKind,
    pub source_id: String,
}

impl AttentionPattern {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `L x m_p` weights of each TE feature in each canonical vector of `side`.
pub fn rtw_te_to_canonical_weights(
    sub: &HypoSubspace,
    cd: &CanonicalDecomposition,
    side: Side,
) -> Result<DMatrix<f64>> {
    let expected = cd.subspace_dims(side);
    if expected != (sub.te_dim(), sub.dim()) {
        return invalid(format!(
            "subspace ({}, {}) was not the {side:?} side of this decomposition ({}, {})",
            sub.te_dim(),
            sub.dim(),
            expected.0,
            expected.1
        ));
    }
    Ok(sub.te_coeffs() * cd.coefficients(side))
}

/// `N x L` frame-to-TE weights. Frames that were never sampled get a zero row.
pub fn rtw_frame_to_te_weights(te: &TESet) -> DMatrix<f64> {
    let counts = te.frame_counts();
    let sel = te.selection();
    DMatrix::from_fn(te.n_frames(), te.len(), |j, i| {
        if counts[j] == 0 {
            0.0
        } else {
            f64::from(sel[(i, j)]) / counts[j] as f64
        }
    })
}

/// Frames with `c_j = 0`; their contribution is defined as zero.
pub fn unsampled_frames(te: &TESet) -> Vec<usize> {
    te.frame_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(j, _)| j)
        .collect()
}

/// Unit-norm contribution of every input frame to canonical vector `k`
/// (zero-based) of the subspace passed as `side`.
pub fn rtw_attention_pattern(
    te: &TESet,
    sub: &HypoSubspace,
    cd: &CanonicalDecomposition,
    side: Side,
    k: usize,
) -> Result<AttentionPattern> {
    if k >= cd.len() {
        return invalid(format!("canonical index {k} out of range 0..{}", cd.len()));
    }
    if te.len() != sub.te_count() {
        return invalid(format!(
            "TE set has {} features but the subspace was built from {}",
            te.len(),
            sub.te_count()
        ));
    }
    let w = rtw_te_to_canonical_weights(sub, cd, side)?;
    let frame_w = rtw_frame_to_te_weights(te);
    let t = frame_w * w.column(k);
    let norm = t.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(RtwError::DegeneratePattern(format!(
            "frame contributions to canonical vector {k} of {} vanish",
            sub.source_id()
        )));
    }
    let sign = if t.sum() < 0.0 { -1.0 } else { 1.0 };
    Ok(AttentionPattern {
        weights: t.iter().map(|x| sign * x / norm).collect(),
        kind: PatternKind::RtwCanonical(k),
        source_id: te.source_id().to_owned(),
    })
}

/// Patterns for the first `count` canonical vectors.
pub fn rtw_attention_patterns(
    te: &TESet,
    sub: &HypoSubspace,
    cd: &CanonicalDecomposition,
    side: Side,
    count: usize,
) -> Result<Vec<AttentionPattern>> {
    (0..count)
        .map(|k| rtw_attention_pattern(te, sub, cd, side, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    /// `d_model x d_k`
    pub w_q: DMatrix<f64>,
    /// `d_model x d_k`
    pub w_k: DMatrix<f64>,
    /// `d_model x d_v`
    pub w_v: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    File,
    SeededRandom(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttentionConfig {
    pub d_model: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub heads: Vec<HeadWeights>,
    pub source: WeightSource,
}

impl SelfAttentionConfig {
    pub fn new(
        d_model: usize,
        d_k: usize,
        d_v: usize,
        heads: Vec<HeadWeights>,
        source: WeightSource,
    ) -> Result<Self> {
        if d_model == 0 || d_k == 0 || d_v == 0 || heads.is_empty() {
            return invalid("attention dimensions and head count must be at least 1");
        }
        for (h, w) in heads.iter().enumerate() {
            let ok = w.w_q.shape() == (d_model, d_k)
                && w.w_k.shape() == (d_model, d_k)
                && w.w_v.shape() == (d_model, d_v);
            if !ok {
                return invalid(format!("head {h} has inconsistent weight shapes"));
            }
        }
        Ok(Self {
            d_model,
            d_k,
            d_v,
            heads,
            source,
        })
    }

    /// Weights drawn i.i.d. uniform in `[-a, a]` with
    /// `a = sqrt(6 / (d_model + d_k))`, filled head by head, each matrix
    /// row-major in the order `W_Q`, `W_K`, `W_V`.
    pub fn seeded_random(
        heads: usize,
        d_model: usize,
        d_k: usize,
        d_v: usize,
        seed: u64,
    ) -> Result<Self> {
        if d_model + d_k == 0 {
            return invalid("attention dimensions must be at least 1");
        }
        let a = (6.0 / (d_model + d_k) as f64).sqrt();
        let mut r = rng::seeded(seed);
        let draw = |rows: usize, cols: usize, r: &mut rng::RtwRng| {
            let vals: Vec<f64> = (0..rows * cols).map(|_| uniform(r, -a, a)).collect();
            DMatrix::from_row_slice(rows, cols, &vals)
        };
        let heads = (0..heads)
            .map(|_| HeadWeights {
                w_q: draw(d_model, d_k, &mut r),
                w_k: draw(d_model, d_k, &mut r),
                w_v: draw(d_model, d_v, &mut r),
            })
            .collect();
        Self::new(d_model, d_k, d_v, heads, WeightSource::SeededRandom(seed))
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    fn head(&self, head: usize) -> Result<&HeadWeights> {
        self.heads.get(head).ok_or_else(|| {
            RtwError::InvalidArgument(format!("head {head} out of range 0..{}", self.heads.len()))
        })
    }

    fn check_input(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.dim() != self.d_model {
            return invalid(format!(
                "sequence dimension {} does not match d_model {}",
                seq.dim(),
                self.d_model
            ));
        }
        Ok(())
    }
}

/// Row-wise softmax with the row maximum subtracted before exponentiation.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// `N x N` attention matrix `softmax(Q Kᵀ / √d_k)` of one head.
pub fn self_attention_weights(
    seq: &FeatureSequence,
    cfg: &SelfAttentionConfig,
    head: usize,
) -> Result<DMatrix<f64>> {
    cfg.check_input(seq)?;
    let w = cfg.head(head)?;
    let z = seq.to_matrix();
    let q = &z * &w.w_q;
    let k = &z * &w.w_k;
    let logits = (q * k.transpose()) / (cfg.d_k as f64).sqrt();
    Ok(softmax_rows(&logits))
}

/// Tolerance on row sums when checking that a matrix is row-stochastic.
const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Column sums `s_j = Σ_i A_ij` of a row-stochastic attention matrix.
pub fn self_attention_pattern(
    a: &DMatrix<f64>,
    head: usize,
    source_id: &str,
) -> Result<AttentionPattern> {
    if a.nrows() != a.ncols() || a.is_empty() {
        return invalid(format!("attention matrix must be square, got {:?}", a.shape()));
    }
    for (i, row) in a.row_iter().enumerate() {
        if row.iter().any(|&x| !(x >= 0.0)) || (row.sum() - 1.0).abs() > STOCHASTIC_TOLERANCE {
            return invalid(format!("attention row {i} is not a probability distribution"));
        }
    }
    Ok(AttentionPattern {
        weights: a.row_sum().iter().copied().collect(),
        kind: PatternKind::SelfHead(head),
        source_id: source_id.to_owned(),
    })
}

/// Outputs `r_i = Σ_j A_ij v_j`, i.e. `A V` with `V = Z W_V` (`N x d_v`).
pub fn attended_values(
    a: &DMatrix<f64>,
    seq: &FeatureSequence,
    cfg: &SelfAttentionConfig,
    head: usize,
) -> Result<DMatrix<f64>> {
    cfg.check_input(seq)?;
    let w = cfg.head(head)?;
    if a.shape() != (seq.len(), seq.len()) {
        return invalid(format!(
            "attention matrix {:?} does not match sequence length {}",
            a.shape(),
            seq.len()
        ));
    }
    let v = seq.to_matrix() * &w.w_v;
    Ok(a * v)
}

/// Self-attention patterns of every head.
pub fn head_patterns(seq: &FeatureSequence, cfg: &SelfAttentionConfig) -> Result<Vec<AttentionPattern>> {
    (0..cfg.head_count())
        .map(|h| self_attention_pattern(&self_attention_weights(seq, cfg, h)?, h, seq.id()))
        .collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return invalid(format!("pattern lengths differ: {} vs {}", a.len(), b.len()));
    }
    let a = DVector::from_column_slice(a);
    let b = DVector::from_column_slice(b);
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Err(RtwError::DegeneratePattern("cosine of a zero pattern".into()));
    }
    Ok((a.dot(&b) / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub canonical: usize,
    pub head: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    /// One pair per RTW pattern, in canonical order.
    pub pairs: Vec<MatchedPair>,
    pub mean_similarity: f64,
    /// `similarities[k][h]`: cosine between RTW pattern `k` and head `h`.
    pub similarities: Vec<Vec<f64>>,
}

/// Pairs RTW pattern `k = 0, 1, ...` with the most similar head not yet
/// taken (ties go to the lowest head index).
pub fn greedy_match(rtw: &[AttentionPattern], heads: &[AttentionPattern]) -> Result<MatchReport> {
    if rtw.is_empty() {
        return invalid("no RTW patterns to match");
    }
    if rtw.len() > heads.len() {
        return invalid(format!(
            "{} RTW patterns cannot be matched to {} heads without replacement",
            rtw.len(),
            heads.len()
        ));
    }
    let similarities = rtw
        .iter()
        .map(|t| {
            heads
                .iter()
                .map(|s| cosine_similarity(&t.weights, &s.weights))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut used = vec![false; heads.len()];
    let mut pairs = Vec::with_capacity(rtw.len());
    for (k, row) in similarities.iter().enumerate() {
        let mut best: Option<usize> = None;
        for (h, &s) in row.iter().enumerate() {
            if !used[h] && best.is_none_or(|b| s > row[b]) {
                best = Some(h);
            }
        }
        let h = best.expect("K <= H leaves a free head");
        used[h] = true;
        pairs.push(MatchedPair {
            canonical: k,
            head: h,
            similarity: row[h],
        });
    }
    let mean_similarity = pairs.iter().map(|p| p.similarity).sum::<f64>() / pairs.len() as f64;
    Ok(MatchReport {
        pairs,
        mean_similarity,
        similarities,
    })
}

/// Writes one CSV record per pattern: kind, index, then the weights.
pub fn write_patterns_csv<W: Write>(out: W, patterns: &[AttentionPattern]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    for p in patterns {
        let mut record = vec![p.kind.name().to_owned(), p.kind.index().to_string()];
        record.extend(p.weights.iter().map(|x| x.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
