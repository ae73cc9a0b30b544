//! Time Elastic (TE) features: order-preserving random samples of a sequence.
//!
//! A TE feature picks `R` of the `N` frames of a sequence, keeps them in
//! temporal order and concatenates them into one vector of length
//! `d_model * R`. Index subsets are drawn uniformly among all `C(N, R)`
//! ascending subsets using selection sampling (Knuth's Algorithm S): frame
//! `j` is taken with probability `needed / remaining`, which yields the
//! indices already sorted and consumes exactly one uniform draw per visited
//! frame.

use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{self, unit_f64};

/// An ordered list of `N` feature vectors of equal dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    id: String,
    dim: usize,
    /// Frame-major storage, `len * dim` entries.
    data: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(id: impl Into<String>, frames: Vec<Vec<f64>>) -> Result<Self> {
        let dim = frames.first().map_or(0, Vec::len);
        if frames.iter().any(|f| f.len() != dim) {
            return invalid("all frames must share one dimension");
        }
        Self::from_flat(id, dim, frames.into_iter().flatten().collect())
    }

    /// Builds a sequence from frame-major data (`len * dim` values).
    pub fn from_flat(id: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("feature dimension must be at least 1");
        }
        if data.is_empty() {
            return invalid("a sequence needs at least one frame");
        }
        if data.len() % dim != 0 {
            return invalid(format!(
                "{} values do not split into frames of dimension {dim}",
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite entry at flat position {pos}"));
        }
        Ok(Self {
            id: id.into(),
            dim,
            data,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Number of frames `N`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Frame dimension `d_model`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The sequence as an `N x d_model` matrix, one frame per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    /// Contiguous sub-sequence of frames `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return invalid(format!(
                "window {start}..{} outside sequence of length {}",
                start + len,
                self.len()
            ));
        }
        Ok(Self {
            id: self.id.clone(),
            dim: self.dim,
            data: self.data[start * self.dim..(start + len) * self.dim].to_vec(),
        })
    }
}

/// One time-warped view: `R` frames concatenated in temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct TEFeature {
    pub vector: Vec<f64>,
    /// Strictly increasing source-frame indices.
    pub indices: Vec<usize>,
}

/// `L` TE features drawn from one sequence plus the `L x N` selection record.
#[derive(Debug, Clone, PartialEq)]
pub struct TESet {
    features: Vec<TEFeature>,
    selection: DMatrix<u8>,
    source_id: String,
    seed: u64,
}

impl TESet {
    pub fn features(&self) -> &[TEFeature] {
        &self.features
    }

    /// Entry `(i, j)` is 1 iff frame `j` appears in TE feature `i`.
    pub fn selection(&self) -> &DMatrix<u8> {
        &self.selection
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of TE features `L`.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Length `N` of the source sequence.
    pub fn n_frames(&self) -> usize {
        self.selection.ncols()
    }

    /// Samples per TE feature `R`.
    pub fn samples_per_feature(&self) -> usize {
        self.features[0].indices.len()
    }

    pub fn te_dim(&self) -> usize {
        self.features[0].vector.len()
    }

    /// Appearance counts `c_j`: how many TE features use frame `j`.
    pub fn frame_counts(&self) -> Vec<usize> {
        self.selection
            .column_iter()
            .map(|c| c.iter().map(|&v| v as usize).sum())
            .collect()
    }

    /// The `d_te x L` matrix whose columns are the TE vectors.
    pub fn te_matrix(&self) -> DMatrix<f64> {
        let d = self.te_dim();
        DMatrix::from_fn(d, self.len(), |r, c| self.features[c].vector[r])
    }
}

/// Draws one TE feature, uniform over the ascending `R`-subsets of frames.
pub fn sample_te_feature(
    seq: &FeatureSequence,
    samples: usize,
    rng: &mut impl RngCore,
) -> Result<TEFeature> {
    let n = seq.len();
    if samples == 0 {
        return invalid("R must be at least 1");
    }
    if samples > n {
        return invalid(format!("R = {samples} exceeds sequence length {n}"));
    }
    let mut indices = Vec::with_capacity(samples);
    for j in 0..n {
        let needed = samples - indices.len();
        if needed == 0 {
            break;
        }
        let remaining = n - j;
        // Forced picks skip the draw so the tail never depends on rounding.
        if needed == remaining || unit_f64(rng) * (remaining as f64) < needed as f64 {
            indices.push(j);
        }
    }
    let mut vector = Vec::with_capacity(samples * seq.dim());
    for &j in &indices {
        vector.extend_from_slice(seq.frame(j));
    }
    Ok(TEFeature { vector, indices })
}

/// Draws `L` independent TE features from a fresh ChaCha8 stream seeded
/// with `seed`.
pub fn generate_te_set(
    seq: &FeatureSequence,
    samples: usize,
    count: usize,
    seed: u64,
) -> Result<TESet> {
    if count == 0 {
        return invalid("L must be at least 1");
    }
    let mut rng = rng::seeded(seed);
    let features = (0..count)
        .map(|_| sample_te_feature(seq, samples, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut selection = DMatrix::<u8>::zeros(count, seq.len());
    for (i, f) in features.iter().enumerate() {
        for &j in &f.indices {
            selection[(i, j)] = 1;
        }
    }
    Ok(TESet {
        features,
        selection,
        source_id: seq.id().to_owned(),
        seed,
    })
}
