//! Contiguous fixed-length views of a sequence.

use crate::error::{invalid, Result};
use crate::sampling::FeatureSequence;

/// The window of `len` frames starting at `floor((N - len) / 2)`.
pub fn central_view(seq: &FeatureSequence, len: usize) -> Result<FeatureSequence> {
    check(seq, len)?;
    seq.window((seq.len() - len) / 2, len)
}

/// `count` windows with start offsets spread evenly over `0..=N - len`.
/// A single view is the central one.
pub fn multi_views(seq: &FeatureSequence, len: usize, count: usize) -> Result<Vec<FeatureSequence>> {
    check(seq, len)?;
    if count == 0 {
        return invalid("view count must be at least 1");
    }
    if count == 1 {
        return Ok(vec![central_view(seq, len)?]);
    }
    let span = seq.len() - len;
    (0..count)
        .map(|i| {
            let start = i * span / (count - 1);
            Ok(seq.window(start, len)?.with_id(format!("{}@{start}", seq.id())))
        })
        .collect()
}

fn check(seq: &FeatureSequence, len: usize) -> Result<()> {
    if len == 0 {
        return invalid("view length must be at least 1");
    }
    if seq.len() < len {
        return invalid(format!(
            "sequence {} has {} frames, shorter than the view length {len}",
            seq.id(),
            seq.len()
        ));
    }
    Ok(())
}
