//! Pipelines shared by the command line tool: view selection and the
//! RTW-versus-self-attention comparison.

use serde::Serialize;

use crate::attention::{
    greedy_match, head_patterns, rtw_attention_patterns, unsampled_frames, AttentionPattern,
    MatchReport, SelfAttentionConfig,
};
use crate::classifier::{ReferenceBank, SkippedItem};
use crate::config::{RunConfig, ViewMode};
use crate::error::{invalid, Result};
use crate::msm::{canonical_angles, similarity, Side};
use crate::rng::derive_seed;
use crate::sampling::{generate_te_set, FeatureSequence};
use crate::subspace::{build_hypo_subspace, HypoSubspace};
use crate::view::central_view;

/// Stream used to derive the seed of the independent reference resample.
const REFERENCE_STREAM: u64 = 0x5245_4653;

/// The part of `seq` RTW sees under `cfg.view`.
pub fn select_view(seq: &FeatureSequence, cfg: &RunConfig) -> Result<FeatureSequence> {
    match cfg.view {
        ViewMode::Full => Ok(seq.clone()),
        ViewMode::Central => central_view(seq, cfg.view_length),
    }
}

/// Applies [`select_view`] to labeled items; items too short for the view
/// are returned as skipped instead of failing the whole set.
pub fn select_views(
    items: &[(FeatureSequence, String)],
    cfg: &RunConfig,
) -> (Vec<(FeatureSequence, String)>, Vec<SkippedItem>) {
    let mut kept = Vec::with_capacity(items.len());
    let mut skipped = Vec::new();
    for (seq, label) in items {
        match select_view(seq, cfg) {
            Ok(v) => kept.push((v, label.clone())),
            Err(e) => skipped.push(SkippedItem {
                id: seq.id().to_owned(),
                label: label.clone(),
                reason: e.to_string(),
            }),
        }
    }
    (kept, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceChoice {
    /// A second TE set drawn from the same view with the given seed.
    Resample { seed: u64 },
    /// The bank subspace most similar to the input subspace.
    Bank {
        label: String,
        subspace: usize,
        similarity: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionComparison {
    pub input_id: String,
    pub input_frames: usize,
    pub view_start: usize,
    pub view_frames: usize,
    pub reference: ReferenceChoice,
    /// Canonical correlations of the matched canonical vectors.
    pub kappas: Vec<f64>,
    pub unsampled_frames: Vec<usize>,
    pub report: MatchReport,
    pub rtw_patterns: Vec<AttentionPattern>,
    pub head_patterns: Vec<AttentionPattern>,
}

impl AttentionComparison {
    /// RTW patterns followed by head patterns, the CSV row order.
    pub fn all_patterns(&self) -> Vec<AttentionPattern> {
        self.rtw_patterns
            .iter()
            .chain(&self.head_patterns)
            .cloned()
            .collect()
    }
}

fn best_bank_reference<'a>(
    bank: &'a ReferenceBank,
    input: &HypoSubspace,
    angles: usize,
) -> Result<(&'a HypoSubspace, ReferenceChoice)> {
    if bank.te_dim() != input.te_dim() {
        return invalid(format!(
            "bank TE dimension {} does not match input TE dimension {}",
            bank.te_dim(),
            input.te_dim()
        ));
    }
    let mut best: Option<(&HypoSubspace, ReferenceChoice)> = None;
    let mut best_sim = f64::NEG_INFINITY;
    for class in &bank.classes {
        for (i, sub) in class.subspaces.iter().enumerate() {
            let cd = canonical_angles(input, sub)?;
            let sim = similarity(&cd, angles.min(cd.len()))?;
            if sim > best_sim {
                best_sim = sim;
                best = Some((
                    sub,
                    ReferenceChoice::Bank {
                        label: class.label.clone(),
                        subspace: i,
                        similarity: sim,
                    },
                ));
            }
        }
    }
    Ok(best.expect("banks are never empty"))
}

/// Patterns of the first `cfg.angles` canonical vectors of the input view
/// against a reference subspace, matched greedily to the heads of `weights`.
pub fn compare_attention(
    seq: &FeatureSequence,
    cfg: &RunConfig,
    weights: &SelfAttentionConfig,
    bank: Option<&ReferenceBank>,
) -> Result<AttentionComparison> {
    let view = select_view(seq, cfg)?;
    let view_start = match cfg.view {
        ViewMode::Full => 0,
        ViewMode::Central => (seq.len() - view.len()) / 2,
    };
    let te = generate_te_set(&view, cfg.samples, cfg.te_count, cfg.seed)?;
    let input = build_hypo_subspace(&te, cfg.input_dim, cfg.normalize_te)?;

    let resampled;
    let (reference, choice) = match bank {
        Some(b) => best_bank_reference(b, &input, cfg.angles)?,
        None => {
            let seed = derive_seed(cfg.seed, REFERENCE_STREAM);
            let te2 = generate_te_set(&view, cfg.samples, cfg.te_count, seed)?;
            resampled = build_hypo_subspace(&te2, cfg.ref_dim, cfg.normalize_te)?;
            (&resampled, ReferenceChoice::Resample { seed })
        }
    };
    let cd = canonical_angles(&input, reference)?;
    let k = cfg.angles.min(cd.len());
    if k > weights.head_count() {
        return invalid(format!(
            "{k} canonical vectors cannot be matched to {} heads",
            weights.head_count()
        ));
    }
    let rtw = rtw_attention_patterns(&te, &input, &cd, Side::First, k)?;
    let heads = head_patterns(&view, weights)?;
    let report = greedy_match(&rtw, &heads)?;
    Ok(AttentionComparison {
        input_id: seq.id().to_owned(),
        input_frames: seq.len(),
        view_start,
        view_frames: view.len(),
        reference: choice,
        kappas: cd.kappas[..k].to_vec(),
        unsampled_frames: unsampled_frames(&te),
        report,
        rtw_patterns: rtw,
        head_patterns: heads,
    })
}
