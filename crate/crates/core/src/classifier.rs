//! Two-stage RTW classification.
//!
//! Learning builds a [`ReferenceBank`]: each class's training sequences are
//! chunked in order into groups of `group_size` (r_c), their TE sets are
//! pooled and one hypo subspace is built per group. Inference builds the
//! input's subspace, scores every reference with the MSM similarity, and
//! ranks classes by the mean of their top-k similarities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RtwError};
use crate::msm::{canonical_angles, similarity};
use crate::rng::derive_seed;
use crate::sampling::{generate_te_set, FeatureSequence, TESet};
use crate::subspace::{build_hypo_subspace, build_pooled_subspace, HypoSubspace};

/// How TE-sampling seeds are assigned to training sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedPolicy {
    /// Every sequence (and the classified input) uses the configured seed.
    #[default]
    Shared,
    /// Training item `i` uses `derive_seed(seed, i)`.
    PerSequence,
}

impl SeedPolicy {
    pub fn seed_for(self, seed: u64, item: usize) -> u64 {
        match self {
            SeedPolicy::Shared => seed,
            SeedPolicy::PerSequence => derive_seed(seed, item as u64),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SeedPolicy::Shared => 0,
            SeedPolicy::PerSequence => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SeedPolicy::Shared),
            1 => Some(SeedPolicy::PerSequence),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Frames per TE feature (R).
    pub samples: usize,
    /// TE features per sequence (L).
    pub te_count: usize,
    /// Reference subspace dimension.
    pub dim: usize,
    /// Sequences pooled into one reference subspace (r_c).
    pub group_size: usize,
    pub seed: u64,
    pub seed_policy: SeedPolicy,
    pub normalize_te: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEntry {
    pub label: String,
    pub subspaces: Vec<HypoSubspace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBank {
    pub classes: Vec<ClassEntry>,
    pub config: BuildConfig,
}

impl ReferenceBank {
    pub fn new(classes: Vec<ClassEntry>, config: BuildConfig) -> Result<Self> {
        if classes.is_empty() {
            return invalid("bank has no classes");
        }
        let d = classes
            .iter()
            .flat_map(|c| c.subspaces.first())
            .map(HypoSubspace::te_dim)
            .next();
        for c in &classes {
            if c.subspaces.is_empty() {
                return Err(RtwError::Build(format!("class {} has no subspaces", c.label)));
            }
            if c.subspaces.iter().any(|s| Some(s.te_dim()) != d) {
                return Err(RtwError::Build(format!(
                    "class {} mixes TE dimensions",
                    c.label
                )));
            }
        }
        Ok(Self { classes, config })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.label.as_str())
    }

    pub fn te_dim(&self) -> usize {
        self.classes[0].subspaces[0].te_dim()
    }

    pub fn subspace_count(&self) -> usize {
        self.classes.iter().map(|c| c.subspaces.len()).sum()
    }
}

/// A training or test item that was left out, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedItem {
    pub id: String,
    pub label: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BankBuild {
    pub bank: ReferenceBank,
    pub skipped: Vec<SkippedItem>,
}

pub fn build_reference_bank(
    training: &[(FeatureSequence, String)],
    config: &BuildConfig,
) -> Result<BankBuild> {
    if training.is_empty() {
        return invalid("training set is empty");
    }
    if config.group_size == 0 {
        return invalid("group size r_c must be at least 1");
    }
    if config.dim == 0 || config.te_count == 0 || config.samples == 0 {
        return invalid("R, L and m must all be at least 1");
    }

    let mut labels: Vec<&str> = Vec::new();
    for (_, label) in training {
        if !labels.contains(&label.as_str()) {
            labels.push(label);
        }
    }

    let mut skipped = Vec::new();
    let te_sets: Vec<Option<TESet>> = training
        .par_iter()
        .enumerate()
        .map(|(i, (seq, _))| {
            generate_te_set(
                seq,
                config.samples,
                config.te_count,
                config.seed_policy.seed_for(config.seed, i),
            )
        })
        .collect::<Vec<_>>()
        .into_iter()
        .zip(training)
        .map(|(res, (seq, label))| match res {
            Ok(te) => Some(te),
            Err(e) => {
                skipped.push(SkippedItem {
                    id: seq.id().to_owned(),
                    label: label.clone(),
                    reason: e.to_string(),
                });
                None
            }
        })
        .collect();

    // (class index, group ordinal, member TE sets)
    let mut groups: Vec<(usize, usize, Vec<&TESet>)> = Vec::new();
    for (ci, label) in labels.iter().enumerate() {
        let members: Vec<&TESet> = training
            .iter()
            .zip(&te_sets)
            .filter(|((_, l), _)| l == label)
            .filter_map(|(_, te)| te.as_ref())
            .collect();
        for (gi, chunk) in members.chunks(config.group_size).enumerate() {
            groups.push((ci, gi, chunk.to_vec()));
        }
    }

    let built: Vec<Result<HypoSubspace>> = groups
        .par_iter()
        .map(|(ci, gi, sets)| {
            let id = if sets.len() == 1 {
                sets[0].source_id().to_owned()
            } else {
                format!("{}#{gi}", labels[*ci])
            };
            if sets.len() == 1 {
                build_hypo_subspace(sets[0], config.dim, config.normalize_te)
            } else {
                build_pooled_subspace(sets, config.dim, config.normalize_te, &id)
            }
        })
        .collect();

    let mut classes: Vec<ClassEntry> = labels
        .iter()
        .map(|l| ClassEntry {
            label: (*l).to_owned(),
            subspaces: Vec::new(),
        })
        .collect();
    for ((ci, _, sets), res) in groups.iter().zip(built) {
        match res {
            Ok(sub) => classes[*ci].subspaces.push(sub),
            Err(e) => {
                for s in sets {
                    skipped.push(SkippedItem {
                        id: s.source_id().to_owned(),
                        label: labels[*ci].to_owned(),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    if let Some(empty) = classes.iter().find(|c| c.subspaces.is_empty()) {
        return Err(RtwError::Build(format!(
            "class {} has no usable training sequences",
            empty.label
        )));
    }
    Ok(BankBuild {
        bank: ReferenceBank::new(classes, *config)?,
        skipped,
    })
}

/// Inference-side knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub samples: usize,
    pub te_count: usize,
    /// Input subspace dimension.
    pub input_dim: usize,
    /// Canonical angles used by the similarity. Clipped to the number of
    /// available angles for each pair.
    pub angles: usize,
    pub top_k: usize,
    pub seed: u64,
    pub normalize_te: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub predicted_label: String,
    pub predicted_index: usize,
    /// One score per bank class, in bank order.
    pub class_scores: Vec<(String, f64)>,
    /// Per class, similarities to each reference, sorted descending.
    pub per_reference_sims: Vec<Vec<f64>>,
    pub input_subspace: HypoSubspace,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// Mean of the `k` largest values of a descending list (all of them if
/// fewer than `k` exist).
pub fn top_k_mean(sorted_desc: &[f64], k: usize) -> f64 {
    let n = k.min(sorted_desc.len());
    if n == 0 {
        return 0.0;
    }
    sorted_desc[..n].iter().sum::<f64>() / n as f64
}

pub fn classify_subspace(
    bank: &ReferenceBank,
    input: HypoSubspace,
    angles: usize,
    top_k: usize,
) -> Result<ClassificationResult> {
    if bank.classes.is_empty() {
        return invalid("bank is empty");
    }
    if top_k == 0 || angles == 0 {
        return invalid("k and the number of angles must be at least 1");
    }
    if input.te_dim() != bank.te_dim() {
        return invalid(format!(
            "input TE dimension {} does not match bank dimension {}",
            input.te_dim(),
            bank.te_dim()
        ));
    }
    let per_reference_sims = bank
        .classes
        .iter()
        .map(|class| {
            let mut sims = class
                .subspaces
                .par_iter()
                .map(|r| {
                    let cd = canonical_angles(&input, r)?;
                    similarity(&cd, angles.min(cd.len()))
                })
                .collect::<Result<Vec<f64>>>()?;
            sims.sort_by(|a, b| b.total_cmp(a));
            Ok(sims)
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = per_reference_sims.iter().map(|s| top_k_mean(s, top_k)).collect();
    let best = argmax(&scores).expect("bank has classes");
    Ok(ClassificationResult {
        predicted_label: bank.classes[best].label.clone(),
        predicted_index: best,
        class_scores: bank
            .classes
            .iter()
            .zip(&scores)
            .map(|(c, &s)| (c.label.clone(), s))
            .collect(),
        per_reference_sims,
        input_subspace: input,
    })
}

pub fn classify(
    bank: &ReferenceBank,
    input: &FeatureSequence,
    params: &ClassifyParams,
) -> Result<ClassificationResult> {
    if bank.classes.is_empty() {
        return invalid("bank is empty");
    }
    if params.top_k == 0 {
        return invalid("k must be at least 1");
    }
    let te = generate_te_set(input, params.samples, params.te_count, params.seed)?;
    let sub = build_hypo_subspace(&te, params.input_dim, params.normalize_te)?;
    classify_subspace(bank, sub, params.angles, params.top_k)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub items: usize,
    pub classified: usize,
    pub correct: usize,
    /// Fraction in `[0, 1]` over the successfully classified items.
    pub accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// Row/column order of `confusion`: bank labels, then test-only labels.
    pub labels: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Predicted label per test item (`None` when it errored).
    pub predictions: Vec<Option<String>>,
    pub errors: Vec<SkippedItem>,
}

pub fn evaluate(
    bank: &ReferenceBank,
    test: &[(FeatureSequence, String)],
    params: &ClassifyParams,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return invalid("test set is empty");
    }
    let results: Vec<Result<ClassificationResult>> = test
        .par_iter()
        .map(|(seq, _)| classify(bank, seq, params))
        .collect();

    let mut labels: Vec<String> = bank.labels().map(str::to_owned).collect();
    for (_, l) in test {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    let index_of = |l: &str| labels.iter().position(|x| x == l).expect("label registered");
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    let mut per_class_totals = vec![(0usize, 0usize); labels.len()];
    let mut errors = Vec::new();
    let mut predictions = Vec::with_capacity(test.len());
    let (mut classified, mut correct) = (0, 0);
    for ((seq, truth), res) in test.iter().zip(results) {
        match res {
            Ok(r) => {
                let t = index_of(truth);
                confusion[t][r.predicted_index] += 1;
                classified += 1;
                per_class_totals[t].0 += 1;
                if r.predicted_label == *truth {
                    correct += 1;
                    per_class_totals[t].1 += 1;
                }
                predictions.push(Some(r.predicted_label));
            }
            Err(e) => {
                errors.push(SkippedItem {
                    id: seq.id().to_owned(),
                    label: truth.clone(),
                    reason: e.to_string(),
                });
                predictions.push(None);
            }
        }
    }
    let ratio = |c: usize, t: usize| if t == 0 { 0.0 } else { c as f64 / t as f64 };
    let per_class = labels
        .iter()
        .zip(&per_class_totals)
        .filter(|(_, (t, _))| *t > 0)
        .map(|(l, &(t, c))| ClassAccuracy {
            label: l.clone(),
            total: t,
            correct: c,
            accuracy: ratio(c, t),
        })
        .collect();
    Ok(EvaluationReport {
        items: test.len(),
        classified,
        correct,
        accuracy: ratio(correct, classified),
        per_class,
        labels,
        confusion,
        predictions,
        errors,
    })
}
