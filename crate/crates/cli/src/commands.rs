use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use rtw_core::attention::{write_patterns_csv, MatchedPair, SelfAttentionConfig, WeightSource};
use rtw_core::classifier::{build_reference_bank, classify as classify_one, SkippedItem};
use rtw_core::harness::{compare_attention, select_view, select_views, ReferenceChoice};
use rtw_core::io::{self, LoadIssue};
use rtw_core::synth::{generate_dataset, max_prototype_similarity, SynthSpec};
use rtw_core::{FeatureSequence, RunConfig};

use crate::UsageError;

fn emit<T: Serialize>(doc: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, doc)?;
    writeln!(out)?;
    Ok(())
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn path_or_config(flag: Option<PathBuf>, configured: &Option<String>, what: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| configured.as_ref().map(PathBuf::from))
        .ok_or_else(|| usage(format!("no {what} given (pass a flag or set it in the config)")))
}

#[derive(Serialize)]
struct IssueRecord {
    path: String,
    reason: String,
}

fn issue_records(issues: &[LoadIssue]) -> Vec<IssueRecord> {
    issues
        .iter()
        .map(|i| IssueRecord {
            path: i.path.display().to_string(),
            reason: i.reason.clone(),
        })
        .collect()
}

#[derive(Args, Debug)]
pub struct BuildBankArgs {
    /// Directory of labeled feature files, DIR/<label>/*.rtwf.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Output bank file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassSummary {
    label: String,
    sequences: usize,
    subspaces: usize,
    dims: Vec<usize>,
}

#[derive(Serialize)]
struct BuildBankReport<'a> {
    config: &'a RunConfig,
    bank: Option<String>,
    te_dim: Option<usize>,
    subspace_count: usize,
    classes: Vec<ClassSummary>,
    empty_classes: Vec<String>,
    skipped: Vec<SkippedItem>,
    load_issues: Vec<IssueRecord>,
    error: Option<String>,
}

fn class_dirs(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    let mut labels = BTreeSet::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                labels.insert(name.to_owned());
            }
        }
    }
    Ok(labels)
}

pub fn build_bank(cfg: &RunConfig, args: BuildBankArgs) -> anyhow::Result<()> {
    let data = path_or_config(args.data, &cfg.data_dir, "data directory")?;
    let out = path_or_config(args.out, &cfg.bank, "output bank path")?;
    let labels = class_dirs(&data)?;
    if labels.is_empty() {
        bail!("{} has no class subdirectories", data.display());
    }
    let (items, issues) = io::load_labeled_dir(&data)?;
    let (viewed, mut skipped) = select_views(&items, cfg);

    let mut report = BuildBankReport {
        config: cfg,
        bank: None,
        te_dim: None,
        subspace_count: 0,
        classes: Vec::new(),
        empty_classes: Vec::new(),
        skipped: Vec::new(),
        load_issues: issue_records(&issues),
        error: None,
    };
    let with_items: BTreeSet<&str> = viewed.iter().map(|(_, l)| l.as_str()).collect();
    report.empty_classes = labels
        .iter()
        .filter(|l| !with_items.contains(l.as_str()))
        .cloned()
        .collect();

    let built = if viewed.is_empty() {
        None
    } else {
        match build_reference_bank(&viewed, &cfg.build_config()) {
            Ok(b) => Some(b),
            Err(e) => {
                report.error = Some(e.to_string());
                None
            }
        }
    };
    if let Some(b) = &built {
        skipped.extend(b.skipped.iter().cloned());
        report.te_dim = Some(b.bank.te_dim());
        report.subspace_count = b.bank.subspace_count();
        report.classes = b
            .bank
            .classes
            .iter()
            .map(|c| ClassSummary {
                label: c.label.clone(),
                sequences: viewed.iter().filter(|(_, l)| *l == c.label).count()
                    - b.skipped.iter().filter(|s| s.label == c.label).count(),
                subspaces: c.subspaces.len(),
                dims: c.subspaces.iter().map(|s| s.dim()).collect(),
            })
            .collect();
    }
    report.skipped = skipped;

    let ok = built.is_some() && report.empty_classes.is_empty();
    if ok {
        let b = built.expect("checked");
        io::write_bank(&out, &b.bank).with_context(|| format!("writing {}", out.display()))?;
        report.bank = Some(out.display().to_string());
    }
    emit(&report)?;
    if !ok {
        let why = match (&report.error, report.empty_classes.is_empty()) {
            (Some(e), _) => e.clone(),
            (None, false) => format!("classes without usable sequences: {:?}", report.empty_classes),
            (None, true) => "no usable training sequences".to_owned(),
        };
        bail!("bank not written: {why}");
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Bank file written by build-bank.
    #[arg(long, value_name = "FILE")]
    bank: Option<PathBuf>,
    /// Feature files, or labeled directories DIR/<label>/*.rtwf.
    #[arg(value_name = "INPUT")]
    inputs: Vec<PathBuf>,
}

struct Input {
    seq: FeatureSequence,
    label: Option<String>,
    path: PathBuf,
}

#[derive(Serialize)]
struct Score {
    label: String,
    score: f64,
}

#[derive(Serialize)]
struct Record {
    id: String,
    path: String,
    label: Option<String>,
    predicted: Option<String>,
    correct: Option<bool>,
    scores: Vec<Score>,
    error: Option<String>,
}

#[derive(Serialize)]
struct ClassTally {
    label: String,
    total: usize,
    correct: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct Summary {
    items: usize,
    classified: usize,
    labeled: usize,
    correct: usize,
    /// Over labeled, successfully classified items.
    accuracy: Option<f64>,
    per_class: Vec<ClassTally>,
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    config: &'a RunConfig,
    bank: String,
    records: Vec<Record>,
    summary: Summary,
    load_issues: Vec<IssueRecord>,
}

fn gather_inputs(paths: &[PathBuf]) -> anyhow::Result<(Vec<Input>, Vec<LoadIssue>)> {
    let mut inputs = Vec::new();
    let mut issues = Vec::new();
    for p in paths {
        if p.is_dir() {
            let (items, bad) = io::load_labeled_dir(p)?;
            for (seq, label) in items {
                let path = p.join(&label).join(format!("{}.{}", seq.id(), io::FEATURE_EXTENSION));
                inputs.push(Input {
                    seq,
                    label: Some(label),
                    path,
                });
            }
            issues.extend(bad);
        } else {
            let seq = io::read_features(p).with_context(|| format!("reading {}", p.display()))?;
            inputs.push(Input {
                seq,
                label: None,
                path: p.clone(),
            });
        }
    }
    Ok((inputs, issues))
}

fn summarize(records: &[Record]) -> Summary {
    let mut labels: Vec<&str> = Vec::new();
    for r in records {
        if let Some(l) = &r.label {
            if !labels.contains(&l.as_str()) {
                labels.push(l);
            }
        }
    }
    let judged: Vec<&Record> = records.iter().filter(|r| r.correct.is_some()).collect();
    let correct = judged.iter().filter(|r| r.correct == Some(true)).count();
    let per_class = labels
        .iter()
        .map(|&l| {
            let mine: Vec<_> = judged.iter().filter(|r| r.label.as_deref() == Some(l)).collect();
            let c = mine.iter().filter(|r| r.correct == Some(true)).count();
            ClassTally {
                label: l.to_owned(),
                total: mine.len(),
                correct: c,
                accuracy: if mine.is_empty() { 0.0 } else { c as f64 / mine.len() as f64 },
            }
        })
        .collect();
    Summary {
        items: records.len(),
        classified: records.iter().filter(|r| r.error.is_none()).count(),
        labeled: records.iter().filter(|r| r.label.is_some()).count(),
        correct,
        accuracy: (!judged.is_empty()).then(|| correct as f64 / judged.len() as f64),
        per_class,
    }
}

pub fn classify(cfg: &RunConfig, args: ClassifyArgs) -> anyhow::Result<()> {
    let bank_path = path_or_config(args.bank, &cfg.bank, "bank")?;
    if args.inputs.is_empty() {
        return Err(usage("no input files given"));
    }
    let bank = io::read_bank(&bank_path).with_context(|| format!("reading {}", bank_path.display()))?;
    let (inputs, issues) = gather_inputs(&args.inputs)?;
    if inputs.is_empty() {
        return Err(usage("inputs contain no feature files"));
    }
    if bank.config.samples != cfg.samples {
        bail!(
            "bank was built with {} frames per TE feature but the config uses {}",
            bank.config.samples,
            cfg.samples
        );
    }
    for input in &inputs {
        let te_dim = input.seq.dim() * cfg.samples;
        if te_dim != bank.te_dim() {
            bail!(
                "{}: feature dimension {} gives TE dimension {te_dim}, bank expects {}",
                input.path.display(),
                input.seq.dim(),
                bank.te_dim()
            );
        }
    }
    let params = cfg.classify_params();
    let records: Vec<Record> = inputs
        .par_iter()
        .map(|input| {
            let result = select_view(&input.seq, cfg).and_then(|v| classify_one(&bank, &v, &params));
            let (predicted, scores, error) = match result {
                Ok(r) => (
                    Some(r.predicted_label),
                    r.class_scores
                        .into_iter()
                        .map(|(label, score)| Score { label, score })
                        .collect(),
                    None,
                ),
                Err(e) => (None, Vec::new(), Some(e.to_string())),
            };
            Record {
                id: input.seq.id().to_owned(),
                path: input.path.display().to_string(),
                correct: match (&input.label, &predicted) {
                    (Some(l), Some(p)) => Some(l == p),
                    _ => None,
                },
                label: input.label.clone(),
                predicted,
                scores,
                error,
            }
        })
        .collect();
    let summary = summarize(&records);
    emit(&ClassifyReport {
        config: cfg,
        bank: bank_path.display().to_string(),
        records,
        summary,
        load_issues: issue_records(&issues),
    })
}

#[derive(Args, Debug)]
pub struct AttnCompareArgs {
    /// Input feature file.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Attention weight file (RTWA).
    #[arg(long, value_name = "FILE", conflicts_with = "attn_seed")]
    weights: Option<PathBuf>,
    /// Draw random weights with this seed (default: `attn_seed` from the config).
    #[arg(long, value_name = "N")]
    attn_seed: Option<u64>,
    /// Save the seeded random weights as an RTWA file.
    #[arg(long, value_name = "FILE", conflicts_with = "weights")]
    save_weights: Option<PathBuf>,
    /// Use the most similar subspace of this bank as the reference.
    #[arg(long, value_name = "FILE")]
    bank: Option<PathBuf>,
    /// Write all patterns as CSV: RTW patterns first, then heads.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct WeightsInfo {
    source: WeightSource,
    heads: usize,
    d_model: usize,
    d_k: usize,
    d_v: usize,
}

#[derive(Serialize)]
struct AttnReport<'a> {
    config: &'a RunConfig,
    input: String,
    input_id: String,
    input_frames: usize,
    view_start: usize,
    view_frames: usize,
    weights: WeightsInfo,
    reference: ReferenceChoice,
    canonical_patterns: usize,
    head_patterns: usize,
    kappas: Vec<f64>,
    pairs: Vec<MatchedPair>,
    mean_similarity: f64,
    similarities: Vec<Vec<f64>>,
    unsampled_frames: Vec<usize>,
    csv: Option<String>,
}

pub fn attn_compare(cfg: &RunConfig, args: AttnCompareArgs) -> anyhow::Result<()> {
    let seq = io::read_features(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let weights = match &args.weights {
        Some(p) => io::read_weights(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let seed = args.attn_seed.unwrap_or(cfg.attn_seed);
            SelfAttentionConfig::seeded_random(cfg.heads, seq.dim(), cfg.d_k, cfg.d_v, seed)?
        }
    };
    if let Some(p) = &args.save_weights {
        io::write_weights(p, &weights).with_context(|| format!("writing {}", p.display()))?;
    }
    if weights.d_model != seq.dim() {
        bail!(
            "weights expect d_model {} but {} has dimension {}",
            weights.d_model,
            args.input.display(),
            seq.dim()
        );
    }
    let bank = match &args.bank {
        Some(p) => Some(io::read_bank(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let cmp = compare_attention(&seq, cfg, &weights, bank.as_ref())?;
    if !cmp.unsampled_frames.is_empty() {
        eprintln!(
            "warning: frames {:?} were never sampled; their RTW weight is zero",
            cmp.unsampled_frames
        );
    }
    if let Some(p) = &args.csv {
        let f = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        write_patterns_csv(std::io::BufWriter::new(f), &cmp.all_patterns())?;
    }
    emit(&AttnReport {
        config: cfg,
        input: args.input.display().to_string(),
        input_id: cmp.input_id,
        input_frames: cmp.input_frames,
        view_start: cmp.view_start,
        view_frames: cmp.view_frames,
        weights: WeightsInfo {
            source: weights.source,
            heads: weights.head_count(),
            d_model: weights.d_model,
            d_k: weights.d_k,
            d_v: weights.d_v,
        },
        reference: cmp.reference,
        canonical_patterns: cmp.rtw_patterns.len(),
        head_patterns: cmp.head_patterns.len(),
        kappas: cmp.kappas,
        pairs: cmp.report.pairs,
        mean_similarity: cmp.report.mean_similarity,
        similarities: cmp.report.similarities,
        unsampled_frames: cmp.unsampled_frames,
        csv: args.csv.map(|p| p.display().to_string()),
    })
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory; receives train/ and test/.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Prototype length in frames.
    #[arg(long, default_value_t = 40)]
    length: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    warp: f64,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Training sequences per class.
    #[arg(long, default_value_t = 20)]
    train: usize,
    /// Test sequences per class.
    #[arg(long, default_value_t = 20)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct SynthReport {
    spec: SynthSpec,
    max_prototype_similarity: f64,
    train_dir: String,
    train_files: usize,
    test_dir: String,
    test_files: usize,
}

pub fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec = SynthSpec {
        n_classes: args.classes,
        prototype_length: args.length,
        d_model: args.dim,
        warp_strength: args.warp,
        noise_sigma: args.noise,
        train_per_class: args.train,
        test_per_class: args.test,
        seed: args.seed,
    };
    if let Err(e) = spec.validate() {
        return Err(usage(e.to_string()));
    }
    let ds = generate_dataset(&spec)?;
    let (train_dir, test_dir) = (args.out.join("train"), args.out.join("test"));
    io::write_labeled_dir(&train_dir, &ds.train)?;
    io::write_labeled_dir(&test_dir, &ds.test)?;
    emit(&SynthReport {
        max_prototype_similarity: max_prototype_similarity(&ds.prototypes),
        train_dir: train_dir.display().to_string(),
        train_files: ds.train.len(),
        test_dir: test_dir.display().to_string(),
        test_files: ds.test.len(),
        spec,
    })
}
