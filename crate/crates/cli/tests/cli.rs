use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rtw_core::io::{read_bank, write_features};
use rtw_core::FeatureSequence;
use serde_json::Value;

fn rtw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtw"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = rtw(dir, args);
    assert!(
        out.status.success(),
        "rtw {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn wave(id: &str, n: usize, d: usize, phase: f64) -> FeatureSequence {
    let frames = (0..n)
        .map(|t| (0..d).map(|k| ((t as f64) * 0.3 + phase * (k + 1) as f64).sin()).collect())
        .collect();
    FeatureSequence::new(id, frames).unwrap()
}

fn put(dir: &Path, label: &str, seq: &FeatureSequence) {
    let class = dir.join(label);
    fs::create_dir_all(&class).unwrap();
    write_features(&class.join(format!("{}.rtwf", seq.id())), seq).unwrap();
}

#[test]
fn one_class_bank() {
    let tmp = tempfile::tempdir().unwrap();
    put(&tmp.path().join("data"), "only", &wave("a", 30, 3, 0.0));
    let report = ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "b.rtwb"]);
    assert_eq!(report["classes"][0]["label"], "only");
    assert_eq!(report["subspace_count"], 1);
    assert_eq!(report["te_dim"], 3 * 16);
    let bank = read_bank(&tmp.path().join("b.rtwb")).unwrap();
    assert_eq!(bank.classes.len(), 1);
}

#[test]
fn grouping_three_files_in_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    for (i, p) in [0.1, 0.7, 1.3].into_iter().enumerate() {
        put(&data, "c", &wave(&format!("s{i}"), 25, 2, p));
    }
    let report = ok_json(
        tmp.path(),
        &["--set", "group_size=2", "build-bank", "--data", "data", "--out", "b.rtwb"],
    );
    assert_eq!(report["classes"][0]["sequences"], 3);
    assert_eq!(report["classes"][0]["subspaces"], 2);
    let bank = read_bank(&tmp.path().join("b.rtwb")).unwrap();
    // Groups of 2 and 1 sequences pool 20 and 10 TE features.
    let counts: Vec<usize> = bank.classes[0].subspaces.iter().map(|s| s.te_count()).collect();
    assert_eq!(counts, vec![20, 10]);
}

#[test]
fn corrupt_files_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    put(&data, "good", &wave("g", 30, 2, 0.0));
    put(&data, "mixed", &wave("m", 30, 2, 1.0));
    fs::write(data.join("mixed/broken.rtwf"), b"RTWF\x01\x00").unwrap();
    let report = ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "b.rtwb"]);
    let issues = report["load_issues"].as_array().unwrap();
    assert_eq!(issues.len(), 1);
    assert!(issues[0]["path"].as_str().unwrap().ends_with("broken.rtwf"));

    // A class whose only file is unreadable leaves that class empty.
    fs::create_dir_all(data.join("empty")).unwrap();
    fs::write(data.join("empty/x.rtwf"), b"nope").unwrap();
    let out = rtw(tmp.path(), &["build-bank", "--data", "data", "--out", "c.rtwb"]);
    assert!(!out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["empty_classes"][0], "empty");
    assert!(!tmp.path().join("c.rtwb").exists());
}

#[test]
fn short_sequences_are_skipped() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    put(&data, "c", &wave("long", 30, 2, 0.0));
    put(&data, "c", &wave("short", 8, 2, 0.0));
    let report = ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "b.rtwb"]);
    let skipped = report["skipped"].as_array().unwrap();
    assert_eq!(skipped.len(), 1);
    assert_eq!(skipped[0]["id"], "short");
    assert_eq!(report["classes"][0]["sequences"], 1);
}

#[test]
fn bank_rebuild_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    put(&data, "a", &wave("a0", 30, 2, 0.0));
    put(&data, "b", &wave("b0", 30, 2, 2.0));
    ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "1.rtwb"]);
    ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "2.rtwb"]);
    assert_eq!(
        fs::read(tmp.path().join("1.rtwb")).unwrap(),
        fs::read(tmp.path().join("2.rtwb")).unwrap()
    );
}

#[test]
fn classify_self_match_and_unlabeled_input() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    put(&data, "a", &wave("a0", 30, 3, 0.0));
    put(&data, "b", &wave("b0", 30, 3, 2.0));
    ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "b.rtwb"]);

    let labeled = ok_json(tmp.path(), &["classify", "--bank", "b.rtwb", "data"]);
    assert_eq!(labeled["summary"]["accuracy"], 1.0);
    assert_eq!(labeled["records"][0]["predicted"], "a");
    assert_eq!(labeled["records"][1]["predicted"], "b");
    let top = labeled["records"][0]["scores"][0]["score"].as_f64().unwrap();
    assert!((top - 1.0).abs() < 1e-9);

    let single = ok_json(tmp.path(), &["classify", "--bank", "b.rtwb", "data/b/b0.rtwf"]);
    assert_eq!(single["records"][0]["label"], Value::Null);
    assert_eq!(single["records"][0]["predicted"], "b");
    assert_eq!(single["summary"]["accuracy"], Value::Null);
}

#[test]
fn classify_rejects_bad_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    put(&data, "a", &wave("a0", 30, 3, 0.0));
    ok_json(tmp.path(), &["build-bank", "--data", "data", "--out", "b.rtwb"]);

    let out = rtw(tmp.path(), &["classify", "--bank", "b.rtwb"]);
    assert_eq!(out.status.code(), Some(2));

    write_features(&tmp.path().join("wide.rtwf"), &wave("w", 30, 4, 0.0)).unwrap();
    let out = rtw(tmp.path(), &["classify", "--bank", "b.rtwb", "wide.rtwf"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bank expects 48"), "{err}");

    let out = rtw(tmp.path(), &["--set", "samples=8", "classify", "--bank", "b.rtwb", "data"]);
    assert_eq!(out.status.code(), Some(1));

    let out = rtw(tmp.path(), &["build-bank", "--out", "x.rtwb"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_then_preset_then_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    put(&data, "a", &wave("a0", 30, 2, 0.0));
    fs::write(tmp.path().join("run.cfg"), "te_count = 7\ndata_dir = data\nbank = cfg.rtwb\n").unwrap();
    let report = ok_json(tmp.path(), &["--config", "run.cfg", "--set", "ref_dim=3", "build-bank"]);
    assert_eq!(report["config"]["te_count"], 7);
    assert_eq!(report["config"]["ref_dim"], 3);
    assert_eq!(report["bank"], "cfg.rtwb");
    assert_eq!(report["classes"][0]["dims"][0], 3);

    // --preset replaces the file's preset; the file's other keys still apply.
    let report = ok_json(
        tmp.path(),
        &["--config", "run.cfg", "--preset", "paper-4.3", "build-bank", "--data", "data", "--out", "p.rtwb"],
    );
    assert_eq!(report["config"]["preset"], "paper-4.3");
    assert_eq!(report["config"]["te_count"], 7);
    assert_eq!(report["config"]["samples"], 8);

    let out = rtw(tmp.path(), &["--set", "nonsense=1", "build-bank"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn attn_compare_csv_and_weight_files() {
    let tmp = tempfile::tempdir().unwrap();
    write_features(&tmp.path().join("in.rtwf"), &wave("in", 40, 4, 0.3)).unwrap();
    let args = ["--preset", "paper-4.3", "attn-compare", "--input", "in.rtwf"];

    let mut a = args.to_vec();
    a.extend(["--attn-seed", "4", "--save-weights", "w.rtwa", "--csv", "p.csv"]);
    let seeded = ok_json(tmp.path(), &a);
    let (k, h) = (seeded["canonical_patterns"].as_u64().unwrap(), seeded["head_patterns"].as_u64().unwrap());
    assert_eq!((k, h), (10, 10));
    assert_eq!((seeded["view_start"].clone(), seeded["view_frames"].clone()), (12.into(), 16.into()));

    let csv = fs::read_to_string(tmp.path().join("p.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len() as u64, k + h);
    assert!(rows[0].starts_with("rtw_canonical,0,"));
    assert!(rows[10].starts_with("self_head,0,"));
    assert!(rows.iter().all(|r| r.split(',').count() == 2 + 16));

    let mut b = args.to_vec();
    b.extend(["--weights", "w.rtwa"]);
    let from_file = ok_json(tmp.path(), &b);
    assert_eq!(from_file["similarities"], seeded["similarities"]);
    assert_eq!(from_file["weights"]["source"], "file");

    let mut c = args.to_vec();
    c.extend(["--weights", "w.rtwa", "--attn-seed", "1"]);
    assert_eq!(rtw(tmp.path(), &c).status.code(), Some(2));
}

#[test]
fn attn_compare_needs_enough_heads() {
    let tmp = tempfile::tempdir().unwrap();
    write_features(&tmp.path().join("in.rtwf"), &wave("in", 20, 2, 0.3)).unwrap();
    let out = rtw(
        tmp.path(),
        &["--preset", "paper-4.3", "--set", "heads=4", "attn-compare", "--input", "in.rtwf"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("4 heads"));
}

#[test]
fn synth_writes_labeled_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let report = ok_json(
        tmp.path(),
        &["synth", "--out", "ds", "--classes", "1", "--dim", "3", "--train", "2", "--test", "1"],
    );
    assert_eq!(report["max_prototype_similarity"], 0.0);
    assert_eq!(report["train_files"], 2);
    assert!(tmp.path().join("ds/train/class_00/train_class_00_0001.rtwf").is_file());
    assert!(tmp.path().join("ds/test/class_00/test_class_00_0000.rtwf").is_file());

    let out = rtw(tmp.path(), &["synth", "--out", "bad", "--warp", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}
