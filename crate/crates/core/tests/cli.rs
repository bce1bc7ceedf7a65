use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hcoh::codec::BinaryCodeSet;
use hcoh::data::write_dense;
use hcoh::{evaluate, BinaryCode, Dataset};

fn hcoh(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcoh"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// Four separated classes in 6 dims, written as HCOHFEAT plus labels.
fn fixture(dir: &Path) {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..240u32 {
        let c = i % 4;
        for k in 0..6u32 {
            let center = if k == c { 4.0 } else { 0.0 };
            let wobble = ((i * 7 + k * 13) % 17) as f32 / 17.0 - 0.5;
            features.push(center + wobble);
        }
        labels.push(c);
    }
    let ds = Dataset::new("fixture", 6, features, labels).unwrap();
    write_dense(&ds, &dir.join("f.bin"), &dir.join("l.bin")).unwrap();
}

const TRAIN: &[&str] = &[
    "train", "--dataset", "dense", "--features", "f.bin", "--labels", "l.bin", "--bits", "8",
    "--test-per-class", "10", "--train-size", "150", "--k-prec", "20", "--milestones", "every:50",
];

#[test]
fn train_encode_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    let mut args = TRAIN.to_vec();
    args.extend(["--checkpoint", "m.hcoh", "--metrics", "m.jsonl", "--codes-dir", "codes"]);
    ok(&hcoh(&args, dir));

    let metrics = fs::read_to_string(dir.join("m.jsonl")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 4, "{metrics}");
    assert!(lines[0].contains("\"kind\":\"checkpoint\"") && lines[0].contains("\"instances_seen\":50"));
    assert!(lines[3].contains("\"kind\":\"summary\"") && lines[3].contains("\"codeword_order\":8"));

    // Re-encoding the features with the checkpoint reproduces the stored codes.
    ok(&hcoh(&["encode", "--checkpoint", "m.hcoh", "--features", "f.bin", "--labels", "l.bin", "--out", "all.codes"], dir));
    let all = BinaryCodeSet::read(&dir.join("all.codes")).unwrap();
    assert_eq!(all.len(), 240);
    assert_eq!(all.bits(), 8);
    let test = BinaryCodeSet::read(&dir.join("codes/test.codes")).unwrap();
    assert_eq!(test.len(), 40);
    for i in 0..test.len() {
        assert!((0..all.len()).any(|j| all.code_words(j) == test.code_words(i) && all.labels()[j] == test.labels()[i]));
    }

    let out = hcoh(
        &["evaluate", "--queries", "codes/test.codes", "--database", "codes/retrieval.codes", "--k-prec", "20", "--k-map", "10"],
        dir,
    );
    ok(&out);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let db = BinaryCodeSet::read(&dir.join("codes/retrieval.codes")).unwrap();
    let report = evaluate(&test, &db, 20, Some(10)).unwrap();
    assert_eq!(json["map"].as_f64().unwrap(), report.map);
    assert_eq!(json["n_database"].as_u64().unwrap(), 200);
    assert!(report.map > 0.9, "map {}", report.map);

    let out = hcoh(&["curve", "--metrics", "m.jsonl"], dir);
    ok(&out);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "repeat,bits,instances_seen,map,precision_at_k");
    assert_eq!(csv.lines().count(), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("AUC"));
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    for tag in ["a", "b"] {
        let mut args = TRAIN.to_vec();
        let ck = format!("{tag}.hcoh");
        let me = format!("{tag}.jsonl");
        args.extend(["--seed", "9", "--checkpoint", &ck, "--metrics", &me]);
        ok(&hcoh(&args, dir));
    }
    assert_eq!(fs::read(dir.join("a.hcoh")).unwrap(), fs::read(dir.join("b.hcoh")).unwrap());
    assert_eq!(fs::read(dir.join("a.jsonl")).unwrap(), fs::read(dir.join("b.jsonl")).unwrap());
}

#[test]
fn repeats_write_separate_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    let mut args = TRAIN.to_vec();
    args.extend(["--repeats", "2", "--checkpoint", "m.hcoh", "--metrics", "m.jsonl"]);
    ok(&hcoh(&args, dir));
    assert!(dir.join("m.hcoh").exists() && dir.join("m.hcoh.r1").exists());
    let metrics = fs::read_to_string(dir.join("m.jsonl")).unwrap();
    assert_eq!(metrics.matches("\"kind\":\"summary\"").count(), 2);
}

#[test]
fn toy_average_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let code = |b: &[bool]| BinaryCode::from_bools(b).unwrap();
    let q = BinaryCodeSet::from_codes(&[code(&[false, false])], vec![0]).unwrap();
    // Distances 0, 1, 2 with relevance 1, 0, 1.
    let db = BinaryCodeSet::from_codes(&[code(&[false, false]), code(&[true, false]), code(&[true, true])], vec![0, 1, 0]).unwrap();
    q.write(&dir.join("q.codes")).unwrap();
    db.write(&dir.join("db.codes")).unwrap();
    let out = hcoh(&["evaluate", "--queries", "q.codes", "--database", "db.codes", "--k-prec", "2"], dir);
    ok(&out);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((json["map"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-15);
    assert_eq!(json["precision_at_k"].as_f64().unwrap(), 0.5);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);

    // Config errors.
    let out = hcoh(&["train", "--dataset", "dense"], dir);
    assert_eq!(out.status.code(), Some(2));
    let mut args = TRAIN.to_vec();
    args.extend(["--eta", "-1"]);
    assert_eq!(hcoh(&args, dir).status.code(), Some(2));
    // Four classes cannot fit an order-2 codebook.
    let mut args: Vec<&str> = TRAIN.iter().map(|&a| if a == "8" { "2" } else { a }).collect();
    args.extend(["--max-labels", "2"]);
    let out = hcoh(&args, dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("codebook exhausted"));

    // Data errors.
    let mut args = TRAIN.to_vec();
    args.extend(["--checkpoint", "m.hcoh"]);
    ok(&hcoh(&args, dir));
    let mut bytes = fs::read(dir.join("m.hcoh")).unwrap();
    bytes.truncate(bytes.len() - 5);
    fs::write(dir.join("bad.hcoh"), &bytes).unwrap();
    let out = hcoh(&["encode", "--checkpoint", "bad.hcoh", "--features", "f.bin", "--out", "x.codes"], dir);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.join("x.codes").exists());
    let out = hcoh(&["train", "--dataset", "mnist", "--data-dir", "missing"], dir);
    assert_eq!(out.status.code(), Some(3));

    // Numeric failure: the first update overflows with a huge learning rate.
    let ds = Dataset::new("big", 2, vec![3.0, -3.0, -3.0, 3.0], vec![0, 1]).unwrap();
    write_dense(&ds, &dir.join("big.bin"), &dir.join("bigl.bin")).unwrap();
    let out = hcoh(
        &["train", "--dataset", "dense", "--features", "big.bin", "--labels", "bigl.bin", "--bits", "4", "--eta", "1e308",
          "--test-per-class", "0", "--train-size", "2"],
        dir,
    );
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}
