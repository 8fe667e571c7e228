use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vessel-scales"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const Y_SPEC: &str = r#"{
  "dims": [48, 32, 48],
  "spacing_mm": [1.0, 1.0, 1.0],
  "segments": [
    {"start": [24, 16, 6], "end": [24, 16, 24], "radius_mm": 4.5, "id": 1},
    {"start": [24, 16, 24], "end": [10, 16, 42], "radius_mm": 1.5, "id": 2},
    {"start": [24, 16, 24], "end": [38, 16, 42], "radius_mm": 1.5, "id": 3}
  ]
}"#;

/// Writes the Y spec and synthesizes it, returning the mask path.
fn synth(dir: &Path, format: &str) -> PathBuf {
    let spec = dir.join("y.json");
    fs::write(&spec, Y_SPEC).unwrap();
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--spec",
        &s(&spec),
        "--out-dir",
        &s(&out),
        "--format",
        format,
    ]);
    out.join(if format == "raw" {
        "y_mask.raw"
    } else {
        "y_mask.nrrd"
    })
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn strings(v: &Value) -> BTreeSet<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn synth_and_decompose_outputs_match_manifests() {
    for format in ["nrrd", "raw"] {
        let tmp = tempfile::tempdir().unwrap();
        let mask = synth(tmp.path(), format);
        let synth_dir = mask.parent().unwrap();
        let mut expected = strings(&manifest(synth_dir)["outputs"]);
        expected.insert("manifest.json".into());
        assert_eq!(listing(synth_dir), expected);

        let out = tmp.path().join("dec");
        ok(&[
            "decompose",
            "--input",
            &s(&mask),
            "--out-dir",
            &s(&out),
            "--format",
            format,
        ]);
        let m = manifest(&out);
        let vol = &m["volumes"][0];
        assert_eq!(vol["n_branches"], 3);
        assert_eq!(m["parameters"]["m"], 8);
        let mut expected = strings(&vol["outputs"]);
        expected.insert("manifest.json".into());
        assert_eq!(listing(&out), expected);
        assert!(expected.contains("y_mask_branches.csv"));
    }
}

#[test]
fn evaluate_identical_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let mask = synth(tmp.path(), "nrrd");
    let out = ok(&["evaluate", "--gt", &s(&mask), "--pred", &s(&mask)]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap().trim(),
        r#"{"dsc":1.0,"jacc":1.0,"cldsc":1.0,"hd_mm":0.0}"#
    );
    let out = ok(&[
        "evaluate",
        "--gt",
        &s(&mask),
        "--pred",
        &s(&mask),
        "--csv",
        "-",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("gt,pred,dsc,jacc,cldsc,hd_mm"));
    assert!(lines.next().unwrap().ends_with(",1,1,1,0"));
}

#[test]
fn stats_reads_tables_and_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let mask = synth(tmp.path(), "nrrd");
    let table = mask.parent().unwrap().join("y_table.csv");
    let out = ok(&["stats", "--input", &s(&table), &s(&mask)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "volume,n_b,min,q1,median,q3,max");
    assert!(lines[1].starts_with("y_table,3,1.5,"));
    assert!(lines[2].starts_with("y_mask,3,"));
}

#[test]
fn loss_command() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("emb.json");
    fs::write(
        &input,
        r#"{"tau": 1.0, "vectors": [[1, 0], [1, 0], [0, 1]], "scales": [1, 1, 2]}"#,
    )
    .unwrap();
    let out = ok(&["loss", "--input", &s(&input), "--gradient"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let term = (1.0 + (-1f64).exp()).ln();
    assert!((v["per_anchor"][0].as_f64().unwrap() - term).abs() < 1e-12);
    assert_eq!(v["per_anchor"][2], Value::Null);
    assert_eq!(v["skipped_anchors"], serde_json::json!([2]));
    assert_eq!(v["gradient"].as_array().unwrap().len(), 3);
}

#[test]
fn failures_exit_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("never");
    let missing = tmp.path().join("missing.nrrd");

    let out = cli(&[
        "decompose",
        "--input",
        &s(&missing),
        "--out-dir",
        &s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.starts_with("error: ") && err.contains("missing.nrrd"),
        "{err}"
    );
    assert!(!out_dir.exists());

    let mask = synth(tmp.path(), "nrrd");
    let labels = mask.with_file_name("y_labels.nrrd");
    let out = cli(&[
        "decompose",
        "--input",
        &s(&labels),
        "--out-dir",
        &s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());

    let usage: [&[&str]; 4] = [
        &[
            "decompose",
            "--input",
            &s(&mask),
            "--out-dir",
            &s(&out_dir),
            "--jobs",
            "0",
        ],
        &[
            "decompose",
            "--input",
            &s(&mask),
            "--out-dir",
            &s(&out_dir),
            "--scales",
            "1",
        ],
        &[
            "evaluate",
            "--gt",
            &s(&mask),
            &s(&mask),
            "--pred",
            &s(&mask),
        ],
        &["frobnicate"],
    ];
    for args in usage {
        assert_eq!(cli(args).status.code(), Some(2), "{args:?}");
    }
    assert!(!out_dir.exists());
}
