use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rbig(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbig"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ring(dir: &Path, n: &str) {
    let out = rbig(
        dir,
        &[
            "make-toy",
            "--kind",
            "ring",
            "--n",
            n,
            "--seed",
            "1",
            "--out-prefix",
            "ring",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ring_toy_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    ring(dir.path(), "5000");
    let data = fs::read_to_string(dir.path().join("ring_data.csv")).unwrap();
    assert_eq!(data.lines().count(), 5001);
    let mask = fs::read_to_string(dir.path().join("ring_mask.csv")).unwrap();
    assert_eq!(mask.lines().next(), Some("label"));
    let positives = mask
        .lines()
        .skip(1)
        .filter(|l| l.trim() != "0" && l.trim() != "0.0")
        .count();
    assert_eq!(positives, 50);
}

#[test]
fn change_pair_writes_three_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbig(
        dir.path(),
        &[
            "make-toy",
            "--kind",
            "cd-pair",
            "--width",
            "30",
            "--height",
            "20",
            "--bands",
            "3",
            "--out-prefix",
            "cd",
        ],
    );
    assert_eq!(code(&out), 0);
    for name in ["cd_before.mbrs", "cd_after.mbrs", "cd_mask.mbrs"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let out = rbig(
        dir.path(),
        &[
            "detect-change",
            "--before",
            "cd_before.mbrs",
            "--after",
            "cd_after.mbrs",
            "--out",
            "s.mbrs",
            "--method",
            "rx",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = rbig(
        dir.path(),
        &[
            "eval",
            "--scores",
            "s.mbrs",
            "--mask",
            "cd_mask.mbrs",
            "--bootstrap",
            "0",
            "--out-prefix",
            "e",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_report_names_the_method() {
    let dir = tempfile::tempdir().unwrap();
    ring(dir.path(), "500");
    let out = rbig(
        dir.path(),
        &[
            "fit",
            "--input",
            "ring_data.csv",
            "--model-out",
            "m.bin",
            "--method",
            "rx",
        ],
    );
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["method"], "rx");
    assert!(dir.path().join("m.bin").exists());
    assert!(dir.path().join("m.bin.json").exists());
}

#[test]
fn eval_on_four_samples() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.csv"), "score\n0.1\n0.4\n0.35\n0.8\n").unwrap();
    fs::write(dir.path().join("m.csv"), "label\n0\n0\n1\n1\n").unwrap();
    let out = rbig(
        dir.path(),
        &[
            "eval",
            "--scores",
            "s.csv",
            "--mask",
            "m.csv",
            "--bootstrap",
            "0",
            "--out-prefix",
            "e",
        ],
    );
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["auc"], 0.75);
    assert!(summary.get("bootstrap").is_none());
    let roc = fs::read_to_string(dir.path().join("e_roc.csv")).unwrap();
    assert_eq!(roc.lines().next(), Some("threshold,fpr,tpr"));
    assert!(dir.path().join("e_pr.csv").exists());

    let out = rbig(
        dir.path(),
        &[
            "eval",
            "--scores",
            "s.csv",
            "--mask",
            "m.csv",
            "--bootstrap",
            "50",
            "--out-prefix",
            "b",
        ],
    );
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["bootstrap"]["runs"], 50);
}

#[test]
fn synth_zero_samples_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    ring(dir.path(), "500");
    assert_eq!(
        code(&rbig(
            dir.path(),
            &["fit", "--input", "ring_data.csv", "--model-out", "m.bin"]
        )),
        0
    );
    let out = rbig(
        dir.path(),
        &["synth", "--model", "m.bin", "--n", "0", "--out", "s.csv"],
    );
    assert_eq!(code(&out), 0);
    assert_eq!(
        fs::read_to_string(dir.path().join("s.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn usage_and_io_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = rbig(
        dir.path(),
        &[
            "score", "--model", "nope.bin", "--input", "x.csv", "--out", "s.csv",
        ],
    );
    assert_eq!(code(&missing), 2);
    let bad_flag = rbig(
        dir.path(),
        &[
            "fit",
            "--input",
            "x.csv",
            "--model-out",
            "m",
            "--method",
            "svm",
        ],
    );
    assert_eq!(code(&bad_flag), 2);

    fs::write(
        dir.path().join("junk.bin"),
        b"RBIG\x01\x00\x00\x00\x09\x00\x00\x00",
    )
    .unwrap();
    ring(dir.path(), "200");
    let unknown_kind = rbig(
        dir.path(),
        &[
            "score",
            "--model",
            "junk.bin",
            "--input",
            "ring_data.csv",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(code(&unknown_kind), 2);
}

#[test]
fn domain_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.csv"), "a,b\n0,1\n1,0\n2,2\n3,1\n1,3\n2,0\n0,2\n3,3\n1,1\n2,3\n3,0\n0,3\n1,2\n2,1\n3,2\n0,0\n1,0\n2,2\n3,1\n1,3\n2,0\n0,2\n3,3\n1,1\n").unwrap();
    let hybrid = rbig(
        dir.path(),
        &[
            "fit",
            "--input",
            "tiny.csv",
            "--model-out",
            "m.bin",
            "--method",
            "hybrid",
            "--retain-fraction",
            "0.5",
        ],
    );
    assert_eq!(code(&hybrid), 3);

    fs::write(dir.path().join("s.csv"), "score\n0.1\n0.4\n0.35\n").unwrap();
    fs::write(dir.path().join("m.csv"), "label\n1\n1\n1\n").unwrap();
    let single = rbig(
        dir.path(),
        &[
            "eval",
            "--scores",
            "s.csv",
            "--mask",
            "m.csv",
            "--out-prefix",
            "e",
        ],
    );
    assert_eq!(code(&single), 3);

    ring(dir.path(), "500");
    assert_eq!(
        code(&rbig(
            dir.path(),
            &["fit", "--input", "ring_data.csv", "--model-out", "m2.bin"]
        )),
        0
    );
    fs::write(dir.path().join("three.csv"), "a,b,c\n0,0,0\n1,1,1\n").unwrap();
    let mismatch = rbig(
        dir.path(),
        &[
            "score",
            "--model",
            "m2.bin",
            "--input",
            "three.csv",
            "--out",
            "o.csv",
        ],
    );
    assert_eq!(code(&mismatch), 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let run = |dir: &Path| {
        ring(dir, "2000");
        for args in [
            &[
                "fit",
                "--input",
                "ring_data.csv",
                "--model-out",
                "m.bin",
                "--seed",
                "4",
            ][..],
            &[
                "score",
                "--model",
                "m.bin",
                "--input",
                "ring_data.csv",
                "--out",
                "s.csv",
            ],
            &[
                "eval",
                "--scores",
                "s.csv",
                "--mask",
                "ring_mask.csv",
                "--bootstrap",
                "100",
                "--seed",
                "5",
                "--out-prefix",
                "e",
            ],
        ] {
            assert_eq!(code(&rbig(dir, args)), 0);
        }
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path());
    run(b.path());
    for name in [
        "m.bin",
        "m.bin.json",
        "s.csv",
        "e_roc.csv",
        "e_pr.csv",
        "e_summary.json",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}
