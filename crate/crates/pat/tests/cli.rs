use std::path::Path;
use std::process::{Command, Output};

use pat::report::RunManifest;
use pat::table_io::{read_predictions, read_table};

fn pat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pat"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pat(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    pat(dir, args).status.code().unwrap()
}

const SMALL: &str = "layers = 1\nheads = 2\nd_head = 4\nepochs = 3\nbatch_size = 32\n";

fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("small.cfg"), SMALL).unwrap();
    ok(p, &["synth", "--rows", "40", "--out-dir", "syn", "--seed", "11"]);
    ok(p, &["profile", "--in", "syn/dirty.csv", "--out", "hp.cfg"]);
    dir
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(p, &["frobnicate"]), 1);
    assert_eq!(code(p, &["profile", "--in", "x.csv"]), 1);
    assert_eq!(code(p, &["profile", "--in", "x.csv", "--out", "y", "--bogus"]), 1);
    assert_eq!(
        code(
            p,
            &["train", "--in", "x.csv", "--out", "c", "--mode", "tiny", "--labels", "m.csv"]
        ),
        1
    );
    assert_eq!(code(p, &["--threads", "0", "synth", "--out-dir", "s"]), 1);
    assert_eq!(code(p, &["synth", "--out-dir", "s", "--kinds", "zz"]), 1);
    assert_eq!(code(p, &["--help"]), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(p, &["profile", "--in", "missing.csv", "--out", "hp.cfg"]), 2);
    std::fs::write(p.join("ragged.csv"), "a,b\n1\n").unwrap();
    assert_eq!(code(p, &["profile", "--in", "ragged.csv", "--out", "hp.cfg"]), 2);
    std::fs::write(p.join("bad.cfg"), "epochs = many\n").unwrap();
    assert_eq!(code(p, &["--config", "bad.cfg", "synth", "--out-dir", "s"]), 2);
}

#[test]
fn eval_identical_files_is_perfect() {
    let dir = prepared();
    let p = dir.path();
    let text = ok(
        p,
        &[
            "eval",
            "--pred",
            "syn/mask.csv",
            "--truth",
            "syn/mask.csv",
            "--json",
            "m.json",
        ],
    );
    assert!(text.contains("f1        1.0000"), "{text}");
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("m.json")).unwrap()).unwrap();
    assert_eq!(j["f1"], 1.0);
}

#[test]
fn profile_writes_numeric_config() {
    let dir = prepared();
    let text = std::fs::read_to_string(dir.path().join("hp.cfg")).unwrap();
    for key in ["d", "n", "d_c", "n_c"] {
        let line = text.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap();
        let v: usize = line.split(" = ").nth(1).unwrap().parse().unwrap();
        assert!(v >= 1);
    }
    assert!(dir.path().join("hp.cfg.manifest.json").exists());
}

#[test]
fn tokenize_is_thread_count_invariant() {
    let dir = prepared();
    let p = dir.path();
    ok(
        p,
        &["tokenize", "--in", "syn/dirty.csv", "--hp", "hp.cfg", "--out", "a.bin"],
    );
    ok(
        p,
        &[
            "--threads",
            "3",
            "tokenize",
            "--in",
            "syn/dirty.csv",
            "--hp",
            "hp.cfg",
            "--out",
            "b.bin",
        ],
    );
    assert_eq!(
        std::fs::read(p.join("a.bin")).unwrap(),
        std::fs::read(p.join("b.bin")).unwrap()
    );
}

#[test]
fn pipeline_is_deterministic_and_complete() {
    let dir = prepared();
    let p = dir.path();
    let train = |out: &str| {
        ok(
            p,
            &[
                "--config",
                "small.cfg",
                "--seed",
                "4",
                "train",
                "--in",
                "syn/dirty.csv",
                "--labels",
                "syn/mask.csv",
                "--hp",
                "hp.cfg",
                "--mode",
                "compact",
                "--out",
                out,
            ],
        )
    };
    let log = train("ck1");
    assert!(log.contains("mode compact"), "{log}");
    train("ck2");
    for f in [
        "params.bin",
        "manifest.txt",
        "history.csv",
        "split.csv",
        "train_state.bin",
    ] {
        assert_eq!(
            std::fs::read(p.join("ck1").join(f)).unwrap(),
            std::fs::read(p.join("ck2").join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
    let history = std::fs::read_to_string(p.join("ck1/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);

    ok(
        p,
        &[
            "detect",
            "--checkpoint",
            "ck1",
            "--in",
            "syn/dirty.csv",
            "--out",
            "p1.csv",
        ],
    );
    ok(
        p,
        &[
            "detect",
            "--checkpoint",
            "ck2",
            "--in",
            "syn/dirty.csv",
            "--out",
            "p2.csv",
        ],
    );
    assert_eq!(
        std::fs::read(p.join("p1.csv")).unwrap(),
        std::fs::read(p.join("p2.csv")).unwrap()
    );
    let table = read_table(&p.join("syn/dirty.csv")).unwrap();
    let preds = read_predictions(&p.join("p1.csv")).unwrap();
    assert_eq!(preds.len(), table.n_cells());
    assert!(preds.iter().all(|r| (0.5..=1.0).contains(&r.confidence)));

    let eval = ok(
        p,
        &[
            "eval",
            "--pred",
            "p1.csv",
            "--truth",
            "syn/mask.csv",
            "--split",
            "ck1/split.csv",
        ],
    );
    assert!(eval.contains("\"f1\""), "{eval}");

    let manifest = RunManifest::read(&p.join("ck1/run_manifest.json")).unwrap();
    assert_eq!(manifest.command, "train");
    assert_eq!(manifest.seed, 4);
    assert_eq!(manifest.config["layers"], "1");
    assert_eq!(manifest.inputs.len(), 4);
    assert!(manifest.inputs.iter().all(|d| d.sha256.len() == 64));
    let again = RunManifest::read(&p.join("ck2/run_manifest.json")).unwrap();
    assert_eq!(again.inputs, manifest.inputs);
    assert_eq!(again.outputs[0].sha256, manifest.outputs[0].sha256);
}

#[test]
fn detect_refuses_mismatched_lexicon() {
    let dir = prepared();
    let p = dir.path();
    ok(
        p,
        &[
            "--config",
            "small.cfg",
            "train",
            "--in",
            "syn/dirty.csv",
            "--labels",
            "syn/mask.csv",
            "--hp",
            "hp.cfg",
            "--mode",
            "compact",
            "--out",
            "ck",
            "--epochs",
            "1",
        ],
    );
    let hp = std::fs::read_to_string(p.join("hp.cfg")).unwrap();
    std::fs::write(p.join("hp_other.cfg"), hp.replace("d_c = ", "d_c = 1")).unwrap();
    ok(
        p,
        &[
            "tokenize",
            "--in",
            "syn/dirty.csv",
            "--hp",
            "hp_other.cfg",
            "--mode",
            "compact",
            "--out",
            "other.bin",
        ],
    );
    assert_eq!(
        code(
            p,
            &[
                "detect",
                "--checkpoint",
                "ck",
                "--in",
                "syn/dirty.csv",
                "--lexicon",
                "other.bin",
                "--out",
                "x.csv"
            ]
        ),
        1
    );
    ok(
        p,
        &[
            "tokenize",
            "--in",
            "syn/dirty.csv",
            "--hp",
            "hp.cfg",
            "--mode",
            "compact",
            "--out",
            "same.bin",
        ],
    );
    ok(
        p,
        &[
            "detect",
            "--checkpoint",
            "ck",
            "--in",
            "syn/dirty.csv",
            "--lexicon",
            "same.bin",
            "--out",
            "x.csv",
        ],
    );
    std::fs::write(
        p.join("renamed.csv"),
        std::fs::read_to_string(p.join("syn/dirty.csv"))
            .unwrap()
            .replacen("id", "key", 1),
    )
    .unwrap();
    assert_eq!(
        code(
            p,
            &["detect", "--checkpoint", "ck", "--in", "renamed.csv", "--out", "y.csv"]
        ),
        1
    );
}

#[test]
fn resume_continues_training() {
    let dir = prepared();
    let p = dir.path();
    let base = [
        "--config",
        "small.cfg",
        "train",
        "--in",
        "syn/dirty.csv",
        "--labels",
        "syn/mask.csv",
        "--hp",
        "hp.cfg",
        "--patience",
        "50",
        "--out",
    ];
    let with = |out: &str, extra: &[&str]| {
        let mut a: Vec<&str> = base.to_vec();
        a.push(out);
        a.extend_from_slice(extra);
        ok(p, &a)
    };
    with("full", &["--epochs", "6"]);
    with("part", &["--epochs", "6", "--pause-after", "3"]);
    let history = std::fs::read_to_string(p.join("part/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    with("part", &["--epochs", "6", "--resume"]);
    for f in ["params.bin", "train_state.bin", "history.csv"] {
        assert_eq!(
            std::fs::read(p.join("full").join(f)).unwrap(),
            std::fs::read(p.join("part").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn explain_writes_all_formats() {
    let dir = prepared();
    let p = dir.path();
    ok(
        p,
        &[
            "--config",
            "small.cfg",
            "train",
            "--in",
            "syn/dirty.csv",
            "--clean",
            "syn/clean.csv",
            "--out",
            "ck",
            "--epochs",
            "1",
        ],
    );
    ok(
        p,
        &[
            "explain",
            "--checkpoint",
            "ck",
            "--in",
            "syn/dirty.csv",
            "--cell",
            "0:1",
            "--cell",
            "3:2",
            "--out-dir",
            "ex",
        ],
    );
    for cell in ["0_1", "3_2"] {
        for ext in ["svg", "pgm", "json"] {
            assert!(p.join(format!("ex/cell_{cell}.{ext}")).exists(), "{cell}.{ext}");
        }
    }
    assert_eq!(
        code(
            p,
            &[
                "explain",
                "--checkpoint",
                "ck",
                "--in",
                "syn/dirty.csv",
                "--cell",
                "99:0",
                "--out-dir",
                "ex"
            ]
        ),
        1
    );
    assert_eq!(
        code(
            p,
            &[
                "explain",
                "--checkpoint",
                "ck",
                "--in",
                "syn/dirty.csv",
                "--cell",
                "0:0",
                "--out-dir",
                "ex",
                "--format",
                "png"
            ]
        ),
        1
    );
}

#[test]
fn cost_matches_formula() {
    let dir = prepared();
    let p = dir.path();
    std::fs::write(p.join("hp4.cfg"), "d = 8\nn = 3\nd_c = 4\nn_c = 2\n").unwrap();
    std::fs::write(p.join("tiny.cfg"), "layers = 2\nheads = 2\nd_head = 4\nd_mlp = 32\n").unwrap();
    ok(
        p,
        &[
            "--config",
            "tiny.cfg",
            "cost",
            "--hp",
            "hp4.cfg",
            "--attributes",
            "1",
            "--train-cells",
            "10",
            "--epochs",
            "2",
            "--json",
            "cost.json",
        ],
    );
    let j: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("cost.json")).unwrap()).unwrap();
    let n_params = j["n_params"].as_u64().unwrap();
    assert_eq!(j["tokens_per_sequence"], 7);
    assert_eq!(j["flops_per_sequence"].as_u64().unwrap(), 6 * 7 * n_params);
    assert_eq!(j["flops_per_run"].as_u64().unwrap(), 2 * 10 * 6 * 7 * n_params);
}
