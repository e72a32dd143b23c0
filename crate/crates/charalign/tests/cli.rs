//! Drives the charalign binary end to end on a tiny corpus: every
//! subcommand runs, writes its artifacts and manifest, and fails with the
//! documented exit codes on bad usage or missing files.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_charalign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        stdout_of(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn json_file(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

// Pangrams in both cases so every letter a-z and A-Z appears in the
// vocabulary.
fn seed_text() -> String {
    let sentences = [
        "the quick brown fox jumps over the lazy dog",
        "pack my box with five dozen liquor jugs",
        "how vexingly quick daft zebras jump",
        "bright vixens jump while dozy fowl quack",
    ];
    let mut out = String::new();
    for _ in 0..10 {
        for s in &sentences {
            out.push_str(s);
            out.push('\n');
            out.push_str(&s.to_uppercase());
            out.push('\n');
        }
    }
    out
}

#[test]
fn every_subcommand_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let input = root.join("in.txt");
    std::fs::write(&input, seed_text()).unwrap();
    let corpus = root.join("corpus");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let prepare = |out_dir: &Path| {
        run(&[
            "prepare",
            "--setup",
            "EngFake_base",
            "--input-a",
            &s(&input),
            "--out-dir",
            &s(out_dir),
            "--seed",
            "9",
        ])
    };
    let out = prepare(&corpus);
    assert_ok(&out, "prepare");
    for f in ["train.txt", "dev.txt", "vocab.json", "manifest.json"] {
        assert!(corpus.join(f).is_file(), "prepare must write {f}");
    }

    // Same invocation, fresh directory: line files must match byte for byte.
    let corpus2 = root.join("corpus2");
    assert_ok(&prepare(&corpus2), "second prepare");
    for f in ["train.txt", "dev.txt", "vocab.json"] {
        assert_eq!(
            std::fs::read(corpus.join(f)).unwrap(),
            std::fs::read(corpus2.join(f)).unwrap(),
            "prepare is not deterministic in {f}"
        );
    }

    let ckpt = root.join("model.ckpt");
    let out = run(&[
        "train",
        "--corpus-dir",
        &s(&corpus),
        "--out",
        &s(&ckpt),
        "--epochs",
        "1",
        "--layers",
        "2",
        "--hidden",
        "32",
        "--heads",
        "2",
        "--feed-forward",
        "64",
        "--masking",
        "60/20/20",
        "--model-seed",
        "1",
        "--seed",
        "2",
    ]);
    assert_ok(&out, "train");
    for f in ["model.ckpt", "model.run.jsonl", "model.manifest.json", "model.vocab.json"] {
        assert!(root.join(f).is_file(), "train must write {f}");
    }
    let manifest = json_file(&root.join("model.manifest.json"));
    assert_eq!(manifest["config"]["masking"], "60/20/20");
    assert_eq!(manifest["config"]["epochs"], 1);

    let align_dir = root.join("align");
    let align = |extra: &[&str], out_dir: &Path| {
        let mut args = vec![
            "align",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--setup",
            "EngFake_base",
        ];
        args.extend_from_slice(extra);
        args.push("--out-dir");
        args.push(out_dir.to_str().unwrap());
        run(&args)
    };
    let out = align(&[], &align_dir);
    assert_ok(&out, "align");
    for f in [
        "similarity.csv",
        "similarity.pgm",
        "alignment.json",
        "align.manifest.json",
    ] {
        assert!(align_dir.join(f).is_file(), "align must write {f}");
    }
    assert!(
        stdout_of(&out).contains("accuracy: "),
        "align must print the accuracy line"
    );

    // Identical invocation into a second directory: identical artifacts.
    let align_dir2 = root.join("align2");
    assert_ok(&align(&[], &align_dir2), "second align");
    for f in ["alignment.json", "similarity.csv", "similarity.pgm"] {
        assert_eq!(
            std::fs::read(align_dir.join(f)).unwrap(),
            std::fs::read(align_dir2.join(f)).unwrap(),
            "align is not deterministic in {f}"
        );
    }

    // Alphabet overrides: the full 52-letter pair scores 52 rows.
    let align_all = root.join("align_all");
    let out = align(
        &["--src-alphabet", "latin_all", "--tgt-alphabet", "fake_all"],
        &align_all,
    );
    assert_ok(&out, "align with alphabet overrides");
    let report = json_file(&align_all.join("alignment.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 52);
    let manifest = json_file(&align_all.join("align.manifest.json"));
    assert_eq!(manifest["config"]["src_alphabet"], "latin_all");

    let ctx_out = root.join("ctx").join("context.json");
    let out = run(&[
        "context",
        "--checkpoint",
        &s(&ckpt),
        "--src-word",
        "water",
        "--tgt-word",
        "later",
        "--layer",
        "1",
        "--no-positions",
        "--out",
        &s(&ctx_out),
    ]);
    assert_ok(&out, "context");
    assert!(ctx_out.is_file(), "context must write the report");
    assert!(
        ctx_out.with_extension("manifest.json").is_file(),
        "context must write a manifest"
    );
    let report = json_file(&ctx_out);
    assert_eq!(report["meta"]["use_positions"], false);

    let ablate_out = root.join("ablate").join("static.json");
    let out = run(&[
        "ablate",
        "--which",
        "static",
        "--corpus-dir",
        &s(&corpus),
        "--checkpoint",
        &s(&ckpt),
        "--out",
        &s(&ablate_out),
    ]);
    assert_ok(&out, "ablate static");
    assert!(ablate_out.is_file(), "ablate must write the report");
    let manifest = json_file(&ablate_out.with_extension("manifest.json"));
    assert_eq!(manifest["command"], "ablate");
    assert_eq!(manifest["notes"]["which"], "static");
}

#[test]
fn bad_usage_and_missing_files_use_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let out = run(&[
        "prepare",
        "--setup",
        "EngKlingon",
        "--input-a",
        "in.txt",
        "--out-dir",
        &s(&root.join("c")),
    ]);
    assert_eq!(exit_code(&out), 2, "unknown setup is a usage error");

    let out = run(&[
        "prepare",
        "--setup",
        "EngFake_base",
        "--input-a",
        &s(&root.join("no_such_file.txt")),
        "--out-dir",
        &s(&root.join("c")),
    ]);
    assert_eq!(exit_code(&out), 4, "missing input is an I/O error");

    let out = run(&[
        "train",
        "--corpus-dir",
        &s(&root.join("c")),
        "--out",
        &s(&root.join("m.ckpt")),
        "--resume",
        &s(&root.join("old.ckpt")),
    ]);
    assert_eq!(exit_code(&out), 2, "resume is rejected as usage");

    let out = run(&[
        "align",
        "--checkpoint",
        &s(&root.join("m.ckpt")),
        "--setup",
        "EngFake_base",
        "--src-alphabet",
        "runic",
        "--out-dir",
        &s(&root.join("a")),
    ]);
    assert_eq!(exit_code(&out), 2, "unknown alphabet is a usage error");

    let out = bin().arg("--version").output().unwrap();
    assert!(out.status.success());
    assert!(stdout_of(&out).starts_with("charalign "));
}
