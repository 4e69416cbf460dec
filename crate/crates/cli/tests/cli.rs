use std::path::Path;
use std::process::{Command, Output};

fn smartvl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smartvl"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = smartvl(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], needle: &str) {
    let out = smartvl(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(needle), "{args:?}: {err}");
}

#[test]
fn small_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "3", "synth", "--out", "data", "--n-per-category", "4", "--image-size", "32"]);
    assert!(d.join("data/puzzles.jsonl").exists());

    let stdout = ok(d, &["caption", "--data", "data", "--cache", "caps.jsonl", "--backend", "mock"]);
    assert!(stdout.contains("32"), "{stdout}");
    let lines = std::fs::read_to_string(d.join("caps.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 32);

    let common = ["--data", "data", "--captions", "caps.jsonl", "--epochs", "1", "--batch-size", "4"];
    for role in ["key", "value"] {
        let out = format!("{role}.ckpt");
        let mut args = vec!["--seed", "3", "train", "--role", role, "--out", out.as_str()];
        args.extend(common);
        ok(d, &args);
        assert!(d.join(&out).exists());
        assert!(d.join(format!("{role}.ckpt.metrics.jsonl")).exists());
    }

    ok(
        d,
        &[
            "--seed", "3", "infer", "--data", "data", "--captions", "caps.jsonl", "--key-ckpt", "key.ckpt",
            "--value-ckpt", "value.ckpt", "--out", "preds.jsonl", "--split", "all",
        ],
    );
    assert_eq!(std::fs::read_to_string(d.join("preds.jsonl")).unwrap().lines().count(), 32);
    assert!(d.join("preds.jsonl.config.json").exists());

    let table = ok(
        d,
        &["--seed", "3", "eval", "--predictions", "preds.jsonl", "--data", "data", "--split", "all", "--out", "r.json"],
    );
    assert!(table.contains("over 32 puzzles"), "{table}");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 32);
    assert_eq!(report["seed"], 3);

    // Swapped checkpoints are refused.
    fails_with(
        d,
        &[
            "infer", "--data", "data", "--captions", "caps.jsonl", "--key-ckpt", "value.ckpt", "--value-ckpt",
            "key.ckpt", "--out", "x.jsonl",
        ],
        "error:",
    );
}

#[test]
fn simulate_routing_with_perfect_specialists() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(
        tmp.path(),
        &[
            "simulate-routing", "--p-kind", "1", "--key-acc", "1", "--value-acc", "1", "--trials", "1000", "--out",
            "sim.json",
        ],
    );
    assert!(stdout.contains("1.0"), "{stdout}");
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("sim.json")).unwrap()).unwrap();
    assert_eq!(v["expected"], 1.0);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fails_with(d, &["train", "--role", "key", "--data", "nowhere", "--out", "k.ckpt"], "error:");
    fails_with(d, &["simulate-routing", "--p-kind", "1.5", "--key-acc", "1", "--value-acc", "1"], "error:");
    fails_with(d, &["simulate-routing", "--p-kind", "1", "--key-acc", "1", "--value-acc", "1", "--kinds", "key,door"], "error:");
    std::fs::write(d.join("bad.toml"), "seed = 1\nunknown_key = 2\n").unwrap();
    fails_with(d, &["--config", "bad.toml", "synth", "--out", "x"], "error:");
    ok(d, &["synth", "--out", "data", "--n-per-category", "1"]);
    fails_with(d, &["caption", "--data", "data", "--cache", "c.jsonl", "--backend", "http"], "error:");
    // Training before captioning points at the missing cache.
    fails_with(d, &["train", "--role", "key", "--data", "data", "--captions", "c.jsonl", "--out", "k.ckpt"], "error:");
}
