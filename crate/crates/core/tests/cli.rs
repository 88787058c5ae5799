use std::path::Path;
use std::process::{Command, Output};

use geoctx::tasks::EvalReport;

fn geoctx(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoctx"))
        .args(args)
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap()
}

fn last_stderr_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or_default().to_string()
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let o = geoctx(tmp.path(), &["synth", "--seed", "7", "--n-entities", "60", "--name", name]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |n: &str| std::fs::read(tmp.path().join(n).join("data/entities.jsonl")).unwrap();
    assert!(!read("a").is_empty());
    assert_eq!(read("a"), read("b"));
}

#[test]
fn pretrain_then_link_writes_valid_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let p = |s: &str| out.join(s).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let o = geoctx(out, args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    run(&["synth", "--kind", "linking", "--n-entities", "40", "--name", "world"]);
    run(&["vocab", "--entities", &p("world/data/candidates.jsonl"), "--vocab-size", "200", "--name", "vocab"]);
    run(&["pretrain", "--entities", &p("world/data/candidates.jsonl"), "--vocab", &p("vocab/data/vocab.txt"), "--steps", "4", "--name", "pre"]);
    run(&[
        "link",
        "--queries", &p("world/data/queries.jsonl"),
        "--candidates", &p("world/data/candidates.jsonl"),
        "--truth", &p("world/data/truth.tsv"),
        "--vocab", &p("vocab/data/vocab.txt"),
        "--checkpoint", &p("pre/checkpoints/final"),
        "--name", "link",
    ]);
    let path = out.join("link/reports/report.json");
    let report = EvalReport::from_json(&std::fs::read_to_string(&path).unwrap(), &path).unwrap();
    report.validate().unwrap();
    let linking = report.linking.expect("linking section");
    assert!(linking.n_queries > 0);
    assert!((0.0..=1.0).contains(&linking.mrr));
    assert!(out.join("link/manifest.json").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = geoctx(tmp.path(), &["synth", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert!(o.stdout.is_empty());
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.jsonl");
    let o = geoctx(tmp.path(), &["index", "--entities", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(last_stderr_line(&o).starts_with("error: io:"), "{}", last_stderr_line(&o));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nbogus_key = 3\n").unwrap();
    let o = geoctx(tmp.path(), &["synth", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", last_stderr_line(&o));
    assert!(last_stderr_line(&o).starts_with("error: "));

    let o = geoctx(tmp.path(), &["pretrain"]);
    assert_eq!(o.status.code(), Some(5), "{}", last_stderr_line(&o));

    let dup = tmp.path().join("dup.jsonl");
    std::fs::write(&dup, "{\"id\":\"a\",\"name\":\"X\",\"x\":1.0,\"y\":2.0}\n{\"id\":\"a\",\"name\":\"Y\",\"x\":1.0,\"y\":2.0}\n").unwrap();
    let o = geoctx(tmp.path(), &["index", "--entities", dup.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(6));
    assert!(last_stderr_line(&o).starts_with("error: duplicate-entity:"));
}
