//! End-to-end checks of the installed binary: golden outputs, exit codes,
//! and byte-identical artifacts across reruns and worker counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn gatetag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatetag"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn path_arg(p: &Path) -> String {
    p.to_str().expect("utf-8 path").to_string()
}

#[test]
fn expr_reproduces_the_two_register_cone_expression() {
    let out = gatetag(&["expr", &path_arg(&fixture("fig3b.net")), "--gate", "U3", "--k", "2"]);
    assert_eq!(stdout_of(&out), "U3 = !(((R1 ^ R2)) | (!R2))\n");
}

#[test]
fn selftest_passes() {
    let out = gatetag(&["selftest"]);
    let text = stdout_of(&out);
    assert!(text.ends_with("PASS selftest\n"), "unexpected output:\n{text}");
    assert!(!text.contains("FAIL"), "unexpected output:\n{text}");
}

#[test]
fn stats_reproduces_the_frozen_corpus_fixture() {
    let out = gatetag(&["stats", &path_arg(&fixture("toy_corpus.tag"))]);
    let want = fs::read_to_string(fixture("toy_corpus.stats")).expect("fixture exists");
    assert_eq!(stdout_of(&out), want);
}

fn toy_netlist_args() -> Vec<String> {
    // Alphabetical, the order the corpus fixture was built with.
    ["toy/alu_slice.net", "toy/counter.net", "toy/dpath.net", "toy/lfsr.net"]
        .iter()
        .map(|n| path_arg(&fixture(n)))
        .collect()
}

#[test]
fn corpus_fixture_regenerates_from_the_bundled_netlists() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out_dir = path_arg(&dir.path().join("run"));
    let mut args = vec!["tag".to_string()];
    args.extend(toy_netlist_args());
    args.extend(["--out".to_string(), out_dir.clone()]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    stdout_of(&gatetag(&argv));
    let got = fs::read(Path::new(&out_dir).join("corpus.tag")).expect("corpus written");
    let want = fs::read(fixture("toy_corpus.tag")).expect("fixture exists");
    assert_eq!(got, want, "regenerated corpus drifted from the frozen fixture");
}

#[test]
fn artifacts_are_identical_across_reruns_and_worker_counts() {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = dir.path().join("tiny.toml");
    fs::write(
        &cfg,
        "[train]\nbatch = 8\nepochs = 2\n\n[encoder]\nvocab = 128\ntext_width = 12\n\
         embed_dim = 8\ngraph_width = 12\nmax_tokens = 48\n",
    )
    .expect("config written");
    let run = |out: &Path, workers: &str| {
        let args = vec![
            "pretrain".to_string(),
            "--step".to_string(),
            "1".to_string(),
            "--pairs".to_string(),
            "16".to_string(),
            "--max-vars".to_string(),
            "3".to_string(),
            "--config".to_string(),
            path_arg(&cfg),
            "--out".to_string(),
            path_arg(out),
            "--workers".to_string(),
            workers.to_string(),
        ];
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        stdout_of(&gatetag(&argv));
        fs::read(out.join("text.ckpt")).expect("checkpoint written")
    };
    let one = run(&dir.path().join("w1"), "1");
    let four = run(&dir.path().join("w4"), "4");
    assert_eq!(one, four, "checkpoint depends on the worker count");

    let again = run(&dir.path().join("w1"), "1");
    assert_eq!(one, again, "rerun in place changed the checkpoint");
    let manifest = fs::read_to_string(dir.path().join("w1").join("manifest.tsv")).unwrap();
    for artifact in ["config.toml", "step1_curve.tsv", "text.ckpt"] {
        assert!(manifest.contains(artifact), "manifest misses {artifact}:\n{manifest}");
    }
}

#[test]
fn tag_output_is_worker_count_independent() {
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |out: &Path, workers: &str| {
        let mut args = vec!["tag".to_string()];
        args.extend(toy_netlist_args());
        args.extend([
            "--out".to_string(),
            path_arg(out),
            "--workers".to_string(),
            workers.to_string(),
        ]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        stdout_of(&gatetag(&argv));
        fs::read(out.join("corpus.tag")).expect("corpus written")
    };
    assert_eq!(run(&dir.path().join("w1"), "1"), run(&dir.path().join("w3"), "3"));
}

#[test]
fn exit_codes_separate_error_classes() {
    // Data: unreadable input.
    let out = gatetag(&["parse", "/nonexistent/input.net"]);
    assert_eq!(out.status.code(), Some(3));

    // Data: syntactically broken netlist.
    let dir = tempfile::tempdir().expect("temp dir");
    let bad_net = dir.path().join("bad.net");
    fs::write(&bad_net, "garbage").unwrap();
    let out = gatetag(&["parse", &path_arg(&bad_net)]);
    assert_eq!(out.status.code(), Some(3));

    // Config: malformed file, invalid value, unknown key.
    let bad_cfg = dir.path().join("bad.toml");
    fs::write(&bad_cfg, "nonsense [[[").unwrap();
    let fig = path_arg(&fixture("fig3b.net"));
    let out = gatetag(&["parse", &fig, "--config", &path_arg(&bad_cfg)]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&bad_cfg, "[run]\nk = 0\n").unwrap();
    let out = gatetag(&["parse", &fig, "--config", &path_arg(&bad_cfg)]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&bad_cfg, "[run]\nno_such_key = 1\n").unwrap();
    let out = gatetag(&["parse", &fig, "--config", &path_arg(&bad_cfg)]);
    assert_eq!(out.status.code(), Some(2));

    // Config: flag value out of range (clap handles it).
    let out = gatetag(&["pretrain", "--step", "3"]);
    assert_eq!(out.status.code(), Some(2));

    // Config: step 2 without netlists.
    let out = gatetag(&["pretrain", "--step", "2"]);
    assert_eq!(out.status.code(), Some(2));

    // Data: step 2 before step 1 in a fresh run directory.
    let out = gatetag(&[
        "pretrain",
        "--step",
        "2",
        &fig,
        "--out",
        &path_arg(&dir.path().join("fresh")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[run]\nseed = 1\nk = 1\n").unwrap();
    let out_dir = dir.path().join("run");
    let mut args = vec!["tag".to_string(), path_arg(&fixture("fig3b.net"))];
    args.extend([
        "--config".to_string(),
        path_arg(&cfg),
        "--seed".to_string(),
        "9".to_string(),
        "--out".to_string(),
        path_arg(&out_dir),
    ]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    stdout_of(&gatetag(&argv));
    let snapshot = fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 9"), "flag did not win:\n{snapshot}");
    assert!(snapshot.contains("k = 1"), "file value lost:\n{snapshot}");
}
