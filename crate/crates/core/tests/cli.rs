use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use markov_mix::eval::recovery_error;
use markov_mix::io::read_mixture;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_markov-mix"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn generate(dir: &Path, name: &str, n: usize, l: usize, r: usize, seed: u64) -> String {
    let path = dir.join(name).to_str().unwrap().to_owned();
    let (n, l, r, seed) = (n.to_string(), l.to_string(), r.to_string(), seed.to_string());
    ok(&[
        "generate",
        "--n",
        &n,
        "--L",
        &l,
        "--r",
        &r,
        "--seed",
        &seed,
        "--recoverable",
        "-o",
        &path,
    ]);
    path
}

#[test]
fn generate_then_recover_reproduces_the_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let truth = generate(dir.path(), "truth.json", 12, 3, 4, 7);
    let learned = dir.path().join("learned.json");
    ok(&[
        "recover",
        &truth,
        "--L",
        "3",
        "--r",
        "4",
        "-o",
        learned.to_str().unwrap(),
    ]);
    let a = read_mixture::<f64>(Path::new(&truth)).unwrap();
    let b = read_mixture::<f64>(&learned).unwrap();
    assert!(recovery_error(&a, &b).unwrap().value < 1e-8);
}

#[test]
fn recover_reads_stdin() {
    let dir = tempfile::tempdir().unwrap();
    let truth = generate(dir.path(), "truth.json", 8, 2, 3, 1);
    let text = std::fs::read(&truth).unwrap();
    let mut child = bin()
        .args(["recover", "-", "--L", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&text).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let learned = dir.path().join("learned.json");
    std::fs::write(&learned, out.stdout).unwrap();
    let evaluated = ok(&["evaluate", &truth, learned.to_str().unwrap()]);
    let line = evaluated.lines().find(|l| l.starts_with("recovery_error")).unwrap();
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(value < 1e-8);
}

#[test]
fn evaluating_a_file_against_itself_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.json", 10, 2, 4, 3);
    let json: serde_json::Value = serde_json::from_str(&ok(&["--json", "evaluate", &m, &m])).unwrap();
    assert_eq!(json["recovery_error"], 0.0);
    assert_eq!(json["trail_error"], 0.0);
    assert_eq!(json["start_tv"], 0.0);
}

#[test]
fn estimate_finds_the_number_of_chains() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.json", 20, 5, 5, 3);
    assert_eq!(ok(&["estimate", &m, "--what", "L"]).trim(), "L = 5");
    let json: serde_json::Value = serde_json::from_str(&ok(&["--json", "estimate", &m, "--what", "L"])).unwrap();
    assert_eq!(json["chosen_l"], 5);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "garbage\n").unwrap();
    let out = run(&["recover", bad.to_str().unwrap(), "--L", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let missing = dir.path().join("missing.json");
    let out = run(&["--json", "recover", missing.to_str().unwrap(), "--L", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["error"].as_str().unwrap().contains("cannot read"));

    assert_eq!(run(&["recover"]).status.code(), Some(2));
    assert_eq!(
        run(&["generate", "--n", "4", "--L", "3", "--r", "3"]).status.code(),
        Some(1)
    );
}

#[test]
fn experiment_writes_one_row_per_method_and_instance() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n":[8],"L":[2],"r":[3],"samples":["exact"],"methods":["ca-svd","em"],"repeats":2,"em_iters":5}"#,
    )
    .unwrap();
    let csv = ok(&["experiment", spec.to_str().unwrap()]);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("trail_error"));
    assert_eq!(lines.count(), 4);
}
