use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sketchrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchrec")).args(args).env_remove("SKETCHREC_CAP").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn ingest(dir: &TempDir, body: &str, m: usize, n: usize) -> PathBuf {
    let triples = write(dir, "a.txt", body);
    let snap = dir.path().join("a.snap");
    let out = sketchrec(&["ingest", p(&triples), "--m", &m.to_string(), "--n", &n.to_string(), "--out", p(&snap)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    snap
}

/// Diagonal 4, 3, 0.5 as 1-based triples.
const DIAGONAL: &str = "1,1,4\n2,2,3\n3,3,0.5\n";

#[test]
fn ingest_counts_entries() {
    let dir = TempDir::new().unwrap();
    let triples = write(&dir, "t.txt", "# header\n1,1,1.0\n\n2,3,-2\n3,2,0.5\n");
    let snap = dir.path().join("t.snap");
    let out = sketchrec(&["ingest", p(&triples), "--m", "3", "--n", "3", "--out", p(&snap)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("nnz=3 "));
    assert!(snap.is_file());
}

#[test]
fn duplicate_lines_keep_the_last_value() {
    let dir = TempDir::new().unwrap();
    let triples = write(&dir, "t.txt", "1,1,3\n1,1,5\n");
    let out = sketchrec(&["ingest", p(&triples), "--m", "1", "--n", "1", "--out", p(&dir.path().join("s"))]);
    assert_eq!(stdout(&out).trim(), "nnz=1 frob=5");
}

#[test]
fn malformed_line_exits_2_with_its_number() {
    let dir = TempDir::new().unwrap();
    let triples = write(&dir, "t.txt", "1,1,1\n2,x,1\n");
    let out = sketchrec(&["ingest", p(&triples), "--m", "3", "--n", "3", "--out", p(&dir.path().join("s"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_input_exits_5() {
    let dir = TempDir::new().unwrap();
    let out =
        sketchrec(&["ingest", p(&dir.path().join("nope")), "--m", "1", "--n", "1", "--out", p(&dir.path().join("s"))]);
    assert_eq!(code(&out), 5);
}

#[test]
fn seed_is_required() {
    let dir = TempDir::new().unwrap();
    let snap = ingest(&dir, DIAGONAL, 3, 3);
    let out = sketchrec(&["sketch", p(&snap), "--sigma", "1", "--eps", "0.3", "--eta", "1", "--out", "d"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sketch_rank_one_and_empty() {
    let dir = TempDir::new().unwrap();
    let body: String = (1..=6).flat_map(|i| (1..=5).map(move |j| format!("{i},{j},{}\n", i * j))).collect();
    let snap = ingest(&dir, &body, 6, 5);
    let desc = dir.path().join("d");
    let run = |sigma: &str| {
        sketchrec(&[
            "sketch",
            p(&snap),
            "--sigma",
            sigma,
            "--eps",
            "0.2",
            "--eta",
            "1",
            "--q",
            "64",
            "--seed",
            "1",
            "--out",
            p(&desc),
        ])
    };
    let out = run("10");
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("q=64 k=1 "), "{}", stdout(&out));

    let flat = ingest(&dir, "1,1,1\n2,2,1\n3,3,1\n4,4,1\n", 4, 4);
    let out = sketchrec(&[
        "sketch",
        p(&flat),
        "--sigma",
        "1.5",
        "--eps",
        "0.2",
        "--eta",
        "1",
        "--q",
        "64",
        "--seed",
        "1",
        "--out",
        p(&desc),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("q=64 k=0 "));
}

#[test]
fn cap_exceeded_exits_3() {
    let dir = TempDir::new().unwrap();
    let snap = ingest(&dir, DIAGONAL, 3, 3);
    let desc = dir.path().join("d");
    let args = ["sketch", p(&snap), "--sigma", "1", "--eps", "0.1", "--eta", "1", "--seed", "1", "--out", p(&desc)];
    let out = sketchrec(&args);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("q_override"));

    let capped = Command::new(env!("CARGO_BIN_EXE_sketchrec"))
        .args([
            "sketch",
            p(&snap),
            "--sigma",
            "1",
            "--eps",
            "0.2",
            "--eta",
            "1",
            "--q",
            "100",
            "--seed",
            "1",
            "--out",
            p(&desc),
        ])
        .env("SKETCHREC_CAP", "50")
        .output()
        .unwrap();
    assert_eq!(code(&capped), 3);
}

fn sketch_diagonal(dir: &TempDir) -> (PathBuf, PathBuf) {
    let snap = ingest(dir, "1,1,4\n2,2,3\n3,3,0.5\n", 4, 3);
    let desc = dir.path().join("d");
    let out = sketchrec(&[
        "sketch",
        p(&snap),
        "--sigma",
        "2",
        "--eps",
        "0.3",
        "--eta",
        "1",
        "--q",
        "64",
        "--seed",
        "1",
        "--out",
        p(&desc),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (snap, desc)
}

#[test]
fn recommend_on_the_diagonal() {
    let dir = TempDir::new().unwrap();
    let (snap, desc) = sketch_diagonal(&dir);
    let out =
        sketchrec(&["recommend", p(&snap), p(&desc), "--user", "1", "--count", "200", "--eps", "0.3", "--seed", "5"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let picks: Vec<&str> = text.lines().collect();
    assert_eq!(picks.len(), 200);
    assert!(picks.iter().filter(|&&s| s == "1").count() >= 190);

    let json = sketchrec(&[
        "recommend",
        p(&snap),
        p(&desc),
        "--user",
        "1",
        "--count",
        "3",
        "--eps",
        "0.3",
        "--seed",
        "5",
        "--format",
        "json",
    ]);
    assert_eq!(stdout(&json).trim(), "[1,1,1]");
}

#[test]
fn recommend_edge_cases() {
    let dir = TempDir::new().unwrap();
    let (snap, desc) = sketch_diagonal(&dir);
    let base = ["recommend", p(&snap), p(&desc), "--eps", "0.3", "--seed", "5"];
    let with = |extra: &[&str]| sketchrec(&[&base[..], extra].concat());

    let empty_row = with(&["--user", "4"]);
    assert_eq!(code(&empty_row), 4);
    let none = with(&["--user", "1", "--count", "0"]);
    assert_eq!(code(&none), 0);
    assert!(none.stdout.is_empty());
    assert_eq!(code(&with(&["--user", "9"])), 3);
    assert_eq!(code(&with(&["--user", "1", "--delta", "1.5"])), 3);
}

#[test]
fn eval_reports_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "inst.toml", "m = 48\nn = 48\nk = 2\np = 1.0\nseed = 2\n");
    let run = || sketchrec(&["eval", p(&spec), "--eps", "0.4", "--q", "100", "--seed", "3", "--samples", "20"]);
    let out = run();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let summary = text.lines().last().unwrap();
    assert!(summary.starts_with("# summary "));
    let bad_rate: f64 =
        summary.split_whitespace().find_map(|kv| kv.strip_prefix("mean_bad_rate=")).unwrap().parse().unwrap();
    assert!(bad_rate < 0.05, "{summary}");
    assert!(summary.contains("avg_tv_bound=") && !summary.contains("avg_tv_bound= "));
    assert_eq!(out.stdout, run().stdout);

    let json = sketchrec(&[
        "eval",
        p(&spec),
        "--eps",
        "0.4",
        "--q",
        "100",
        "--seed",
        "3",
        "--samples",
        "5",
        "--format",
        "json",
    ]);
    assert!(stdout(&json).contains("\"summary\""));
}

#[test]
fn eval_missing_matrix_exits_5() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "inst.toml", "m = 4\nn = 4\nk = 1\np = 1.0\nseed = 2\nt_path = \"missing.txt\"\n");
    assert_eq!(code(&sketchrec(&["eval", p(&spec), "--eps", "0.4", "--seed", "1"])), 5);
    assert_eq!(code(&sketchrec(&["eval", p(&dir.path().join("none.toml")), "--eps", "0.4", "--seed", "1"])), 5);
}

#[test]
fn sketches_are_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let snap = ingest(&dir, DIAGONAL, 3, 3);
    let blob = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        sketchrec(&[
            "sketch",
            p(&snap),
            "--sigma",
            "2",
            "--eps",
            "0.3",
            "--eta",
            "1",
            "--q",
            "32",
            "--seed",
            seed,
            "--out",
            p(&path),
        ]);
        fs::read(path).unwrap()
    };
    assert_eq!(blob("a", "7"), blob("b", "7"));
    assert_ne!(blob("c", "7"), blob("d", "8"));
}
