use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bpida(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpida"))
        .args(args)
        .current_dir(dir)
        .env_remove("BPIDA_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Column `name` of a CSV report.
fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

const EIGHT_SUITE: &str = "\
1: 8 6 7 2 5 4 3 0 1
2: 6 4 7 8 5 0 3 2 1
3: 1 2 5 3 4 0 6 7 8
4: 3 1 2 6 4 5 0 7 8
5: 7 2 4 5 0 6 8 3 1
";

#[test]
fn solve_solved_board() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("solved.txt"), "0 1 2 3 4 5 6 7 8\n").unwrap();
    ok(&bpida(&["solve", "--algo", "seq", "--instances", "solved.txt", "--out", "r.csv"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert_eq!(column(&csv, "cost"), ["0"]);
}

#[test]
fn bpida_and_seq_expand_the_same_nodes() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("suite.txt"), EIGHT_SUITE).unwrap();
    for algo in ["seq", "bpida"] {
        let out = format!("{algo}.csv");
        ok(&bpida(&["solve", "--algo", algo, "--mode", "all", "--instances", "suite.txt", "--out", &out], dir.path()));
    }
    let read = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap();
    let (seq, par) = (read("seq.csv"), read("bpida.csv"));
    assert_eq!(column(&seq, "nodes_expanded"), column(&par, "nodes_expanded"));
    assert_eq!(column(&seq, "solutions"), column(&par, "solutions"));
}

#[test]
fn json_report_mirrors_csv() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("suite.txt"), EIGHT_SUITE).unwrap();
    ok(&bpida(&["solve", "--algo", "pfull", "--instances", "suite.txt", "--out", "r.json"], dir.path()));
    let json = std::fs::read_to_string(dir.path().join("r.json")).unwrap();
    assert!(json.contains("\"rows\""));
    assert!(json.contains("\"algo\": \"pfull\""));
}

#[test]
fn compare_orders_load_balance() {
    let dir = TempDir::new().unwrap();
    let out = ok(&bpida(&["compare", "--algo", "psimple,pstatic,pfull", "--easy-n", "8"], dir.path()));
    assert!(out.contains("(strictly decreasing)"), "{out}");
}

#[test]
fn verify_passes_and_catches_a_bad_heuristic() {
    let dir = TempDir::new().unwrap();
    let out = ok(&bpida(&["verify", "--count", "20"], dir.path()));
    assert!(!out.contains("FAIL"));
    assert!(dir.path().join(".bpida/verify.stamp").exists());

    let bad = bpida(&["verify", "--count", "20", "--algo", "seq,bpida", "--fault-h-offset", "1", "--stamp", "other.stamp"], dir.path());
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("oracle mismatch"));
    assert!(!dir.path().join("other.stamp").exists());
}

#[test]
fn bench_requires_stamp_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = ["bench", "--easy-n", "3", "--algo", "seq,g1,pfull,bpida"];
    let refused = bpida(&args, dir.path());
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("verify"));

    let mut a = args.to_vec();
    a.extend(["--force", "--out", "a.csv"]);
    ok(&bpida(&a, dir.path()));
    *a.last_mut().unwrap() = "b.csv";
    ok(&bpida(&a, dir.path()));
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
}

#[test]
fn data_dir_overrides_bundled_set() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("korf100.txt"), EIGHT_SUITE).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bpida"))
        .args(["solve", "--algo", "seq", "--easy-n", "2", "--out", "r.csv"])
        .current_dir(dir.path())
        .env("BPIDA_DATA_DIR", dir.path())
        .output()
        .unwrap();
    ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(column(&csv, "id"), ["1", "2"]);
}

#[test]
fn trace_is_ndjson() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("one.txt"), "1 2 5 3 4 0 6 7 8\n").unwrap();
    ok(&bpida(&["solve", "--algo", "g1", "--instances", "one.txt", "--trace", "t.ndjson"], dir.path()));
    let trace = std::fs::read_to_string(dir.path().join("t.ndjson")).unwrap();
    assert!(trace.lines().count() > 2);
    assert!(trace.lines().all(|l| l.starts_with("{\"ev\":")));
}

#[test]
fn rejects_bad_input() {
    let dir = TempDir::new().unwrap();
    assert!(!bpida(&["solve", "--algo", "astar"], dir.path()).status.success());
    std::fs::write(dir.path().join("bad.txt"), "1 2 3 4 5 6 8 7 0\n").unwrap();
    let out = bpida(&["solve", "--algo", "seq", "--instances", "bad.txt"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsolvable"));
    let out = bpida(&["solve", "--algo", "pfull", "--easy-n", "1", "--warp-size", "100"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warp_size"));
}
