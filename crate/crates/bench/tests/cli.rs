use std::path::Path;
use std::process::Command;

fn bench(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tidemark-bench")).args(args).output().expect("spawn")
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

const SMALL: [&str; 8] = ["--scale", "2000", "--queries", "200", "--phase-length", "100", "--frequency", "Q25"];

#[test]
fn run_writes_exact_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let mut args = vec!["run", "--out-dir", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = bench(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first_line(&out.join("latency.csv")), "query_idx,template,latency_us,access_path,tuples_scanned");
    assert_eq!(first_line(&out.join("summary.csv")), "config_hash,cumulative_us,queries,scheme,dl,frequency");
    let lines = std::fs::read_to_string(out.join("latency.csv")).unwrap().lines().count();
    assert_eq!(lines, 201);
}

#[test]
fn compare_writes_one_summary_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let mut args = vec!["compare", "--vary", "scheme=VAP,FULL", "--vary", "dl=immediate,predictive", "--out-dir", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = bench(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("config_hash,cumulative_us,queries,scheme,dl,frequency"));
    assert_eq!(lines.count(), 4);
    let latencies = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("latency-")).count();
    assert_eq!(latencies, 4);
}

#[test]
fn generate_writes_the_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.csv");
    let mut args = vec!["generate", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let o = bench(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 201);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bench.toml");
    std::fs::write(&file, "scale = 1000\nqueries = 100\nphase_length = 50\nscheme = \"FULL\"\n").unwrap();
    let out = dir.path().join("r");
    let o = bench(&["run", "--config", file.to_str().unwrap(), "--queries", "50", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let written = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(written.contains("scheme = \"FULL\""));
    assert!(written.contains("queries = 50"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "no_such_key = 1\n").unwrap();
    let missing = dir.path().join("missing.toml");
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();
    for args in [
        vec!["run", "--config", bad.to_str().unwrap(), "--out-dir", o],
        vec!["run", "--config", missing.to_str().unwrap(), "--out-dir", o],
        vec!["run", "--scheme", "BOGUS", "--out-dir", o],
        vec!["run", "--queries", "0", "--out-dir", o],
        vec!["run", "--selectivity", "1.5", "--out-dir", o],
        vec!["compare", "--vary", "scheme", "--out-dir", o],
        vec!["compare", "--vary", "nope=1,2", "--out-dir", o],
        vec!["launch"],
    ] {
        let r = bench(&args);
        assert_eq!(r.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&r.stderr));
    }
    assert!(!out.exists());
}
