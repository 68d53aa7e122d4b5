use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dca-csi"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Tiny model and dataset shared by the train/eval tests.
const TINY: &[&str] = &["--set", "count=40", "--set", "train=24", "--set", "val=8", "--set", "batch_size=8"];

fn with_tiny<'a>(args: &[&'a str], tiny_conf: &'a str) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(["--config", tiny_conf]);
    v.extend_from_slice(TINY);
    v
}

#[test]
fn count_defaults_report_shared_encoder() {
    let o = run(&["count"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# config "));
    assert!(text.lines().any(|l| l.starts_with("encoder,,45,")), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("decoder,")).count(), 4);
}

#[test]
fn count_rejects_indivisible_base_number() {
    let o = run(&["count", "--set", "k=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not divide"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "k = 2\nbogus = 1\n").unwrap();
    assert_eq!(run(&["count", "--config", p(&bad)]).status.code(), Some(2));
    assert_eq!(run(&["count", "--set", "n_t=24", "--set", "k=2"]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--data", p(&dir.path().join("nope.bin")), "--out", p(&dir.path().join("a.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(run(&["count", "--config", "/nonexistent/x.conf"]).status.code(), Some(3));
}

#[test]
fn gradcheck_tiny_passes() {
    let o = run(&["gradcheck", "--config", p(&config("tiny.conf"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let err: f64 = text
        .split("max relative error ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("error printed");
    assert!(err <= 1e-3);
}

#[test]
fn gen_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    for out in [&a, &b] {
        let o = run(&["gen", "--scenario", "outdoor", "--count", "12", "--seed", "4", "--set", "n_v=1", "--set", "k=2", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(&bytes[..8], b"CSIDCA01");
    assert_eq!(bytes, std::fs::read(&b).unwrap());
}

#[test]
fn train_eval_and_architecture_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = config("tiny.conf");
    let data = dir.path().join("data.bin");
    let out = dir.path().join("run");
    let o = run(&with_tiny(&["gen", "--out", p(&data)], p(&tiny)));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&with_tiny(&["train", "--data", p(&data), "--out", p(&out), "--epochs", "2"], p(&tiny)));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert!(lines[0].starts_with("# config "));
    assert_eq!(lines[1], "epoch,loss,nmse_cr2,nmse_cr4,nmse_cr8,nmse_cr16");
    assert_eq!(lines.len(), 4);
    for f in ["best.ckpt", "last.ckpt", "config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let csv = dir.path().join("eval.csv");
    let ckpt = out.join("best.ckpt");
    let o = run(&with_tiny(&["eval", "--model", p(&ckpt), "--data", p(&data), "--out", p(&csv)], p(&tiny)));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().nth(1), Some("scenario,n_a,k,samples,compression_ratio,nmse_linear,nmse_db"));
    assert_eq!(text.lines().count(), 6);

    let bad_csv = dir.path().join("mismatch.csv");
    let mut args = with_tiny(&["eval", "--model", p(&ckpt), "--data", p(&data), "--out", p(&bad_csv)], p(&tiny));
    args.extend(["--set", "refine_blocks=2"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("architecture mismatch"));
    assert!(!bad_csv.exists());
}

#[test]
fn analyze_writes_long_format_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let csv = dir.path().join("corr.csv");
    assert!(run(&["gen", "--scenario", "outdoor", "--count", "20", "--out", p(&data)]).status.success());
    let o = run(&["analyze", "--data", p(&data), "--out", p(&csv), "--set", "scenario=outdoor"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mean off-diagonal beam correlation"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().nth(1), Some("kind,row,col,value"));
    // 32x32 beam entries plus 32 antennas x 32 lags.
    assert_eq!(text.lines().count(), 2 + 32 * 32 + 32 * 32);
}
