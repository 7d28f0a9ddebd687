use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

fn ffiscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffiscope")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TWO_BORROWS: &str = "aliasing/two-mutable-borrows.scn";
const OFFSET_BEYOND: &str = "aliasing/offset-beyond-borrow.scn";

#[test]
fn two_mutable_borrows_under_tb_is_a_bug() {
    let o = ffiscope(&[corpus(TWO_BORROWS).to_str().unwrap(), "--model", "tb"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("expired-permission"), "{}", stdout(&o));
}

#[test]
fn offset_beyond_borrow_depends_on_the_model() {
    let path = corpus(OFFSET_BEYOND);
    let path = path.to_str().unwrap();
    assert_eq!(code(&ffiscope(&[path, "--model", "tb"])), 0);
    let sb = ffiscope(&[path, "--model", "sb"]);
    assert_eq!(code(&sb), 1);
    assert!(stdout(&sb).contains("access-out-of-bounds"));
}

#[test]
fn diff_reports_verdict_as_json() {
    let o = ffiscope(&[corpus(OFFSET_BEYOND).to_str().unwrap(), "--diff", "--format", "json"]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "sb-only-violation");
    assert_eq!(v["tb"]["exit_code"], 0);
    assert_eq!(v["sb"]["exit_code"], 1);
}

#[test]
fn out_writes_structured_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = ffiscope(&[corpus(TWO_BORROWS).to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["model"], "tb");
    assert_eq!(v["seed"], 3);
    assert_eq!(v["exit_code"], 1);
    assert_eq!(v["outcome"]["diagnostics"][0]["kind"], "expired-permission");
}

#[test]
fn zero_init_flag_reaches_the_machine() {
    let path = corpus("typing/partial-array-init.scn");
    let path = path.to_str().unwrap();
    assert_eq!(code(&ffiscope(&[path])), 1);
    assert_eq!(code(&ffiscope(&[path, "--zero-init-foreign"])), 0);
}

#[test]
fn leaks_only_and_timeout_codes() {
    assert_eq!(code(&ffiscope(&[corpus("allocation/unfreed-malloc.scn").to_str().unwrap()])), 4);
    assert_eq!(code(&ffiscope(&[corpus("runtime/spin-forever.scn").to_str().unwrap(), "--steps", "1000"])), 3);
    assert_eq!(code(&ffiscope(&[corpus("runtime/unbound-extern.scn").to_str().unwrap()])), 2);
}

#[test]
fn corpus_mode_passes_on_bundled_corpus() {
    let o = ffiscope(&["--corpus", corpus("").to_str().unwrap(), "--model", "both"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("dedup groups"));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&ffiscope(&[])), 64);
    assert_eq!(code(&ffiscope(&["--model", "xb", "a.scn"])), 64);
    assert_eq!(code(&ffiscope(&["/nonexistent/file.scn"])), 64);
}

#[test]
fn parse_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    std::fs::write(&bad, "host fn main() {\n  frobnicate x\n}\n").unwrap();
    let o = ffiscope(&[bad.to_str().unwrap()]);
    assert_eq!(code(&o), 64);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.scn:2"));
}
