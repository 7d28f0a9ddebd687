use std::fs;
use std::path::{Path, PathBuf};

use ffiscope::borrows::AliasingModel;
use ffiscope::diagnostics::{DedupOptions, Verdict};
use ffiscope::ir::parse_scenario;
use ffiscope::machine::MachineConfig;
use ffiscope::runner::{combine_exit_codes, load_scenario, run_corpus, run_differential, run_single, ModelSelection};

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

const DOUBLE_FREE: &str = "\
expect double-free

extern fn release(*mut u8)
extern fn make() -> *mut u8

foreign fn release(p: ptr) {
  free p
}

foreign fn make() -> ptr {
  malloc p = 8
  return p
}

host fn main() {
  call p = make()
  call release(p)
  call release(p)
}
";

const SPIN: &str = "\
expect timeout

foreign fn spin() {
  label top
  goto top
}

extern fn spin()

host fn main() {
  call spin()
}
";

fn write_dir(files: &[(&str, &str)]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in files {
        fs::write(dir.path().join(name), text).unwrap();
    }
    dir
}

#[test]
fn bundled_corpus_meets_every_expectation() {
    let s = run_corpus(&corpus_dir(), &MachineConfig::default(), ModelSelection::Both, DedupOptions::default()).unwrap();
    assert!(s.mismatches.is_empty(), "{:#?}", s.mismatches);
    assert_eq!(s.exit_code(), 0);
    assert!(s.scenarios >= 30);
}

#[test]
fn counts_sum_to_scenarios_per_model() {
    let s = run_corpus(&corpus_dir(), &MachineConfig::default(), ModelSelection::Both, DedupOptions::default()).unwrap();
    for model in [AliasingModel::TreeBorrows, AliasingModel::StackedBorrows] {
        let total: usize = s.counts[&model].values().sum();
        assert_eq!(total, s.scenarios, "{model}");
    }
}

#[test]
fn corpus_order_is_by_path() {
    let s = run_corpus(&corpus_dir(), &MachineConfig::default(), ModelSelection::Tb, DedupOptions::default()).unwrap();
    let names: Vec<&str> = s.entries.iter().map(|e| e.scenario.as_str()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert!(s.entries.iter().all(|e| e.runs.len() == 1 && e.verdict.is_none()));
}

#[test]
fn identical_failures_collapse_to_one_group() {
    let dir = write_dir(&[("a.scn", DOUBLE_FREE), ("b.scn", DOUBLE_FREE), ("c.scn", DOUBLE_FREE)]);
    let s = run_corpus(dir.path(), &MachineConfig::default(), ModelSelection::Tb, DedupOptions::default()).unwrap();
    assert_eq!(s.scenarios, 3);
    assert_eq!(s.groups.len(), 1);
    assert_eq!(s.groups[0].members.len(), 3);
    assert_eq!(s.counts[&AliasingModel::TreeBorrows]["bug"], 3);
}

#[test]
fn timeout_is_counted() {
    let dir = write_dir(&[("spin.scn", SPIN), ("df.scn", DOUBLE_FREE)]);
    let cfg = MachineConfig { step_budget: 10_000, ..MachineConfig::default() };
    let s = run_corpus(dir.path(), &cfg, ModelSelection::Tb, DedupOptions::default()).unwrap();
    let counts = &s.counts[&AliasingModel::TreeBorrows];
    assert_eq!(counts["timeout"], 1);
    assert_eq!(counts["bug"], 1);
    assert_eq!(s.exit_code(), 0);
}

#[test]
fn missed_expectation_fails_the_corpus() {
    let wrong = DOUBLE_FREE.replace("expect double-free", "expect pass");
    let dir = write_dir(&[("wrong.scn", &wrong)]);
    let s = run_corpus(dir.path(), &MachineConfig::default(), ModelSelection::Tb, DedupOptions::default()).unwrap();
    assert_eq!(s.mismatches, vec!["wrong.scn [tb]: expected pass, got double-free".to_string()]);
    assert_eq!(s.exit_code(), 1);
}

#[test]
fn empty_program_agrees_on_pass() {
    let p = parse_scenario("host fn main() {\n}\n").unwrap();
    let d = run_differential("empty", &p, &MachineConfig::default(), DedupOptions::default());
    assert_eq!(d.verdict, Verdict::Agree);
    assert_eq!(d.tb.outcome.tag(), "pass");
    assert_eq!(d.exit_code(), 0);
}

#[test]
fn two_mutable_borrows_agree_across_models() {
    let p = load_scenario(&corpus_dir().join("aliasing/two-mutable-borrows.scn")).unwrap();
    let d = run_differential("two-borrows", &p, &MachineConfig::default(), DedupOptions::default());
    assert_eq!(d.verdict, Verdict::Agree);
    assert_eq!(d.tb.exit_code, 1);
    assert_eq!(d.sb.exit_code, 1);
}

#[test]
fn fixed_seed_reports_are_identical() {
    let p = load_scenario(&corpus_dir().join("runtime/threads-join.scn")).unwrap();
    let cfg = MachineConfig { seed: 7, ..MachineConfig::default() };
    let a = serde_json::to_string(&run_single("t", &p, &cfg, DedupOptions::default())).unwrap();
    let b = serde_json::to_string(&run_single("t", &p, &cfg, DedupOptions::default())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes_follow_classification() {
    let cases = [
        ("allocation/balanced-malloc-free.scn", 0),
        ("allocation/unfreed-malloc.scn", 4),
        ("allocation/double-free.scn", 1),
        ("runtime/unbound-extern.scn", 2),
        ("runtime/spin-forever.scn", 3),
    ];
    for (rel, code) in cases {
        let p = load_scenario(&corpus_dir().join(rel)).unwrap();
        let r = run_single(rel, &p, &MachineConfig::default(), DedupOptions::default());
        assert_eq!(r.exit_code, code, "{rel}");
        assert_eq!(r.exit_code, r.outcome.exit_code());
    }
}

#[test]
fn combined_exit_code_prefers_bugs() {
    assert_eq!(combine_exit_codes([0, 4, 2, 3, 1]), 1);
    assert_eq!(combine_exit_codes([4, 2]), 2);
    assert_eq!(combine_exit_codes([0, 4]), 4);
    assert_eq!(combine_exit_codes([]), 0);
}
