//! Running scenarios: one model, both models side by side, or a whole
//! corpus directory, with structured reports.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::borrows::AliasingModel;
use crate::diagnostics::{dedup, render_outcome, DedupGroup, DedupKey, DedupOptions, Outcome, Verdict};
use crate::ir::{parse_scenario, ParseError, ScenarioProgram};
use crate::machine::{run, MachineConfig};

pub const SCENARIO_EXTENSION: &str = "scn";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSelection {
    Tb,
    Sb,
    Both,
}

impl ModelSelection {
    pub fn models(self) -> &'static [AliasingModel] {
        match self {
            ModelSelection::Tb => &[AliasingModel::TreeBorrows],
            ModelSelection::Sb => &[AliasingModel::StackedBorrows],
            ModelSelection::Both => &[AliasingModel::StackedBorrows, AliasingModel::TreeBorrows],
        }
    }
}

impl FromStr for ModelSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tb" => Ok(ModelSelection::Tb),
            "sb" => Ok(ModelSelection::Sb),
            "both" => Ok(ModelSelection::Both),
            other => Err(format!("unknown model selection `{other}` (expected tb, sb or both)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{path}:{error}")]
    Parse { path: String, error: ParseError },
}

pub fn load_scenario(path: &Path) -> Result<ScenarioProgram, LoadError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|error| LoadError::Io { path: display.clone(), error })?;
    parse_scenario(&text).map_err(|error| LoadError::Parse { path: display, error })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub expected: Vec<String>,
    pub actual: String,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub model: AliasingModel,
    pub seed: u64,
    pub config: MachineConfig,
    pub outcome: Outcome,
    pub exit_code: i32,
    pub dedup_key: DedupKey,
    pub expectation: Option<ExpectationCheck>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub scenario: String,
    pub seed: u64,
    pub sb: RunReport,
    pub tb: RunReport,
    pub verdict: Verdict,
}

impl DiffReport {
    /// Nonzero if either model failed or an expectation was missed.
    pub fn exit_code(&self) -> i32 {
        if self.sb.expectation.as_ref().is_some_and(|e| !e.satisfied)
            || self.tb.expectation.as_ref().is_some_and(|e| !e.satisfied)
        {
            return 1;
        }
        combine_exit_codes([self.sb.exit_code, self.tb.exit_code])
    }
}

/// Most severe of several run exit codes: bug, then timeout, unsupported,
/// leaks, pass.
pub fn combine_exit_codes(codes: impl IntoIterator<Item = i32>) -> i32 {
    let rank = |c: i32| match c {
        1 => 4,
        3 => 3,
        2 => 2,
        4 => 1,
        _ => 0,
    };
    codes.into_iter().max_by_key(|c| rank(*c)).unwrap_or(0)
}

fn check(program: &ScenarioProgram, model: AliasingModel, outcome: &Outcome) -> Option<ExpectationCheck> {
    let expected: Vec<String> = program.expectations_for(model).iter().map(|t| t.to_string()).collect();
    if expected.is_empty() {
        return None;
    }
    let actual = outcome.tag();
    Some(ExpectationCheck {
        satisfied: expected.iter().all(|e| *e == actual),
        expected,
        actual,
    })
}

pub fn run_single(scenario: &str, program: &ScenarioProgram, config: &MachineConfig, opts: DedupOptions) -> RunReport {
    let config = config.normalized();
    let outcome = run(program, &config);
    RunReport {
        scenario: scenario.to_string(),
        model: config.model,
        seed: config.seed,
        config,
        exit_code: outcome.exit_code(),
        dedup_key: outcome.dedup_key(opts),
        expectation: check(program, config.model, &outcome),
        outcome,
    }
}

/// Runs both models with the same seed and compares them.
pub fn run_differential(scenario: &str, program: &ScenarioProgram, config: &MachineConfig, opts: DedupOptions) -> DiffReport {
    let sb = run_single(scenario, program, &config.with_model(AliasingModel::StackedBorrows), opts);
    let tb = run_single(scenario, program, &config.with_model(AliasingModel::TreeBorrows), opts);
    DiffReport {
        scenario: scenario.to_string(),
        seed: config.seed,
        verdict: Verdict::compare(&sb.outcome, &tb.outcome),
        sb,
        tb,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub scenario: String,
    pub tags: Vec<String>,
    pub runs: Vec<RunReport>,
    /// Present when both models ran.
    pub verdict: Option<Verdict>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub scenarios: usize,
    pub entries: Vec<CorpusEntry>,
    /// Per model: outcome class (`pass`, `memory-leak`, `bug`, `unsupported`,
    /// `timeout`) to count.
    pub counts: BTreeMap<AliasingModel, BTreeMap<String, usize>>,
    /// Dedup groups over every run that did not pass cleanly.
    pub groups: Vec<DedupGroup>,
    /// `scenario [model]: expected X, got Y` for every missed expectation.
    pub mismatches: Vec<String>,
}

impl CorpusSummary {
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.mismatches.is_empty())
    }
}

fn outcome_class(o: &Outcome) -> &'static str {
    use crate::diagnostics::Classification::*;
    match o.classification {
        Pass if o.leaks.is_empty() => "pass",
        Pass => "memory-leak",
        Bug(_) => "bug",
        Unsupported => "unsupported",
        Timeout => "timeout",
    }
}

/// Scenario files under `dir`, recursively, in path order.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let mut out = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        let io = |error| LoadError::Io { path: d.display().to_string(), error };
        for entry in fs::read_dir(&d).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.is_dir() {
                pending.push(path);
            } else if path.extension().is_some_and(|e| e == SCENARIO_EXTENSION) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Runs every scenario under `dir` with each selected model. Scenarios run
/// in parallel; the summary is ordered by path.
pub fn run_corpus(
    dir: &Path,
    config: &MachineConfig,
    models: ModelSelection,
    opts: DedupOptions,
) -> Result<CorpusSummary, LoadError> {
    let files = scenario_files(dir)?;
    let programs = files
        .iter()
        .map(|p| {
            let name = p.strip_prefix(dir).unwrap_or(p).display().to_string();
            load_scenario(p).map(|prog| (name, prog))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let entries: Vec<CorpusEntry> = programs
        .par_iter()
        .map(|(name, program)| {
            let runs: Vec<RunReport> = models
                .models()
                .iter()
                .map(|m| run_single(name, program, &config.with_model(*m), opts))
                .collect();
            let verdict = match runs.as_slice() {
                [sb, tb] => Some(Verdict::compare(&sb.outcome, &tb.outcome)),
                _ => None,
            };
            CorpusEntry { scenario: name.clone(), tags: program.tags.clone(), runs, verdict }
        })
        .collect();
    let mut counts: BTreeMap<AliasingModel, BTreeMap<String, usize>> = BTreeMap::new();
    let mut mismatches = Vec::new();
    let mut keyed = Vec::new();
    for e in &entries {
        for r in &e.runs {
            *counts.entry(r.model).or_default().entry(outcome_class(&r.outcome).to_string()).or_default() += 1;
            if let Some(x) = r.expectation.as_ref().filter(|x| !x.satisfied) {
                mismatches.push(format!(
                    "{} [{}]: expected {}, got {}",
                    e.scenario,
                    r.model,
                    x.expected.join(", "),
                    x.actual
                ));
            }
            if r.exit_code != 0 {
                keyed.push((format!("{} [{}]", e.scenario, r.model), r.dedup_key.clone()));
            }
        }
    }
    Ok(CorpusSummary {
        scenarios: entries.len(),
        groups: dedup(keyed),
        entries,
        counts,
        mismatches,
    })
}

pub fn render_run(r: &RunReport) -> String {
    let mut out = format!("scenario: {} (model {}, seed {})\n", r.scenario, r.model, r.seed);
    out.push_str(&render_outcome(&r.outcome));
    if let Some(x) = &r.expectation {
        let verdict = if x.satisfied { "ok" } else { "MISMATCH" };
        writeln!(out, "expected: {} ({verdict})", x.expected.join(", ")).unwrap();
    }
    out
}

pub fn render_diff(d: &DiffReport) -> String {
    let mut out = String::new();
    out.push_str(&render_run(&d.sb));
    out.push('\n');
    out.push_str(&render_run(&d.tb));
    writeln!(out, "\nverdict: {}", d.verdict).unwrap();
    out
}

pub fn render_corpus(s: &CorpusSummary) -> String {
    let mut out = String::new();
    let width = s.entries.iter().map(|e| e.scenario.len()).max().unwrap_or(0);
    for e in &s.entries {
        write!(out, "{:width$}", e.scenario).unwrap();
        for r in &e.runs {
            let mark = match &r.expectation {
                Some(x) if !x.satisfied => " !",
                _ => "",
            };
            write!(out, "  {}: {}{mark}", r.model, r.outcome.tag()).unwrap();
        }
        if let Some(v) = e.verdict {
            write!(out, "  {v}").unwrap();
        }
        out.push('\n');
    }
    writeln!(out, "\n{} scenarios", s.scenarios).unwrap();
    for (model, counts) in &s.counts {
        let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
        writeln!(out, "{model}: {}", parts.join(", ")).unwrap();
    }
    writeln!(out, "{} dedup groups", s.groups.len()).unwrap();
    for g in &s.groups {
        writeln!(out, "  [{}] {} ({} members)", g.key.exit_class, g.representative, g.members.len()).unwrap();
    }
    for m in &s.mismatches {
        writeln!(out, "mismatch: {m}").unwrap();
    }
    out
}
