use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Diagnostic, DiagnosticKind, Site};
use crate::borrows::TreeSnapshot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "class", content = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Pass,
    Bug(DiagnosticKind),
    Unsupported,
    Timeout,
}

impl Classification {
    pub fn is_bug(self) -> bool {
        matches!(self, Classification::Bug(_))
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Pass => f.write_str("pass"),
            Classification::Bug(k) => write!(f, "bug({k})"),
            Classification::Unsupported => f.write_str("unsupported"),
            Classification::Timeout => f.write_str("timeout"),
        }
    }
}

/// Permission tree captured by a `dump_borrows` statement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub site: Site,
    pub tree: TreeSnapshot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub classification: Classification,
    /// Empty exactly when the run did not end in a bug.
    pub diagnostics: Vec<Diagnostic>,
    pub leaks: Vec<Diagnostic>,
    /// Why the run stopped, for unsupported and timeout outcomes.
    pub reason: Option<String>,
    pub snapshots: Vec<Snapshot>,
    pub steps: u64,
    /// Stable hash of the thread interleaving.
    pub schedule: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.classification {
            Classification::Pass if self.leaks.is_empty() => 0,
            Classification::Pass => 4,
            Classification::Bug(_) => 1,
            Classification::Unsupported => 2,
            Classification::Timeout => 3,
        }
    }

    /// The first diagnostic, if the run failed.
    pub fn primary(&self) -> Option<&Diagnostic> {
        self.diagnostics.first()
    }

    /// Outcome tag as used by `expect` lines: a kind, `pass`, `memory-leak`,
    /// `unsupported` or `timeout`.
    pub fn tag(&self) -> String {
        match self.classification {
            Classification::Pass if !self.leaks.is_empty() => "memory-leak".into(),
            Classification::Bug(k) => k.to_string(),
            c => c.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Agree,
    SbOnlyViolation,
    TbOnlyViolation,
}

impl Verdict {
    pub fn compare(sb: &Outcome, tb: &Outcome) -> Verdict {
        match (sb.classification.is_bug(), tb.classification.is_bug()) {
            (true, false) => Verdict::SbOnlyViolation,
            (false, true) => Verdict::TbOnlyViolation,
            _ => Verdict::Agree,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Agree => "agree",
            Verdict::SbOnlyViolation => "sb-only-violation",
            Verdict::TbOnlyViolation => "tb-only-violation",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(c: Classification, leaks: usize) -> Outcome {
        Outcome {
            classification: c,
            diagnostics: Vec::new(),
            leaks: vec![Diagnostic::new(DiagnosticKind::MemoryLeak, "leak"); leaks],
            reason: None,
            snapshots: Vec::new(),
            steps: 0,
            schedule: String::new(),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(outcome(Classification::Pass, 0).exit_code(), 0);
        assert_eq!(outcome(Classification::Pass, 1).exit_code(), 4);
        assert_eq!(outcome(Classification::Bug(DiagnosticKind::UseAfterFree), 1).exit_code(), 1);
        assert_eq!(outcome(Classification::Unsupported, 0).exit_code(), 2);
        assert_eq!(outcome(Classification::Timeout, 0).exit_code(), 3);
    }

    #[test]
    fn verdicts() {
        let pass = outcome(Classification::Pass, 0);
        let bug = outcome(Classification::Bug(DiagnosticKind::AccessOutOfBounds), 0);
        assert_eq!(Verdict::compare(&bug, &pass), Verdict::SbOnlyViolation);
        assert_eq!(Verdict::compare(&pass, &bug), Verdict::TbOnlyViolation);
        assert_eq!(Verdict::compare(&bug, &bug), Verdict::Agree);
        assert_eq!(Verdict::compare(&pass, &pass), Verdict::Agree);
    }

    #[test]
    fn classification_json() {
        let s = serde_json::to_string(&Classification::Bug(DiagnosticKind::DoubleFree)).unwrap();
        assert_eq!(s, r#"{"class":"bug","kind":"double-free"}"#);
        assert_eq!(serde_json::to_string(&Classification::Pass).unwrap(), r#"{"class":"pass"}"#);
    }
}
