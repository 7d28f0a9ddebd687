//! Diagnostic taxonomy, outcomes, deduplication and rendering.

mod dedup;
mod kind;
mod outcome;
mod render;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dedup::{dedup, normalize, normalize_log, DedupGroup, DedupKey, DedupOptions};
pub use kind::{Category, DiagnosticKind};
pub use outcome::{Classification, Outcome, Snapshot, Verdict};
pub use render::{render_diagnostic, render_outcome};

use crate::ir::Dialect;
use crate::memory::AllocOrigin;

/// A statement position: which function, in which dialect, at which line.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub dialect: Dialect,
    pub function: Arc<str>,
    pub line: u32,
}

impl Site {
    pub fn new(dialect: Dialect, function: impl Into<Arc<str>>, line: u32) -> Self {
        Site {
            dialect,
            function: function.into(),
            line,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fn {}:{}", self.dialect, self.function, self.line)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Created,
    Transition,
    Invalidated,
    ProtectorEnd,
}

/// One entry of a tag's permission history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub tag: u64,
    pub label: String,
    pub event: EventKind,
    pub site: Option<Site>,
    pub detail: String,
    /// Permission table around the event, when one was captured.
    pub table: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationInfo {
    pub id: u32,
    pub label: String,
    pub origin: AllocOrigin,
    pub size: u64,
    pub created: Option<Site>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "DiagnosticRecord", from = "DiagnosticRecord")]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    /// Statement at which the error was detected.
    pub location: Option<Site>,
    /// Call stack at detection, innermost frame first, spanning both dialects.
    pub trace: Vec<Site>,
    pub history: Vec<HistoryEvent>,
    pub allocation: Option<AllocationInfo>,
    /// Simulated addresses involved; display only, never part of identity.
    pub addresses: Vec<u64>,
}

/// Serialized form of [`Diagnostic`]: the trace plus its per-dialect views.
#[derive(Serialize, Deserialize)]
struct DiagnosticRecord {
    kind: DiagnosticKind,
    message: String,
    location: Option<Site>,
    trace: Vec<Site>,
    #[serde(default)]
    host_trace: Vec<Site>,
    #[serde(default)]
    foreign_trace: Vec<Site>,
    history: Vec<HistoryEvent>,
    allocation: Option<AllocationInfo>,
    addresses: Vec<u64>,
}

impl From<Diagnostic> for DiagnosticRecord {
    fn from(d: Diagnostic) -> Self {
        DiagnosticRecord {
            host_trace: d.host_trace().into_iter().cloned().collect(),
            foreign_trace: d.foreign_trace().into_iter().cloned().collect(),
            kind: d.kind,
            message: d.message,
            location: d.location,
            trace: d.trace,
            history: d.history,
            allocation: d.allocation,
            addresses: d.addresses,
        }
    }
}

impl From<DiagnosticRecord> for Diagnostic {
    fn from(r: DiagnosticRecord) -> Self {
        Diagnostic {
            kind: r.kind,
            message: r.message,
            location: r.location,
            trace: r.trace,
            history: r.history,
            allocation: r.allocation,
            addresses: r.addresses,
        }
    }
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
            location: None,
            trace: Vec::new(),
            history: Vec::new(),
            allocation: None,
            addresses: Vec::new(),
        }
    }

    pub fn boxed(kind: DiagnosticKind, message: impl Into<String>) -> Box<Self> {
        Box::new(Self::new(kind, message))
    }

    pub fn with_history(mut self: Box<Self>, history: Vec<HistoryEvent>) -> Box<Self> {
        self.history = history;
        self
    }

    pub fn host_trace(&self) -> Vec<&Site> {
        self.trace.iter().filter(|s| s.dialect == Dialect::Host).collect()
    }

    pub fn foreign_trace(&self) -> Vec<&Site> {
        self.trace.iter().filter(|s| s.dialect == Dialect::Foreign).collect()
    }

    /// The table attached to the event that invalidated the offending tag,
    /// or the most recent table in the history.
    pub fn table(&self) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|e| e.event == EventKind::Invalidated && e.table.is_some())
            .or_else(|| self.history.iter().rev().find(|e| e.table.is_some()))
            .and_then(|e| e.table.as_deref())
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Every fallible engine operation reports through a boxed diagnostic.
pub type DiagResult<T> = Result<T, Box<Diagnostic>>;
