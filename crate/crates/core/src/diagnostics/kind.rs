use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    ExpiredPermission,
    InsufficientPermission,
    ProtectedPermission,
    AccessOutOfBounds,
    UseAfterFree,
    DoubleFree,
    InvalidDealloc,
    UninitializedRead,
    MisalignedAccess,
    InvalidBinding,
    CrossLanguageDealloc,
    StrictProvenanceViolation,
    AssertionFailed,
    MemoryLeak,
}

/// Coarse grouping used in summaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Ownership,
    Typing,
    Allocation,
    Other,
}

impl DiagnosticKind {
    pub const ALL: [DiagnosticKind; 14] = [
        DiagnosticKind::ExpiredPermission,
        DiagnosticKind::InsufficientPermission,
        DiagnosticKind::ProtectedPermission,
        DiagnosticKind::AccessOutOfBounds,
        DiagnosticKind::UseAfterFree,
        DiagnosticKind::DoubleFree,
        DiagnosticKind::InvalidDealloc,
        DiagnosticKind::UninitializedRead,
        DiagnosticKind::MisalignedAccess,
        DiagnosticKind::InvalidBinding,
        DiagnosticKind::CrossLanguageDealloc,
        DiagnosticKind::StrictProvenanceViolation,
        DiagnosticKind::AssertionFailed,
        DiagnosticKind::MemoryLeak,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::ExpiredPermission => "expired-permission",
            DiagnosticKind::InsufficientPermission => "insufficient-permission",
            DiagnosticKind::ProtectedPermission => "protected-permission",
            DiagnosticKind::AccessOutOfBounds => "access-out-of-bounds",
            DiagnosticKind::UseAfterFree => "use-after-free",
            DiagnosticKind::DoubleFree => "double-free",
            DiagnosticKind::InvalidDealloc => "invalid-dealloc",
            DiagnosticKind::UninitializedRead => "uninitialized-read",
            DiagnosticKind::MisalignedAccess => "misaligned-access",
            DiagnosticKind::InvalidBinding => "invalid-binding",
            DiagnosticKind::CrossLanguageDealloc => "cross-language-dealloc",
            DiagnosticKind::StrictProvenanceViolation => "strict-provenance-violation",
            DiagnosticKind::AssertionFailed => "assertion-failed",
            DiagnosticKind::MemoryLeak => "memory-leak",
        }
    }

    pub fn category(self) -> Category {
        use DiagnosticKind::*;
        match self {
            ExpiredPermission | InsufficientPermission | ProtectedPermission | AccessOutOfBounds => {
                Category::Ownership
            }
            UninitializedRead | MisalignedAccess | InvalidBinding | StrictProvenanceViolation => {
                Category::Typing
            }
            UseAfterFree | DoubleFree | InvalidDealloc | CrossLanguageDealloc | MemoryLeak => {
                Category::Allocation
            }
            AssertionFailed => Category::Other,
        }
    }

    /// Kinds produced by an aliasing model rather than by plain memory checks.
    pub fn is_aliasing(self) -> bool {
        matches!(
            self,
            DiagnosticKind::ExpiredPermission
                | DiagnosticKind::InsufficientPermission
                | DiagnosticKind::ProtectedPermission
        )
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiagnosticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DiagnosticKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown outcome `{s}`"))
    }
}
