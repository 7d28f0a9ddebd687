//! Aliasing models: Tree Borrows and Stacked Borrows behind one per-allocation
//! tracker interface.

mod range_map;
mod snapshot;
pub mod stack;
pub mod tree;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use range_map::RangeMap;
pub use snapshot::{SnapshotRow, TreeSnapshot};
pub use stack::{Grant, SbStacks};
pub use tree::{LocState, Permission, Relation, TbTree};

use crate::diagnostics::{DiagResult, Site};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AliasingModel {
    #[serde(rename = "tb")]
    TreeBorrows,
    #[serde(rename = "sb")]
    StackedBorrows,
}

impl AliasingModel {
    pub fn short(self) -> &'static str {
        match self {
            AliasingModel::TreeBorrows => "tb",
            AliasingModel::StackedBorrows => "sb",
        }
    }
}

impl fmt::Display for AliasingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for AliasingModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tb" => Ok(AliasingModel::TreeBorrows),
            "sb" => Ok(AliasingModel::StackedBorrows),
            other => Err(format!("unknown aliasing model `{other}` (expected tb or sb)")),
        }
    }
}

/// Identifier of a pointer's capability, unique across a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tag(pub u64);

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

/// The tag side of a pointer's provenance, as seen by a tracker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProvTag {
    Concrete(Tag),
    Wildcard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RetagKind {
    MutRef,
    SharedRef,
    /// Reference-to-raw cast.
    Raw,
    /// Pointer obtained from a cell without borrowing it.
    Cell,
}

/// Everything a retag needs besides the parent provenance.
#[derive(Clone, Debug)]
pub struct RetagRequest<'a> {
    pub new_tag: Tag,
    pub kind: RetagKind,
    /// Pointee bytes, relative to the allocation start.
    pub range: Range<u64>,
    /// Interior-mutable bytes, relative to the allocation start.
    pub cell_ranges: &'a [Range<u64>],
    pub protect: bool,
    pub label: String,
    pub site: Site,
}

/// Borrow-tracker state of one allocation.
#[derive(Clone, Debug)]
pub enum Tracker {
    Tree(TbTree),
    Stacks(SbStacks),
}

impl Tracker {
    pub fn new(model: AliasingModel, size: u64, base: Tag, label: &str, site: Option<Site>) -> Self {
        match model {
            AliasingModel::TreeBorrows => Tracker::Tree(TbTree::new(base, size, label, site)),
            AliasingModel::StackedBorrows => Tracker::Stacks(SbStacks::new(base, size, label, site)),
        }
    }

    /// Returns the provenance of the new pointer. Tree Borrows treats raw and
    /// cell retags as the identity.
    pub fn retag(
        &mut self,
        parent: ProvTag,
        req: RetagRequest<'_>,
        exposed: &BTreeSet<Tag>,
    ) -> DiagResult<ProvTag> {
        match self {
            Tracker::Tree(t) => t.retag(parent, req),
            Tracker::Stacks(s) => s.retag(parent, req, exposed),
        }
    }

    pub fn access(
        &mut self,
        tag: ProvTag,
        range: Range<u64>,
        kind: AccessKind,
        exposed: &BTreeSet<Tag>,
        site: &Site,
    ) -> DiagResult<()> {
        match self {
            Tracker::Tree(t) => match tag {
                ProvTag::Concrete(tag) => t.access(tag, range, kind, site),
                ProvTag::Wildcard => Ok(()),
            },
            Tracker::Stacks(s) => s.access(tag, range, kind, exposed, site),
        }
    }

    pub fn end_protector(&mut self, tag: Tag, site: &Site) {
        match self {
            Tracker::Tree(t) => t.end_protector(tag, site),
            Tracker::Stacks(s) => s.end_protector(tag, site),
        }
    }

    pub fn dealloc_check(&self) -> DiagResult<()> {
        match self {
            Tracker::Tree(t) => t.dealloc_check(),
            Tracker::Stacks(s) => s.dealloc_check(),
        }
    }

    /// Permissions at `offset`: the subtree below `tag` (TB) or the item
    /// stack (SB).
    pub fn snapshot(&self, tag: ProvTag, offset: u64) -> TreeSnapshot {
        match self {
            Tracker::Tree(t) => match tag {
                ProvTag::Concrete(tag) => t.snapshot(tag, offset),
                ProvTag::Wildcard => t.snapshot(t.root(), offset),
            },
            Tracker::Stacks(s) => s.snapshot(offset),
        }
    }

    pub fn has_tag(&self, tag: Tag) -> bool {
        match self {
            Tracker::Tree(t) => t.contains(tag),
            Tracker::Stacks(s) => s.contains(tag),
        }
    }
}
