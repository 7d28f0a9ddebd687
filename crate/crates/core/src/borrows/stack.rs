//! Stacked Borrows: a per-location stack of granting items.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::snapshot::{SnapshotRow, TreeSnapshot};
use super::{AccessKind, ProvTag, RangeMap, RetagKind, RetagRequest, Tag};
use crate::diagnostics::{DiagResult, Diagnostic, DiagnosticKind, EventKind, HistoryEvent, Site};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grant {
    Unique,
    SharedReadWrite,
    SharedReadOnly,
}

impl Grant {
    fn allows(self, kind: AccessKind) -> bool {
        kind == AccessKind::Read || self != Grant::SharedReadOnly
    }
}

impl fmt::Display for Grant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grant::Unique => "Unique",
            Grant::SharedReadWrite => "SharedReadWrite",
            Grant::SharedReadOnly => "SharedReadOnly",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub tag: Tag,
    pub grant: Grant,
    pub protected: bool,
    /// Unique items above a read's granting item stay in place but can no
    /// longer be used.
    pub disabled: bool,
}

#[derive(Clone, Debug)]
struct TagInfo {
    label: String,
    /// Locations where the tag was ever pushed.
    granted: Vec<Range<u64>>,
    history: Vec<HistoryEvent>,
}

#[derive(Clone, Debug)]
pub struct SbStacks {
    stacks: RangeMap<Vec<Item>>,
    tags: BTreeMap<Tag, TagInfo>,
    size: u64,
}

/// What happened to the items of one stack during an access.
#[derive(Default)]
struct Effects {
    popped: Vec<Tag>,
    disabled: Vec<Tag>,
}

/// Index of the item that grants `kind` to `tag`. Wildcards prefer the
/// topmost exposed item.
fn granting_index(stack: &[Item], tag: ProvTag, kind: AccessKind, exposed: &BTreeSet<Tag>) -> Option<usize> {
    let usable = |i: &Item| !i.disabled && i.grant.allows(kind);
    match tag {
        ProvTag::Concrete(t) => stack.iter().rposition(|i| i.tag == t && usable(i)),
        ProvTag::Wildcard => stack
            .iter()
            .rposition(|i| usable(i) && exposed.contains(&i.tag))
            .or_else(|| stack.iter().rposition(usable)),
    }
}

impl SbStacks {
    pub fn new(base: Tag, size: u64, label: &str, site: Option<Site>) -> Self {
        let mut tags = BTreeMap::new();
        tags.insert(
            base,
            TagInfo {
                label: label.to_string(),
                granted: vec![0..size],
                history: vec![HistoryEvent {
                    tag: base.0,
                    label: label.to_string(),
                    event: EventKind::Created,
                    site,
                    detail: "allocation base, Unique".into(),
                    table: None,
                }],
            },
        );
        let base_item = Item { tag: base, grant: Grant::Unique, protected: false, disabled: false };
        SbStacks { stacks: RangeMap::new(size, vec![base_item]), tags, size }
    }

    pub fn contains(&self, tag: Tag) -> bool {
        self.tags.contains_key(&tag)
    }

    /// The item stack at `offset`, bottom first.
    pub fn stack(&self, offset: u64) -> &[Item] {
        self.stacks.get(offset)
    }

    fn label(&self, tag: Tag) -> &str {
        self.tags.get(&tag).map_or("?", |t| t.label.as_str())
    }

    fn history_of(&self, tag: Tag) -> Vec<HistoryEvent> {
        self.tags.get(&tag).map(|t| t.history.clone()).unwrap_or_default()
    }

    fn granted_at(&self, tag: Tag, offset: u64) -> bool {
        self.tags.get(&tag).is_some_and(|t| t.granted.iter().any(|r| r.contains(&offset)))
    }

    fn find_granting(
        &self,
        stack: &[Item],
        tag: ProvTag,
        kind: AccessKind,
        exposed: &BTreeSet<Tag>,
        offset: u64,
        accessor_label: &str,
    ) -> Result<usize, Box<Diagnostic>> {
        if let Some(idx) = granting_index(stack, tag, kind, exposed) {
            return Ok(idx);
        }
        match tag {
            ProvTag::Concrete(t) => {
                let (dkind, why) = if stack.iter().any(|i| i.tag == t && !i.disabled) {
                    (DiagnosticKind::InsufficientPermission, "only grants SharedReadOnly".to_string())
                } else if self.granted_at(t, offset) {
                    (
                        DiagnosticKind::ExpiredPermission,
                        "was removed from the borrow stack by an earlier access".to_string(),
                    )
                } else {
                    (
                        DiagnosticKind::AccessOutOfBounds,
                        "does not exist in the borrow stack for this location (outside the range it borrowed)"
                            .to_string(),
                    )
                };
                Err(Diagnostic::boxed(
                    dkind,
                    format!("{kind} access through {accessor_label} {t} at offset {offset} is forbidden: the tag {why}"),
                )
                .with_history(self.history_of(t)))
            }
            ProvTag::Wildcard => {
                let dkind = if kind == AccessKind::Write && stack.iter().any(|i| !i.disabled) {
                    DiagnosticKind::InsufficientPermission
                } else {
                    DiagnosticKind::ExpiredPermission
                };
                Err(Diagnostic::boxed(
                    dkind,
                    format!("{kind} access through a wildcard pointer at offset {offset}: no item grants it"),
                ))
            }
        }
    }

    fn apply(
        stack: &mut Vec<Item>,
        idx: usize,
        kind: AccessKind,
        effects: &mut Effects,
    ) -> Result<(), Tag> {
        match kind {
            AccessKind::Write => {
                let mut keep = idx + 1;
                if stack[idx].grant == Grant::SharedReadWrite {
                    while keep < stack.len() && stack[keep].grant == Grant::SharedReadWrite {
                        keep += 1;
                    }
                }
                if let Some(p) = stack[keep..].iter().find(|i| i.protected) {
                    return Err(p.tag);
                }
                while stack.len() > keep {
                    let item = stack.pop().expect("len checked");
                    if !effects.popped.contains(&item.tag) {
                        effects.popped.push(item.tag);
                    }
                }
            }
            AccessKind::Read => {
                if let Some(p) = stack[idx + 1..]
                    .iter()
                    .find(|i| i.grant == Grant::Unique && !i.disabled && i.protected)
                {
                    return Err(p.tag);
                }
                for item in &mut stack[idx + 1..] {
                    if item.grant == Grant::Unique && !item.disabled {
                        item.disabled = true;
                        if !effects.disabled.contains(&item.tag) {
                            effects.disabled.push(item.tag);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn access(
        &mut self,
        tag: ProvTag,
        range: Range<u64>,
        kind: AccessKind,
        exposed: &BTreeSet<Tag>,
        site: &Site,
    ) -> DiagResult<()> {
        let accessor = match tag {
            ProvTag::Concrete(t) => self.label(t).to_string(),
            ProvTag::Wildcard => "wildcard".to_string(),
        };
        // Validate every piece before mutating any.
        for (piece, stack) in self.stacks.iter_range(range.clone()) {
            let idx = self.find_granting(stack, tag, kind, exposed, piece.start, &accessor).map_err(|mut d| {
                d.location = Some(site.clone());
                d
            })?;
            let mut probe = stack.clone();
            if let Err(victim) = Self::apply(&mut probe, idx, kind, &mut Effects::default()) {
                let mut d = Diagnostic::boxed(
                    DiagnosticKind::ProtectedPermission,
                    format!(
                        "{kind} access through {accessor} at offset {} would remove protected {} {victim}",
                        piece.start,
                        self.label(victim)
                    ),
                )
                .with_history(self.history_of(victim));
                d.location = Some(site.clone());
                return Err(d);
            }
        }
        let mut effects = Effects::default();
        self.stacks.update(range, |stack| {
            let idx = granting_index(stack, tag, kind, exposed).expect("validated above");
            Self::apply(stack, idx, kind, &mut effects).expect("validated above");
        });
        for t in effects.popped {
            self.record(t, EventKind::Invalidated, site, format!("removed by {kind} access through {accessor}"));
        }
        for t in effects.disabled {
            self.record(t, EventKind::Invalidated, site, format!("disabled by {kind} access through {accessor}"));
        }
        Ok(())
    }

    fn record(&mut self, tag: Tag, event: EventKind, site: &Site, detail: String) {
        if let Some(info) = self.tags.get_mut(&tag) {
            info.history.push(HistoryEvent {
                tag: tag.0,
                label: info.label.clone(),
                event,
                site: Some(site.clone()),
                detail,
                table: None,
            });
        }
    }

    fn parent_grant(&self, parent: ProvTag, offset: u64) -> Option<Grant> {
        let stack = self.stacks.get(offset);
        match parent {
            ProvTag::Concrete(t) => stack.iter().rev().find(|i| i.tag == t && !i.disabled).map(|i| i.grant),
            ProvTag::Wildcard => stack.iter().rev().find(|i| !i.disabled).map(|i| i.grant),
        }
    }

    pub fn retag(&mut self, parent: ProvTag, req: RetagRequest<'_>, exposed: &BTreeSet<Tag>) -> DiagResult<ProvTag> {
        let range = req.range.start.min(self.size)..req.range.end.min(self.size);
        // Split the range into pieces inside and outside interior-mutable bytes.
        let mut pieces: Vec<(Range<u64>, bool)> = Vec::new();
        let mut cur = range.start;
        while cur < range.end {
            let in_cell = req.cell_ranges.iter().find(|c| c.contains(&cur));
            let end = match in_cell {
                Some(c) => c.end.min(range.end),
                None => req
                    .cell_ranges
                    .iter()
                    .filter(|c| c.start > cur)
                    .map(|c| c.start)
                    .min()
                    .unwrap_or(range.end)
                    .min(range.end),
            };
            pieces.push((cur..end, in_cell.is_some()));
            cur = end;
        }
        let mut pushes = Vec::new();
        for (piece, in_cell) in pieces {
            let (access, grant) = match req.kind {
                RetagKind::MutRef => (Some(AccessKind::Write), Grant::Unique),
                RetagKind::SharedRef if in_cell => (None, Grant::SharedReadWrite),
                RetagKind::SharedRef => (Some(AccessKind::Read), Grant::SharedReadOnly),
                RetagKind::Raw | RetagKind::Cell => match self.parent_grant(parent, piece.start) {
                    Some(Grant::SharedReadOnly) if !in_cell => (Some(AccessKind::Read), Grant::SharedReadOnly),
                    _ if in_cell => (None, Grant::SharedReadWrite),
                    _ => (Some(AccessKind::Write), Grant::SharedReadWrite),
                },
            };
            match access {
                Some(kind) => self.access(parent, piece.clone(), kind, exposed, &req.site)?,
                None => {
                    // Still requires the parent to be present.
                    for (p, stack) in self.stacks.iter_range(piece.clone()) {
                        let accessor = match parent {
                            ProvTag::Concrete(t) => self.label(t).to_string(),
                            ProvTag::Wildcard => "wildcard".into(),
                        };
                        self.find_granting(stack, parent, AccessKind::Read, exposed, p.start, &accessor)
                            .map_err(|mut d| {
                                d.location = Some(req.site.clone());
                                d
                            })?;
                    }
                }
            }
            pushes.push((piece, grant));
        }
        let item_grant = pushes.first().map(|p| p.1);
        for (piece, grant) in &pushes {
            let item = Item { tag: req.new_tag, grant: *grant, protected: req.protect, disabled: false };
            self.stacks.update(piece.clone(), |s| s.push(item));
        }
        let detail = match item_grant {
            Some(g) => format!("{g}{} over offsets {}..{}", if req.protect { ", protected" } else { "" }, range.start, range.end),
            None => "empty range".to_string(),
        };
        self.tags.insert(
            req.new_tag,
            TagInfo {
                label: req.label.clone(),
                granted: vec![range],
                history: vec![HistoryEvent {
                    tag: req.new_tag.0,
                    label: req.label,
                    event: EventKind::Created,
                    site: Some(req.site),
                    detail,
                    table: None,
                }],
            },
        );
        Ok(ProvTag::Concrete(req.new_tag))
    }

    pub fn end_protector(&mut self, tag: Tag, site: &Site) {
        let mut any = false;
        self.stacks.update(0..self.size, |s| {
            for i in s.iter_mut().filter(|i| i.tag == tag && i.protected) {
                i.protected = false;
                any = true;
            }
        });
        if any {
            self.record(tag, EventKind::ProtectorEnd, site, "function returned".into());
        }
    }

    pub fn dealloc_check(&self) -> DiagResult<()> {
        for (_, stack) in self.stacks.iter() {
            if let Some(item) = stack.iter().find(|i| i.protected) {
                return Err(Diagnostic::boxed(
                    DiagnosticKind::ProtectedPermission,
                    format!("deallocation would remove protected {} {}", self.label(item.tag), item.tag),
                )
                .with_history(self.history_of(item.tag)));
            }
        }
        Ok(())
    }

    /// The stack at `offset`, bottom item first.
    pub fn snapshot(&self, offset: u64) -> TreeSnapshot {
        let stack = self.stacks.get(offset);
        TreeSnapshot {
            offset,
            rows: stack
                .iter()
                .enumerate()
                .map(|(i, item)| SnapshotRow {
                    tag: item.tag.0,
                    prefix: if i + 1 == stack.len() { "└─".into() } else { "├─".into() },
                    label: self.label(item.tag).to_string(),
                    perm: if item.disabled { format!("{} (disabled)", item.grant) } else { item.grant.to_string() },
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Dialect;

    fn site() -> Site {
        Site::new(Dialect::Host, "main", 1)
    }

    fn retag(s: &mut SbStacks, parent: Tag, new: u64, kind: RetagKind, range: Range<u64>) -> DiagResult<ProvTag> {
        s.retag(
            ProvTag::Concrete(parent),
            RetagRequest {
                new_tag: Tag(new),
                kind,
                range,
                cell_ranges: &[],
                protect: false,
                label: format!("t{new}"),
                site: site(),
            },
            &BTreeSet::new(),
        )
    }

    #[test]
    fn offset_beyond_borrow_is_out_of_bounds() {
        let mut s = SbStacks::new(Tag(0), 8, "pair", None);
        retag(&mut s, Tag(0), 1, RetagKind::MutRef, 0..4).unwrap();
        retag(&mut s, Tag(1), 2, RetagKind::Raw, 0..4).unwrap();
        let e = s.access(ProvTag::Concrete(Tag(2)), 4..8, AccessKind::Write, &BTreeSet::new(), &site()).unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::AccessOutOfBounds);
    }

    #[test]
    fn popped_tag_is_expired() {
        let mut s = SbStacks::new(Tag(0), 4, "x", None);
        retag(&mut s, Tag(0), 1, RetagKind::MutRef, 0..4).unwrap();
        retag(&mut s, Tag(1), 2, RetagKind::Raw, 0..4).unwrap();
        retag(&mut s, Tag(0), 3, RetagKind::MutRef, 0..4).unwrap();
        let e = s.access(ProvTag::Concrete(Tag(2)), 0..4, AccessKind::Write, &BTreeSet::new(), &site()).unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::ExpiredPermission);
    }

    #[test]
    fn shared_read_only_cannot_write() {
        let mut s = SbStacks::new(Tag(0), 4, "x", None);
        retag(&mut s, Tag(0), 1, RetagKind::SharedRef, 0..4).unwrap();
        retag(&mut s, Tag(1), 2, RetagKind::Raw, 0..4).unwrap();
        assert_eq!(s.stack(0).last().unwrap().grant, Grant::SharedReadOnly);
        let e = s.access(ProvTag::Concrete(Tag(2)), 0..4, AccessKind::Write, &BTreeSet::new(), &site()).unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::InsufficientPermission);
    }

    #[test]
    fn wildcard_uses_exposed_item() {
        let mut s = SbStacks::new(Tag(0), 4, "x", None);
        retag(&mut s, Tag(0), 1, RetagKind::MutRef, 0..4).unwrap();
        retag(&mut s, Tag(1), 2, RetagKind::SharedRef, 0..4).unwrap();
        let exposed: BTreeSet<Tag> = [Tag(1)].into();
        s.access(ProvTag::Wildcard, 0..4, AccessKind::Write, &exposed, &site()).unwrap();
        // The write resolved to <1>, popping the shared item above it.
        assert_eq!(s.stack(0).iter().map(|i| i.tag).collect::<Vec<_>>(), vec![Tag(0), Tag(1)]);
    }

    #[test]
    fn read_disables_unique_above() {
        let mut s = SbStacks::new(Tag(0), 4, "x", None);
        retag(&mut s, Tag(0), 1, RetagKind::MutRef, 0..4).unwrap();
        s.access(ProvTag::Concrete(Tag(0)), 0..4, AccessKind::Read, &BTreeSet::new(), &site()).unwrap();
        assert!(s.stack(0)[1].disabled);
        let e = s.access(ProvTag::Concrete(Tag(1)), 0..4, AccessKind::Read, &BTreeSet::new(), &site()).unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::ExpiredPermission);
    }

    #[test]
    fn protected_item_blocks_pop_and_dealloc() {
        let mut s = SbStacks::new(Tag(0), 4, "x", None);
        s.retag(
            ProvTag::Concrete(Tag(0)),
            RetagRequest {
                new_tag: Tag(1),
                kind: RetagKind::MutRef,
                range: 0..4,
                cell_ranges: &[],
                protect: true,
                label: "arg".into(),
                site: site(),
            },
            &BTreeSet::new(),
        )
        .unwrap();
        assert_eq!(s.dealloc_check().unwrap_err().kind, DiagnosticKind::ProtectedPermission);
        let e = s.access(ProvTag::Concrete(Tag(0)), 0..4, AccessKind::Write, &BTreeSet::new(), &site()).unwrap_err();
        assert_eq!(e.kind, DiagnosticKind::ProtectedPermission);
        s.end_protector(Tag(1), &site());
        assert!(s.dealloc_check().is_ok());
    }

    #[test]
    fn empty_range_retag_is_a_no_op() {
        let mut s = SbStacks::new(Tag(0), 4, "x", None);
        assert_eq!(retag(&mut s, Tag(0), 1, RetagKind::MutRef, 2..2).unwrap(), ProvTag::Concrete(Tag(1)));
        assert_eq!(s.stack(0).len(), 1);
    }
}
