//! Tree Borrows: one node per tag, per-location permissions, child/foreign
//! transitions.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::snapshot::{tree_prefixes, SnapshotRow, TreeSnapshot};
use super::{AccessKind, ProvTag, RangeMap, RetagKind, RetagRequest, Tag};
use crate::diagnostics::{DiagResult, Diagnostic, DiagnosticKind, EventKind, HistoryEvent, Site};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Permission {
    Reserved,
    /// Interior-mutable Reserved; tolerates foreign writes.
    ReservedIM,
    Active,
    Frozen,
    Disabled,
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Permission::Reserved => "Reserved",
            Permission::ReservedIM => "Reserved*",
            Permission::Active => "Active",
            Permission::Frozen => "Frozen",
            Permission::Disabled => "Disabled",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    /// The access goes through this node or one of its descendants.
    Child,
    Foreign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionError {
    Expired,
    Insufficient,
}

/// The per-location transition table.
pub fn transition(perm: Permission, rel: Relation, kind: AccessKind) -> Result<Permission, TransitionError> {
    use AccessKind::*;
    use Permission::*;
    use Relation::*;
    match (rel, kind, perm) {
        (Child, _, Disabled) => Err(TransitionError::Expired),
        (Child, Read, p) => Ok(p),
        (Child, Write, Frozen) => Err(TransitionError::Insufficient),
        (Child, Write, _) => Ok(Active),
        (Foreign, Read, Active) => Ok(Frozen),
        (Foreign, Read, p) => Ok(p),
        (Foreign, Write, Reserved) => Ok(Disabled),
        (Foreign, Write, ReservedIM) => Ok(ReservedIM),
        // Other formulations disable here; the narrative this follows freezes.
        (Foreign, Write, Active) => Ok(Frozen),
        (Foreign, Write, Frozen | Disabled) => Ok(Disabled),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocState {
    pub perm: Permission,
    /// Set by the first child access; purely informational here because
    /// transitions apply to every location.
    pub initialized: bool,
}

#[derive(Clone, Debug)]
struct Node {
    parent: Option<Tag>,
    children: Vec<Tag>,
    protected: bool,
    label: String,
    locs: RangeMap<LocState>,
    history: Vec<HistoryEvent>,
}

#[derive(Clone, Debug)]
pub struct TbTree {
    nodes: BTreeMap<Tag, Node>,
    root: Tag,
    size: u64,
}

struct Change {
    node: Tag,
    range: Range<u64>,
    old: Permission,
    new: Permission,
}

impl TbTree {
    pub fn new(root: Tag, size: u64, label: &str, site: Option<Site>) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            root,
            Node {
                parent: None,
                children: Vec::new(),
                protected: false,
                label: label.to_string(),
                locs: RangeMap::new(size, LocState { perm: Permission::Active, initialized: true }),
                history: vec![HistoryEvent {
                    tag: root.0,
                    label: label.to_string(),
                    event: EventKind::Created,
                    site,
                    detail: "allocation root, Active".into(),
                    table: None,
                }],
            },
        );
        TbTree { nodes, root, size }
    }

    pub fn root(&self) -> Tag {
        self.root
    }

    pub fn contains(&self, tag: Tag) -> bool {
        self.nodes.contains_key(&tag)
    }

    pub fn parent(&self, tag: Tag) -> Option<Tag> {
        self.nodes.get(&tag).and_then(|n| n.parent)
    }

    pub fn is_protected(&self, tag: Tag) -> bool {
        self.nodes.get(&tag).is_some_and(|n| n.protected)
    }

    pub fn state(&self, tag: Tag, offset: u64) -> Option<LocState> {
        self.nodes.get(&tag).map(|n| *n.locs.get(offset))
    }

    pub fn label(&self, tag: Tag) -> &str {
        self.nodes.get(&tag).map_or("?", |n| n.label.as_str())
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.nodes.keys().copied()
    }

    fn ancestors_or_self(&self, tag: Tag) -> Vec<Tag> {
        let mut out = vec![tag];
        let mut cur = tag;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Whether an access through `accessor` is a child access for `node`.
    pub fn relation(&self, node: Tag, accessor: Tag) -> Relation {
        if self.ancestors_or_self(accessor).contains(&node) {
            Relation::Child
        } else {
            Relation::Foreign
        }
    }

    fn common_ancestor(&self, a: Tag, b: Tag) -> Tag {
        let up = self.ancestors_or_self(a);
        self.ancestors_or_self(b).into_iter().find(|t| up.contains(t)).unwrap_or(self.root)
    }

    pub fn retag(&mut self, parent: ProvTag, req: RetagRequest<'_>) -> DiagResult<ProvTag> {
        let default = match req.kind {
            RetagKind::Raw | RetagKind::Cell => return Ok(parent),
            RetagKind::MutRef => Permission::Reserved,
            RetagKind::SharedRef => Permission::Frozen,
        };
        let parent_tag = match parent {
            ProvTag::Concrete(t) => t,
            ProvTag::Wildcard => self.root,
        };
        if !self.nodes.contains_key(&parent_tag) {
            return Err(Diagnostic::boxed(
                DiagnosticKind::AccessOutOfBounds,
                format!("retag from tag {parent_tag} which does not belong to this allocation"),
            ));
        }
        let mut locs = RangeMap::new(self.size, LocState { perm: default, initialized: false });
        for r in req.cell_ranges {
            locs.set(r.clone(), LocState { perm: Permission::ReservedIM, initialized: false });
        }
        let first = *locs.get(req.range.start);
        let detail = format!(
            "{} under {}{}",
            first.perm,
            self.label(parent_tag),
            if req.protect { ", protected" } else { "" }
        );
        self.nodes.get_mut(&parent_tag).expect("checked").children.push(req.new_tag);
        self.nodes.insert(
            req.new_tag,
            Node {
                parent: Some(parent_tag),
                children: Vec::new(),
                protected: req.protect,
                label: req.label.clone(),
                locs,
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

    pub fn access(&mut self, tag: Tag, range: Range<u64>, kind: AccessKind, site: &Site) -> DiagResult<()> {
        if !self.nodes.contains_key(&tag) {
            return Err(Diagnostic::boxed(
                DiagnosticKind::AccessOutOfBounds,
                format!("{kind} access through tag {tag} which does not belong to this allocation"),
            ));
        }
        let children = self.ancestors_or_self(tag);
        let mut changes = Vec::new();
        for (&node_tag, node) in &self.nodes {
            let rel = if children.contains(&node_tag) { Relation::Child } else { Relation::Foreign };
            for (piece, st) in node.locs.iter_range(range.clone()) {
                let new = match transition(st.perm, rel, kind) {
                    Ok(p) => p,
                    Err(e) => return Err(self.transition_error(e, node_tag, tag, kind, piece, site)),
                };
                if new == Permission::Disabled && st.perm != Permission::Disabled && node.protected {
                    return Err(self.protected_error(node_tag, tag, kind, piece, site));
                }
                if new != st.perm {
                    changes.push(Change { node: node_tag, range: piece, old: st.perm, new });
                }
            }
        }

        // Tables for transitions that take a permission away, captured before
        // and after the access at the first affected location.
        let mut tables = Vec::new();
        let mut seen = Vec::new();
        for c in &changes {
            if matches!(c.new, Permission::Disabled | Permission::Frozen) && !seen.contains(&c.node) {
                seen.push(c.node);
                let lca = self.common_ancestor(tag, c.node);
                tables.push((c.node, lca, c.range.start, self.snapshot(lca, c.range.start)));
            }
        }

        for (&node_tag, node) in self.nodes.iter_mut() {
            let rel = if children.contains(&node_tag) { Relation::Child } else { Relation::Foreign };
            node.locs.update(range.clone(), |st| {
                st.perm = transition(st.perm, rel, kind).expect("checked above");
                if rel == Relation::Child {
                    st.initialized = true;
                }
            });
        }

        let accessor = self.label(tag).to_string();
        let mut recorded = Vec::new();
        for c in &changes {
            if recorded.contains(&c.node) {
                continue;
            }
            recorded.push(c.node);
            let rel = if children.contains(&c.node) { "child" } else { "foreign" };
            let table = tables
                .iter()
                .find(|t| t.0 == c.node)
                .map(|(_, lca, off, before)| TreeSnapshot::render_transition(before, &self.snapshot(*lca, *off)));
            let event = if c.new == Permission::Disabled { EventKind::Invalidated } else { EventKind::Transition };
            let node = self.nodes.get_mut(&c.node).expect("changed node exists");
            node.history.push(HistoryEvent {
                tag: c.node.0,
                label: node.label.clone(),
                event,
                site: Some(site.clone()),
                detail: format!(
                    "{} → {} at offsets {}..{} by {rel} {kind} through {accessor} {tag}",
                    c.old, c.new, c.range.start, c.range.end
                ),
                table,
            });
        }
        Ok(())
    }

    fn history_of(&self, tags: &[Tag]) -> Vec<HistoryEvent> {
        let mut out = Vec::new();
        for t in tags {
            if let Some(n) = self.nodes.get(t) {
                out.extend(n.history.iter().cloned());
            }
        }
        out
    }

    fn transition_error(
        &self,
        e: TransitionError,
        node: Tag,
        accessor: Tag,
        kind: AccessKind,
        piece: Range<u64>,
        site: &Site,
    ) -> Box<Diagnostic> {
        let (dkind, why) = match e {
            TransitionError::Expired => (DiagnosticKind::ExpiredPermission, "is Disabled"),
            TransitionError::Insufficient => (DiagnosticKind::InsufficientPermission, "is Frozen (read-only)"),
        };
        let via = if node == accessor {
            String::new()
        } else {
            format!(" via its parent {} {node}", self.label(node))
        };
        let mut tags = vec![node];
        if node != accessor {
            tags.push(accessor);
        }
        let mut d = Diagnostic::boxed(
            dkind,
            format!(
                "{kind} access through {} {accessor} at offsets {}..{} is forbidden: the permission{via} {why}",
                self.label(accessor),
                piece.start,
                piece.end
            ),
        )
        .with_history(self.history_of(&tags));
        d.location = Some(site.clone());
        d
    }

    fn protected_error(&self, node: Tag, accessor: Tag, kind: AccessKind, piece: Range<u64>, site: &Site) -> Box<Diagnostic> {
        let mut d = Diagnostic::boxed(
            DiagnosticKind::ProtectedPermission,
            format!(
                "foreign {kind} access through {} {accessor} at offsets {}..{} would disable protected {} {node}",
                self.label(accessor),
                piece.start,
                piece.end,
                self.label(node)
            ),
        )
        .with_history(self.history_of(&[node, accessor]));
        d.location = Some(site.clone());
        d
    }

    pub fn end_protector(&mut self, tag: Tag, site: &Site) {
        if let Some(n) = self.nodes.get_mut(&tag) {
            if n.protected {
                n.protected = false;
                n.history.push(HistoryEvent {
                    tag: tag.0,
                    label: n.label.clone(),
                    event: EventKind::ProtectorEnd,
                    site: Some(site.clone()),
                    detail: "function returned".into(),
                    table: None,
                });
            }
        }
    }

    pub fn dealloc_check(&self) -> DiagResult<()> {
        match self.nodes.iter().find(|(_, n)| n.protected) {
            None => Ok(()),
            Some((&tag, n)) => Err(Diagnostic::boxed(
                DiagnosticKind::ProtectedPermission,
                format!("deallocation would disable protected {} {tag}", n.label),
            )
            .with_history(self.history_of(&[tag]))),
        }
    }

    /// The subtree rooted at `top`, with permissions at `offset`.
    pub fn snapshot(&self, top: Tag, offset: u64) -> TreeSnapshot {
        let mut order: Vec<(Tag, usize, bool)> = Vec::new();
        let mut stack = vec![(top, 0usize, true)];
        while let Some((t, depth, last)) = stack.pop() {
            let Some(n) = self.nodes.get(&t) else { continue };
            order.push((t, depth, last));
            let count = n.children.len();
            for (i, c) in n.children.iter().enumerate().rev() {
                stack.push((*c, depth + 1, i + 1 == count));
            }
        }
        let shape: Vec<_> = order
            .iter()
            .map(|(t, d, last)| (*d, *last, !self.nodes[t].children.is_empty()))
            .collect();
        let prefixes = tree_prefixes(&shape);
        TreeSnapshot {
            offset,
            rows: order
                .iter()
                .zip(prefixes)
                .map(|((t, _, _), prefix)| {
                    let n = &self.nodes[t];
                    SnapshotRow {
                        tag: t.0,
                        prefix,
                        label: n.label.clone(),
                        perm: n.locs.get(offset).perm.to_string(),
                    }
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Dialect;
    use Permission::*;

    fn site(line: u32) -> Site {
        Site::new(Dialect::Host, "main", line)
    }

    fn retag(t: &mut TbTree, parent: Tag, new: u64, kind: RetagKind, cells: &[Range<u64>], protect: bool, label: &str) -> Tag {
        match t
            .retag(
                ProvTag::Concrete(parent),
                RetagRequest {
                    new_tag: Tag(new),
                    kind,
                    range: 0..4,
                    cell_ranges: cells,
                    protect,
                    label: label.into(),
                    site: site(0),
                },
            )
            .unwrap()
        {
            ProvTag::Concrete(t) => t,
            ProvTag::Wildcard => panic!("wildcard"),
        }
    }

    #[test]
    fn table_matches_hand_derivation() {
        let cases = [
            (Reserved, Relation::Child, AccessKind::Read, Ok(Reserved)),
            (Frozen, Relation::Child, AccessKind::Read, Ok(Frozen)),
            (Disabled, Relation::Child, AccessKind::Read, Err(TransitionError::Expired)),
            (Reserved, Relation::Child, AccessKind::Write, Ok(Active)),
            (ReservedIM, Relation::Child, AccessKind::Write, Ok(Active)),
            (Frozen, Relation::Child, AccessKind::Write, Err(TransitionError::Insufficient)),
            (Disabled, Relation::Child, AccessKind::Write, Err(TransitionError::Expired)),
            (Active, Relation::Foreign, AccessKind::Read, Ok(Frozen)),
            (Reserved, Relation::Foreign, AccessKind::Read, Ok(Reserved)),
            (Reserved, Relation::Foreign, AccessKind::Write, Ok(Disabled)),
            (ReservedIM, Relation::Foreign, AccessKind::Write, Ok(ReservedIM)),
            (Active, Relation::Foreign, AccessKind::Write, Ok(Frozen)),
            (Frozen, Relation::Foreign, AccessKind::Write, Ok(Disabled)),
        ];
        for (p, rel, kind, want) in cases {
            assert_eq!(transition(p, rel, kind), want, "{p:?} {rel:?} {kind:?}");
        }
    }

    #[test]
    fn expired_permission_example() {
        let mut t = TbTree::new(Tag(0), 4, "x", None);
        let y = retag(&mut t, Tag(0), 1, RetagKind::MutRef, &[], false, "y");
        let z = retag(&mut t, Tag(0), 2, RetagKind::MutRef, &[], false, "z");
        assert_eq!(t.retag(ProvTag::Concrete(y), RetagRequest {
            new_tag: Tag(9),
            kind: RetagKind::Raw,
            range: 0..4,
            cell_ranges: &[],
            protect: false,
            label: "y".into(),
            site: site(3),
        }).unwrap(), ProvTag::Concrete(y));
        t.access(y, 0..4, AccessKind::Write, &site(5)).unwrap();
        assert_eq!(t.state(y, 0).unwrap().perm, Active);
        assert_eq!(t.state(z, 0).unwrap().perm, Disabled);
        let err = t.access(z, 0..4, AccessKind::Write, &site(6)).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::ExpiredPermission);
        assert_eq!(
            err.table().unwrap(),
            "└┬ x: Active\n ├─ y: Reserved → Active\n └─ z: Reserved → Disabled"
        );
    }

    #[test]
    fn cell_ranges_become_reserved_im() {
        let mut t = TbTree::new(Tag(0), 16, "s", None);
        let r = retag(&mut t, Tag(0), 1, RetagKind::MutRef, &[0..4], false, "r");
        assert_eq!(t.state(r, 0).unwrap().perm, ReservedIM);
        assert_eq!(t.state(r, 4).unwrap().perm, Reserved);
        t.access(Tag(0), 0..16, AccessKind::Write, &site(1)).unwrap();
        assert_eq!(t.state(r, 0).unwrap().perm, ReservedIM);
        assert_eq!(t.state(r, 8).unwrap().perm, Disabled);
    }

    #[test]
    fn protected_node_cannot_be_disabled() {
        let mut t = TbTree::new(Tag(0), 4, "x", None);
        let p = retag(&mut t, Tag(0), 1, RetagKind::MutRef, &[], true, "p");
        let err = t.access(Tag(0), 0..4, AccessKind::Write, &site(1)).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::ProtectedPermission);
        assert!(t.dealloc_check().is_err());
        t.end_protector(p, &site(2));
        assert!(t.dealloc_check().is_ok());
        t.access(Tag(0), 0..4, AccessKind::Write, &site(3)).unwrap();
        assert_eq!(t.state(p, 0).unwrap().perm, Disabled);
    }

    #[test]
    fn child_first_then_parent_write_freezes_child() {
        let mut t = TbTree::new(Tag(0), 4, "fs", None);
        let parent = retag(&mut t, Tag(0), 1, RetagKind::MutRef, &[], false, "r");
        let child = retag(&mut t, parent, 2, RetagKind::MutRef, &[], false, "child");
        t.access(child, 0..4, AccessKind::Write, &site(1)).unwrap();
        assert_eq!(t.state(parent, 0).unwrap().perm, Active);
        t.access(parent, 0..4, AccessKind::Write, &site(2)).unwrap();
        assert_eq!(t.state(child, 0).unwrap().perm, Frozen);
        let err = t.access(child, 0..4, AccessKind::Write, &site(3)).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::InsufficientPermission);
    }

    #[test]
    fn snapshot_shapes() {
        let mut t = TbTree::new(Tag(0), 4, "root", None);
        let a = retag(&mut t, Tag(0), 1, RetagKind::MutRef, &[], false, "a");
        retag(&mut t, a, 2, RetagKind::SharedRef, &[], false, "b");
        retag(&mut t, Tag(0), 3, RetagKind::MutRef, &[], false, "c");
        assert_eq!(
            t.snapshot(Tag(0), 0).render(),
            "└┬ root: Active\n ├┬ a: Reserved\n │└─ b: Frozen\n └─ c: Reserved"
        );
    }
}
