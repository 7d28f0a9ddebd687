//! Table-style rendering of permission trees and item stacks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub tag: u64,
    /// Box-drawing prefix, e.g. `└┬` or ` ├─`.
    pub prefix: String,
    pub label: String,
    pub perm: String,
}

/// Permissions of a set of tags at one location.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub offset: u64,
    pub rows: Vec<SnapshotRow>,
}

impl TreeSnapshot {
    pub fn render(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{} {}: {}", r.prefix, r.label, r.perm))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Renders `after`, writing `old → new` for every tag whose permission
    /// differs from `before`.
    pub fn render_transition(before: &TreeSnapshot, after: &TreeSnapshot) -> String {
        let old: BTreeMap<u64, &str> = before.rows.iter().map(|r| (r.tag, r.perm.as_str())).collect();
        after
            .rows
            .iter()
            .map(|r| match old.get(&r.tag) {
                Some(o) if *o != r.perm => format!("{} {}: {o} → {}", r.prefix, r.label, r.perm),
                _ => format!("{} {}: {}", r.prefix, r.label, r.perm),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Builds the box-drawing prefixes for a tree given in pre-order as
/// `(depth, is_last_sibling, has_children)`.
pub(crate) fn tree_prefixes(shape: &[(usize, bool, bool)]) -> Vec<String> {
    // continuation[d] is the column drawn below depth-d nodes' parents.
    let mut continuation: Vec<&str> = Vec::new();
    let mut out = Vec::with_capacity(shape.len());
    for &(depth, last, has_children) in shape {
        continuation.truncate(depth);
        let mut p: String = continuation.concat();
        p.push(if last { '└' } else { '├' });
        p.push(if has_children { '┬' } else { '─' });
        out.push(p);
        continuation.push(if last { " " } else { "│" });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes_follow_table_style() {
        let p = tree_prefixes(&[(0, true, true), (1, false, false), (1, true, true), (2, true, false)]);
        assert_eq!(p, vec!["└┬", " ├─", " └┬", "  └─"]);
    }

    #[test]
    fn transition_rendering() {
        let row = |tag, prefix: &str, label: &str, perm: &str| SnapshotRow {
            tag,
            prefix: prefix.into(),
            label: label.into(),
            perm: perm.into(),
        };
        let before = TreeSnapshot {
            offset: 0,
            rows: vec![row(0, "└┬", "x", "Active"), row(1, " ├─", "y", "Reserved"), row(2, " └─", "z", "Reserved")],
        };
        let after = TreeSnapshot {
            offset: 0,
            rows: vec![row(0, "└┬", "x", "Active"), row(1, " ├─", "y", "Active"), row(2, " └─", "z", "Disabled")],
        };
        assert_eq!(
            TreeSnapshot::render_transition(&before, &after),
            "└┬ x: Active\n ├─ y: Reserved → Active\n └─ z: Reserved → Disabled"
        );
    }
}
