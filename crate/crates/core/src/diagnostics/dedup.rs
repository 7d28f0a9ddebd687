use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Classification, Diagnostic, Outcome};
use crate::ir::Dialect;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupOptions {
    /// Stop foreign fingerprints before the host call-site frame instead of
    /// including it.
    pub exclusive_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DedupKey {
    pub exit_class: String,
    pub log: String,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupGroup {
    pub key: DedupKey,
    pub representative: String,
    pub members: Vec<String>,
}

static ADDRESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"0x[0-9a-fA-F]+").unwrap());
static ALLOC_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"alloc\d+").unwrap());
static TAG_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<\d+>").unwrap());

/// Strips addresses, allocation ids and tag ids; keeps only the first line.
pub fn normalize_log(text: &str) -> String {
    let first = text.lines().next().unwrap_or("");
    let s = ADDRESS.replace_all(first, "0x_");
    let s = ALLOC_ID.replace_all(&s, "alloc_");
    TAG_ID.replace_all(&s, "<_>").into_owned()
}

fn fingerprint(d: &Diagnostic, opts: DedupOptions) -> String {
    let located_in = d.location.as_ref().map(|s| s.dialect).or_else(|| d.trace.first().map(|s| s.dialect));
    match located_in {
        Some(Dialect::Foreign) => {
            let mut parts = Vec::new();
            for frame in &d.trace {
                if frame.dialect == Dialect::Host {
                    if !opts.exclusive_boundary {
                        parts.push(format!("{}:{}", frame.function, frame.line));
                    }
                    break;
                }
                parts.push(format!("{}:{}", frame.function, frame.line));
            }
            parts.join(" <- ")
        }
        Some(Dialect::Host) => d
            .trace
            .iter()
            .find(|f| f.dialect == Dialect::Host)
            .map(|f| f.function.to_string())
            .unwrap_or_default(),
        None => String::new(),
    }
}

pub fn normalize(d: &Diagnostic, opts: DedupOptions) -> DedupKey {
    DedupKey {
        exit_class: d.kind.to_string(),
        log: normalize_log(&d.message),
        fingerprint: fingerprint(d, opts),
    }
}

impl Outcome {
    pub fn dedup_key(&self, opts: DedupOptions) -> DedupKey {
        match (self.classification, self.primary(), self.leaks.first()) {
            (Classification::Bug(_), Some(d), _) => normalize(d, opts),
            (Classification::Pass, _, Some(leak)) => normalize(leak, opts),
            (c, _, _) => DedupKey {
                exit_class: c.to_string(),
                log: normalize_log(self.reason.as_deref().unwrap_or("")),
                fingerprint: String::new(),
            },
        }
    }
}

/// Groups `(name, key)` pairs by key. Groups are ordered by key; members keep
/// input order and the first member is the representative.
pub fn dedup<I>(items: I) -> Vec<DedupGroup>
where
    I: IntoIterator<Item = (String, DedupKey)>,
{
    let mut groups: BTreeMap<DedupKey, Vec<String>> = BTreeMap::new();
    for (name, key) in items {
        groups.entry(key).or_default().push(name);
    }
    groups
        .into_iter()
        .map(|(key, members)| DedupGroup {
            key,
            representative: members[0].clone(),
            members,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{DiagnosticKind, Site};

    fn diag(kind: DiagnosticKind, msg: &str, trace: Vec<Site>) -> Diagnostic {
        let mut d = Diagnostic::new(kind, msg);
        d.location = trace.first().cloned();
        d.trace = trace;
        d
    }

    #[test]
    fn addresses_and_ids_are_stripped() {
        assert_eq!(
            normalize_log("read via <12> at alloc3+0x4 (0x10010)\nmore"),
            "read via <_> at alloc_+0x_ (0x_)"
        );
    }

    #[test]
    fn foreign_fingerprint_includes_call_site() {
        let t = |line| {
            vec![
                Site::new(Dialect::Foreign, "compress", 4),
                Site::new(Dialect::Host, "main", line),
                Site::new(Dialect::Host, "outer", 1),
            ]
        };
        let a = diag(DiagnosticKind::ExpiredPermission, "m", t(10));
        let b = diag(DiagnosticKind::ExpiredPermission, "m", t(12));
        let inclusive = DedupOptions::default();
        assert_ne!(normalize(&a, inclusive), normalize(&b, inclusive));
        assert_eq!(normalize(&a, inclusive).fingerprint, "compress:4 <- main:10");
        let exclusive = DedupOptions { exclusive_boundary: true };
        assert_eq!(normalize(&a, exclusive), normalize(&b, exclusive));
    }

    #[test]
    fn host_fingerprint_is_innermost_function() {
        let a = diag(
            DiagnosticKind::UseAfterFree,
            "read of alloc4 at 0x10020",
            vec![Site::new(Dialect::Host, "f", 3), Site::new(Dialect::Host, "main", 9)],
        );
        let b = diag(
            DiagnosticKind::UseAfterFree,
            "read of alloc7 at 0x10040",
            vec![Site::new(Dialect::Host, "f", 5), Site::new(Dialect::Host, "main", 2)],
        );
        assert_eq!(normalize(&a, DedupOptions::default()), normalize(&b, DedupOptions::default()));
    }

    #[test]
    fn grouping_is_a_partition_and_idempotent() {
        let k = |c: &str| DedupKey { exit_class: c.into(), log: String::new(), fingerprint: String::new() };
        let items = vec![("a".to_string(), k("x")), ("b".into(), k("y")), ("c".into(), k("x"))];
        let groups = dedup(items.clone());
        assert_eq!(groups.len(), 2);
        assert_eq!(groups.iter().map(|g| g.members.len()).sum::<usize>(), 3);
        assert_eq!(groups[0].members, vec!["a", "c"]);
        let again = dedup(groups.iter().map(|g| (g.representative.clone(), g.key.clone())));
        assert_eq!(
            again.iter().map(|g| (&g.key, &g.representative)).collect::<Vec<_>>(),
            groups.iter().map(|g| (&g.key, &g.representative)).collect::<Vec<_>>()
        );
    }
}
