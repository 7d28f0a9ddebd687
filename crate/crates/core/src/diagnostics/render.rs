use std::fmt::Write;

use super::{Diagnostic, EventKind, Outcome};

fn indent(text: &str, by: &str) -> String {
    text.lines().map(|l| format!("{by}{l}\n")).collect()
}

pub fn render_diagnostic(d: &Diagnostic) -> String {
    let mut out = String::new();
    writeln!(out, "error[{}]: {}", d.kind, d.message.lines().next().unwrap_or("")).unwrap();
    for extra in d.message.lines().skip(1) {
        writeln!(out, "  {extra}").unwrap();
    }
    if let Some(loc) = &d.location {
        writeln!(out, "  --> {loc}").unwrap();
    }
    if !d.trace.is_empty() {
        out.push_str("  trace:\n");
        for (i, frame) in d.trace.iter().enumerate() {
            writeln!(out, "    {i}: {frame}").unwrap();
        }
    }
    if let Some(a) = &d.allocation {
        write!(out, "  allocation: {} ({}, {} bytes", a.label, a.origin, a.size).unwrap();
        if let Some(site) = &a.created {
            write!(out, ", created at {site}").unwrap();
        }
        out.push_str(")\n");
    }
    if !d.history.is_empty() {
        out.push_str("  history:\n");
        for e in &d.history {
            let what = match e.event {
                EventKind::Created => "created",
                EventKind::Transition => "changed",
                EventKind::Invalidated => "invalidated",
                EventKind::ProtectorEnd => "unprotected",
            };
            write!(out, "    {} <{}> {what}", e.label, e.tag).unwrap();
            if let Some(site) = &e.site {
                write!(out, " at {site}").unwrap();
            }
            if !e.detail.is_empty() {
                write!(out, ": {}", e.detail).unwrap();
            }
            out.push('\n');
            if let Some(table) = &e.table {
                out.push_str(&indent(table, "      "));
            }
        }
    }
    out
}

pub fn render_outcome(o: &Outcome) -> String {
    let mut out = String::new();
    writeln!(out, "outcome: {}", o.tag()).unwrap();
    if let Some(reason) = &o.reason {
        writeln!(out, "reason: {reason}").unwrap();
    }
    for d in &o.diagnostics {
        out.push_str(&render_diagnostic(d));
    }
    for leak in &o.leaks {
        out.push_str(&render_diagnostic(leak));
    }
    for snap in &o.snapshots {
        writeln!(out, "borrows at {}:", snap.site).unwrap();
        out.push_str(&indent(&snap.tree.render(), "  "));
    }
    writeln!(out, "steps: {}", o.steps).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{DiagnosticKind, HistoryEvent, Site};
    use crate::ir::Dialect;

    #[test]
    fn text_includes_history_table() {
        let mut d = Diagnostic::new(DiagnosticKind::ExpiredPermission, "write access through <3> is forbidden");
        d.location = Some(Site::new(Dialect::Host, "main", 6));
        d.history.push(HistoryEvent {
            tag: 3,
            label: "z".into(),
            event: EventKind::Invalidated,
            site: Some(Site::new(Dialect::Host, "main", 5)),
            detail: "Reserved → Disabled".into(),
            table: Some("└┬ x: Active\n └─ z: Reserved → Disabled".into()),
        });
        let text = render_diagnostic(&d);
        assert!(text.starts_with("error[expired-permission]"));
        assert!(text.contains("--> host fn main:6"));
        assert!(text.contains("z: Reserved → Disabled"));
    }
}
