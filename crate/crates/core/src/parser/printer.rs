use std::fmt::Write;

use super::ast::*;
use super::expr::{fmt_number, Expr};

/// Canonical text for `m`. Parsing the output yields a model equal to `m`.
pub fn print_model(m: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model {}", quote(&m.name));
    let args: Vec<String> = m.topology.args.iter().map(ToString::to_string).collect();
    let _ = writeln!(out, "topology {}({})", m.topology.kind.as_str(), args.join(", "));
    out.push_str("costs {\n");
    let _ = writeln!(out, "  t_startup = {}us", fmt_number(m.costs.t_startup));
    let _ = writeln!(out, "  t_byte = {}us", fmt_number(m.costs.t_byte));
    let _ = writeln!(out, "  hop_scaling = {}", m.costs.hop_scaling);
    let _ = writeln!(out, "  send_mode = {}", m.costs.send_mode.name());
    out.push_str("}\n");
    if !m.params.is_empty() {
        out.push_str("params {\n");
        for (k, v) in m.params.iter() {
            let _ = writeln!(out, "  {k} = {}", fmt_number(v));
        }
        out.push_str("}\n");
    }
    for role in &m.roles {
        let ranks = match &role.ranks {
            RankSpec::Single(e) => format!("rank {e}"),
            RankSpec::Range(a, b) => format!("ranks {a}..{b}"),
        };
        let _ = writeln!(out, "role {} on {ranks} {{", role.name);
        print_flow(&mut out, &role.flow, 1);
        out.push_str("}\n");
    }
    out
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            q.push('\\');
        }
        q.push(c);
    }
    q.push('"');
    q
}

fn target(t: &Target) -> String {
    match &t.index {
        None => t.role.clone(),
        Some(e @ (Expr::Num { unit: None, .. } | Expr::Var(_) | Expr::Me)) => format!("{}.{e}", t.role),
        Some(e) => format!("{}.({e})", t.role),
    }
}

fn print_flow(out: &mut String, flow: &[Node], depth: usize) {
    let indent = "  ".repeat(depth);
    for n in flow {
        let head = match &n.kind {
            NodeKind::Action { name, cost } => format!("action {} cost {cost}", quote(name)),
            NodeKind::Subactivity { name, .. } => format!("subactivity {} {{", quote(name)),
            NodeKind::Send { to, size, kind } => {
                let mode = match kind {
                    SendKind::Blocking => "blocking".to_string(),
                    SendKind::Nonblocking { handle: None } => "nonblocking".to_string(),
                    SendKind::Nonblocking { handle: Some(h) } => format!("nonblocking as {h}"),
                };
                format!("send to {} size {size} {mode}", target(to))
            }
            NodeKind::Recv { from, size } => format!("recv from {} size {size}", target(from)),
            NodeKind::Wait { handle } => format!("wait {handle}"),
            NodeKind::Collective { kind, root, size } => {
                format!("collective {} root {root} size {size}", kind.as_str())
            }
            NodeKind::Loop { count, .. } => format!("loop {count} {{"),
            NodeKind::Taskpool { count, cost, policy, payload, result } => {
                let cost = match cost {
                    TaskCosts::Uniform(e) => e.to_string(),
                    TaskCosts::List(list) => {
                        let items: Vec<String> = list.iter().map(ToString::to_string).collect();
                        format!("[{}]", items.join(", "))
                    }
                };
                format!(
                    "taskpool count {count} cost {cost} policy {} payload {payload} result {result}",
                    policy.as_str()
                )
            }
            NodeKind::Workerloop => "workerloop".to_string(),
        };
        out.push_str(&indent);
        out.push_str(&head);
        if let Some(note) = &n.note {
            out.push_str("  # ");
            out.push_str(note);
        }
        out.push('\n');
        if matches!(n.kind, NodeKind::Subactivity { .. } | NodeKind::Loop { .. }) {
            print_flow(out, n.children(), depth + 1);
            out.push_str(&indent);
            out.push_str("}\n");
        }
    }
}
