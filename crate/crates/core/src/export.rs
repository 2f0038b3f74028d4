//! Text renderings of a model: topology graph (DOT), swimlane activity view,
//! and a timed sequence view of a completed simulation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::model::{Params, ProcessGraph, Rank};
use crate::parser::{Model, Node, NodeKind, SendKind, TaskCosts};
use crate::simulate::{EventKind, Trace};

/// Every stereotype token an export may contain.
pub const STEREOTYPES: [&str; 11] = [
    "<<action+>>",
    "<<subactivity+>>",
    "<<bsend+>>",
    "<<nbsend+>>",
    "<<collective+>>",
    "<<synchronous>>",
    "<<asynchronous>>",
    "<<create>>",
    "<<destroy>>",
    "<<controller>>",
    "<<actor>>",
];

fn dot_quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            _ => q.push(c),
        }
    }
    q.push('"');
    q
}

/// Role name per rank under `params`; `?` for unassigned ranks.
fn rank_names(m: &Model, params: &Params, p: usize) -> Vec<String> {
    let owners = m.rank_roles(params, p).unwrap_or_else(|_| vec![None; p]);
    owners.iter().map(|o| o.map_or_else(|| "?".to_string(), |i| m.roles[i].name.clone())).collect()
}

/// Undirected DOT graph: one node per rank, one edge per adjacent pair. Edges that
/// carry point-to-point or task pool messages are labeled with the size expressions.
pub fn export_topology_dot(g: &ProcessGraph, m: &Model) -> String {
    let p = g.len();
    let names = rank_names(m, &m.params, p);
    let sizes = message_sizes(m, &m.params, p);
    let mut out = format!("graph {} {{\n  node [shape=box];\n", dot_quote(&m.name));
    for (r, name) in names.iter().enumerate() {
        let _ = writeln!(out, "  n{r} [label={}];", dot_quote(&format!("P{r}:{name}")));
    }
    for (u, v) in g.edges() {
        match sizes.get(&(u, v)) {
            Some(set) => {
                let label: Vec<&str> = set.iter().map(String::as_str).collect();
                let _ = writeln!(out, "  n{u} -- n{v} [label={}];", dot_quote(&label.join(", ")));
            }
            None => {
                let _ = writeln!(out, "  n{u} -- n{v};");
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Size expressions of messages per unordered rank pair, from the flows.
fn message_sizes(m: &Model, params: &Params, p: usize) -> BTreeMap<(Rank, Rank), BTreeSet<String>> {
    let owners = m.rank_roles(params, p).unwrap_or_else(|_| vec![None; p]);
    let mut workers = Vec::new();
    let mut pools: Vec<(Rank, String, String)> = Vec::new();
    let mut out: BTreeMap<(Rank, Rank), BTreeSet<String>> = BTreeMap::new();
    let mut add = |a: Rank, b: Rank, label: String| {
        if a != b {
            out.entry((a.min(b), a.max(b))).or_default().insert(label);
        }
    };
    for (r, owner) in owners.iter().enumerate() {
        let Some(i) = owner else { continue };
        crate::parser::walk(&m.roles[*i].flow, &mut |n| match &n.kind {
            NodeKind::Send { to, size, .. } => {
                for d in m.resolve_target(to, params, r).unwrap_or_default() {
                    add(r, d, size.to_string());
                }
            }
            NodeKind::Taskpool { payload, result, .. } => pools.push((r, payload.to_string(), result.to_string())),
            NodeKind::Workerloop => workers.push(r),
            _ => {}
        });
    }
    for (master, payload, result) in pools {
        for &w in &workers {
            add(master, w, payload.clone());
            add(master, w, result.clone());
        }
    }
    out
}

/// One lane per role, one line per node tagged with its stereotype.
pub fn export_swimlane(m: &Model) -> String {
    let mut out = format!("swimlane {}\n", dot_quote(&m.name));
    for role in &m.roles {
        let ranks = match role.ranks.resolve(&m.params) {
            Ok(r) if r.start() == r.end() => format!("rank {}", r.start()),
            Ok(r) => format!("ranks {}..{}", r.start(), r.end()),
            Err(_) => "ranks ?".to_string(),
        };
        let _ = writeln!(out, "lane {} ({ranks})", role.name);
        let mut group = 0;
        lane_flow(&mut out, &role.flow, 1, &mut group);
    }
    out
}

fn lane_flow(out: &mut String, flow: &[Node], depth: usize, group: &mut usize) {
    let indent = "  ".repeat(depth);
    for n in flow {
        let line = match &n.kind {
            NodeKind::Action { name, cost } => format!("<<action+>> {} cost {cost}", dot_quote(name)),
            NodeKind::Subactivity { name, .. } => format!("<<subactivity+>> {}", dot_quote(name)),
            NodeKind::Send { to, size, kind: SendKind::Blocking } => {
                format!("<<bsend+>> send to {} size {size}", target(to))
            }
            NodeKind::Send { to, size, kind: SendKind::Nonblocking { handle } } => {
                let h = handle.as_ref().map_or(String::new(), |h| format!(" as {h}"));
                format!("<<nbsend+>> send to {} size {size}{h}", target(to))
            }
            NodeKind::Recv { from, size } => format!("<<bsend+>> recv from {} size {size}", target(from)),
            NodeKind::Wait { handle } => format!("<<nbsend+>> wait {handle}"),
            NodeKind::Collective { kind, root, size } => {
                *group += 1;
                format!("<<collective+>> {} root {root} size {size} {{group G{group}}}", kind.as_str())
            }
            NodeKind::Loop { count, .. } => format!("[loop {count}]"),
            NodeKind::Taskpool { count, cost, policy, payload, result } => {
                let cost = match cost {
                    TaskCosts::Uniform(e) => e.to_string(),
                    TaskCosts::List(l) => format!("[{} costs]", l.len()),
                };
                format!(
                    "<<subactivity+>> taskpool count {count} cost {cost} policy {} payload {payload} result {result}",
                    policy.as_str()
                )
            }
            NodeKind::Workerloop => "<<subactivity+>> workerloop".to_string(),
        };
        let _ = writeln!(out, "{indent}{line}");
        if let Some(note) = &n.note {
            let _ = writeln!(out, "{indent}note: {note}");
        }
        match &n.kind {
            NodeKind::Loop { body, .. } => {
                lane_flow(out, body, depth + 1, group);
                let _ = writeln!(out, "{indent}[end loop]");
            }
            NodeKind::Subactivity { body, .. } => {
                lane_flow(out, body, depth + 1, group);
                let _ = writeln!(out, "{indent}[end subactivity]");
            }
            _ => {}
        }
    }
}

fn target(t: &crate::parser::Target) -> String {
    match &t.index {
        None => t.role.clone(),
        Some(e) => format!("{}.({e})", t.role),
    }
}

/// Lifelines and timed messages of a completed run.
///
/// Line count is exactly `messages + collectives + 2p + (p + 1)`, plus one when
/// collectives occur (the `MainProgram` lifeline).
pub fn export_sequence(trace: &Trace, m: &Model, params: &Params, p: usize) -> String {
    let names = rank_names(m, params, p);
    let collectives: Vec<_> = trace.of_kind(EventKind::CollectiveEnd).filter(|e| e.rank == 0).collect();
    let mut out = String::from("actor User <<actor>>\n");
    for (r, name) in names.iter().enumerate() {
        let _ = writeln!(out, "lifeline P{r}:{name} <<controller>>");
    }
    if !collectives.is_empty() {
        out.push_str("lifeline MainProgram <<controller>>\n");
    }

    let mut last = vec![0.0f64; p];
    for e in &trace.events {
        if e.rank < p {
            last[e.rank] = last[e.rank].max(e.time);
        }
    }
    // (time, class, order) keeps creates first and destroys last at equal times
    let mut body: Vec<(f64, u8, usize, String)> = Vec::new();
    for (r, &end) in last.iter().enumerate() {
        body.push((0.0, 0, r, format!("@{:.3} User -> P{r} : <<create>>", 0.0)));
        body.push((end, 2, r, format!("@{end:.3} User -> P{r} : <<destroy>>")));
    }
    for (i, e) in trace.of_kind(EventKind::RecvEnd).enumerate() {
        let d = &e.detail;
        let stereo = if d.synchronous == Some(true) { "<<synchronous>>" } else { "<<asynchronous>>" };
        body.push((
            e.time,
            1,
            i,
            format!(
                "@{:.3} P{} -> P{} : {}({}B) {stereo}",
                e.time,
                d.peer.unwrap_or(0),
                e.rank,
                d.label.as_deref().unwrap_or("msg"),
                d.bytes.unwrap_or(0.0)
            ),
        ));
    }
    let starts: Vec<_> = trace.of_kind(EventKind::CollectiveStart).filter(|e| e.rank == 0).collect();
    for (i, e) in collectives.iter().enumerate() {
        let bytes = starts.get(i).and_then(|s| s.detail.bytes).unwrap_or(0.0);
        body.push((
            e.time,
            1,
            usize::MAX / 2 + i,
            format!(
                "@{:.3} MainProgram -> P* : {}({}B) root P{} <<synchronous>>",
                e.time,
                e.detail.label.as_deref().unwrap_or("collective"),
                bytes,
                e.detail.peer.unwrap_or(0)
            ),
        ));
    }
    body.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (.., line) in body {
        out.push_str(&line);
        out.push('\n');
    }
    out
}
