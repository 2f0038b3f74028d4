//! Static semantic checks run on a parsed model before simulation.
//!
//! Point-to-point matching is count-based per ordered rank pair and only
//! applies to loop-free flows; flows with loops or task pools get a
//! "matching deferred to simulation" warning and are checked at run time.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::model::{build_topology, Params, ProcessGraph, Rank, TopologyKind, TopologySpec};
use crate::parser::{eval_expr, CollectiveKind, Diagnostic, Model, Node, NodeKind, Pos, SendKind, Severity, TaskCosts};

/// Warning text attached to flows whose matching is left to the simulator.
/// Collective kind, root role and position, in program order.
type CollectiveSeq<'a> = Vec<(CollectiveKind, &'a str, Pos)>;

pub const DEFERRED: &str = "matching deferred to simulation";

/// Cap on statically unrolled collective sequences.
const UNROLL_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidateOptions {
    /// Reject sends between non-adjacent ranks when hop scaling is off.
    pub strict_neighbors: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    pub ok: bool,
}

impl ValidationReport {
    pub fn new(diagnostics: Vec<Diagnostic>) -> Self {
        let ok = !diagnostics.iter().any(Diagnostic::is_error);
        ValidationReport { diagnostics, ok }
    }

    pub fn merge(mut self, other: ValidationReport) -> Self {
        self.diagnostics.extend(other.diagnostics);
        Self::new(self.diagnostics)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Warning)
    }

    /// True when some matching was left to the simulator.
    pub fn has_deferred(&self) -> bool {
        self.warnings().any(|d| d.message.contains(DEFERRED))
    }

    pub fn render(&self, file: &str) -> String {
        self.diagnostics.iter().map(|d| d.render(file) + "\n").collect()
    }
}

/// All checks under the model's own params.
pub fn validate(m: &Model, opts: ValidateOptions) -> ValidationReport {
    validate_with(m, &m.params, opts)
}

/// All checks under an explicit parameter binding.
pub fn validate_with(m: &Model, params: &Params, opts: ValidateOptions) -> ValidationReport {
    let ctx = Ctx::new(m, params);
    let topo = ctx.check_topology(opts);
    if ctx.layout.is_none() {
        return topo;
    }
    topo.merge(ctx.check_communications()).merge(ctx.check_stereotypes())
}

pub fn check_topology(m: &Model, opts: ValidateOptions) -> ValidationReport {
    Ctx::new(m, &m.params).check_topology(opts)
}

pub fn check_communications(m: &Model) -> ValidationReport {
    Ctx::new(m, &m.params).check_communications()
}

pub fn check_stereotypes(m: &Model) -> ValidationReport {
    Ctx::new(m, &m.params).check_stereotypes()
}

/// Resolved topology and rank→role assignment.
struct Layout {
    spec: TopologySpec,
    graph: ProcessGraph,
    /// role index per rank
    owner: Vec<usize>,
}

struct Ctx<'m> {
    m: &'m Model,
    params: &'m Params,
    layout: Option<Layout>,
    /// Diagnostics produced while resolving the layout.
    layout_diags: Vec<Diagnostic>,
}

fn contains_dynamic(flow: &[Node]) -> Option<Pos> {
    for n in flow {
        match &n.kind {
            NodeKind::Loop { .. } | NodeKind::Taskpool { .. } | NodeKind::Workerloop => return Some(n.pos),
            NodeKind::Subactivity { body, .. } => {
                if let Some(p) = contains_dynamic(body) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}

fn rank_list(ranks: &[Rank]) -> String {
    match ranks {
        [a] => format!("rank {a}"),
        [a, .., b] => format!("ranks {a}..{b}"),
        [] => String::new(),
    }
}

impl<'m> Ctx<'m> {
    fn new(m: &'m Model, params: &'m Params) -> Self {
        let mut diags = Vec::new();
        let layout = Self::resolve_layout(m, params, &mut diags);
        Ctx { m, params, layout, layout_diags: diags }
    }

    fn resolve_layout(m: &Model, params: &Params, diags: &mut Vec<Diagnostic>) -> Option<Layout> {
        let tpos = m.topology.pos;
        let spec = match m.topology_spec(params) {
            Ok(s) => s,
            Err(e) => {
                diags.push(Diagnostic::error(tpos, format!("cannot resolve topology: {e}")));
                return None;
            }
        };
        if let (None, Some(declared)) = (spec.kind.implied_size(), params.get("P")) {
            if (declared - spec.p as f64).abs() > 0.0 {
                diags.push(Diagnostic::error(
                    tpos,
                    format!("{}({}) ≠ process count {}", spec.kind.name(), spec.p, crate::parser::fmt_number(declared)),
                ));
                return None;
            }
        }
        let graph = match build_topology(&spec) {
            Ok(g) => g,
            Err(e) => {
                diags.push(Diagnostic::error(tpos, e.to_string()));
                return None;
            }
        };
        let p = spec.p;
        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); p];
        let mut failed = false;
        for (i, role) in m.roles.iter().enumerate() {
            match role.ranks.resolve(params) {
                Ok(range) => {
                    let (lo, hi) = (*range.start(), *range.end());
                    if hi >= p {
                        diags.push(Diagnostic::error(
                            role.pos,
                            format!("role `{}` covers ranks up to {hi} but only {p} processes exist", role.name),
                        ));
                        failed = true;
                    }
                    for owner in owners.iter_mut().take(hi.saturating_add(1)).skip(lo) {
                        owner.push(i);
                    }
                }
                Err(e) => {
                    diags.push(Diagnostic::error(
                        role.pos,
                        format!("cannot resolve ranks of role `{}`: {e}", role.name),
                    ));
                    failed = true;
                }
            }
        }
        let mut gap: Vec<Rank> = Vec::new();
        let flush = |gap: &mut Vec<Rank>, diags: &mut Vec<Diagnostic>| {
            if !gap.is_empty() {
                diags.push(Diagnostic::error(tpos, format!("{} unassigned", rank_list(gap))));
                gap.clear();
            }
        };
        for (r, o) in owners.iter().enumerate() {
            if o.is_empty() {
                gap.push(r);
                failed = true;
                continue;
            }
            flush(&mut gap, diags);
            if o.len() > 1 {
                let names: Vec<String> = o.iter().map(|&i| format!("`{}`", m.roles[i].name)).collect();
                diags.push(Diagnostic::error(
                    m.roles[o[1]].pos,
                    format!("rank {r} assigned to more than one role ({})", names.join(", ")),
                ));
                failed = true;
            }
        }
        flush(&mut gap, diags);
        if failed {
            return None;
        }
        let owner = owners.into_iter().map(|o| o[0]).collect();
        Some(Layout { spec, graph, owner })
    }

    fn ranks_of(&self, role: usize) -> Vec<Rank> {
        let l = self.layout.as_ref().expect("layout");
        (0..l.owner.len()).filter(|&r| l.owner[r] == role).collect()
    }

    fn check_topology(&self, opts: ValidateOptions) -> ValidationReport {
        let mut diags = self.layout_diags.clone();
        let Some(layout) = &self.layout else {
            return ValidationReport::new(diags);
        };
        if opts.strict_neighbors && !self.m.costs.hop_scaling {
            let mut reported = HashSet::new();
            for (ri, role) in self.m.roles.iter().enumerate() {
                for me in self.ranks_of(ri) {
                    self.for_each_send(&role.flow, me, &mut |dst, pos| {
                        if dst != me && !layout.graph.is_adjacent(me, dst) && reported.insert((me, dst)) {
                            diags.push(Diagnostic::error(
                                pos,
                                format!("send from P{me} to P{dst} between non-neighbor ranks in {}", layout.spec),
                            ));
                        }
                    });
                }
            }
        }
        ValidationReport::new(diags)
    }

    /// Statically visible destinations of sends (and task pool traffic).
    fn for_each_send(&self, flow: &[Node], me: Rank, f: &mut impl FnMut(Rank, Pos)) {
        for n in flow {
            match &n.kind {
                NodeKind::Send { to, .. } => {
                    if let Ok(dsts) = self.m.resolve_target(to, self.params, me) {
                        for d in dsts {
                            f(d, n.pos);
                        }
                    }
                }
                NodeKind::Taskpool { .. } => {
                    for w in self.worker_ranks() {
                        f(w, n.pos);
                    }
                }
                NodeKind::Loop { body, .. } | NodeKind::Subactivity { body, .. } => self.for_each_send(body, me, f),
                _ => {}
            }
        }
    }

    fn worker_ranks(&self) -> Vec<Rank> {
        let mut out = Vec::new();
        for (ri, role) in self.m.roles.iter().enumerate() {
            let mut has = false;
            crate::parser::walk(&role.flow, &mut |n| has |= matches!(n.kind, NodeKind::Workerloop));
            if has {
                out.extend(self.ranks_of(ri));
            }
        }
        out
    }

    fn check_communications(&self) -> ValidationReport {
        let mut diags = Vec::new();
        let Some(layout) = &self.layout else {
            return ValidationReport::new(diags);
        };
        let p = layout.spec.p;
        let mut deferred = vec![false; p];
        for (ri, role) in self.m.roles.iter().enumerate() {
            if let Some(pos) = contains_dynamic(&role.flow) {
                diags.push(Diagnostic::warning(pos, format!("role `{}`: {DEFERRED}", role.name)));
                for r in self.ranks_of(ri) {
                    deferred[r] = true;
                }
            }
        }

        // sends[(s, r)] and specific recvs[(s, r)] with first position seen
        let mut sends: BTreeMap<(Rank, Rank), (usize, Pos)> = BTreeMap::new();
        let mut recvs: BTreeMap<(Rank, Rank), (usize, Pos)> = BTreeMap::new();
        // wildcard recvs per receiver: (source set, count, pos)
        let mut wild: BTreeMap<Rank, Vec<(Vec<Rank>, usize, Pos)>> = BTreeMap::new();

        for (ri, role) in self.m.roles.iter().enumerate() {
            for me in self.ranks_of(ri) {
                let mut nodes = Vec::new();
                flatten_static(&role.flow, &mut nodes);
                for n in nodes {
                    match &n.kind {
                        NodeKind::Send { to, .. } => match self.m.resolve_target(to, self.params, me) {
                            Ok(dsts) if dsts.len() == 1 => {
                                if dsts[0] == me {
                                    diags.push(Diagnostic::error(n.pos, format!("P{me} sends to itself")));
                                } else if !deferred[me] {
                                    let e = sends.entry((me, dsts[0])).or_insert((0, n.pos));
                                    e.0 += 1;
                                }
                            }
                            Ok(dsts) => diags.push(Diagnostic::error(
                                n.pos,
                                format!("send target `{}` names {} ranks; add a rank index", to.role, dsts.len()),
                            )),
                            Err(e) => diags.push(Diagnostic::error(n.pos, format!("P{me}: {e}"))),
                        },
                        NodeKind::Recv { from, .. } => match self.m.resolve_target(from, self.params, me) {
                            Ok(srcs) => {
                                let srcs: Vec<Rank> = srcs.into_iter().filter(|&s| s != me).collect();
                                if srcs.is_empty() {
                                    diags.push(Diagnostic::error(n.pos, format!("P{me} receives from itself")));
                                } else if deferred[me] {
                                } else if srcs.len() == 1 {
                                    let e = recvs.entry((srcs[0], me)).or_insert((0, n.pos));
                                    e.0 += 1;
                                } else {
                                    let list = wild.entry(me).or_default();
                                    match list.iter_mut().find(|(s, ..)| *s == srcs) {
                                        Some(entry) => entry.1 += 1,
                                        None => list.push((srcs, 1, n.pos)),
                                    }
                                }
                            }
                            Err(e) => diags.push(Diagnostic::error(n.pos, format!("P{me}: {e}"))),
                        },
                        _ => {}
                    }
                }
            }
        }

        // specific receives first, then wildcard receives consume the surplus
        let mut surplus: BTreeMap<(Rank, Rank), (usize, Pos)> = BTreeMap::new();
        let pairs: HashSet<(Rank, Rank)> = sends.keys().chain(recvs.keys()).copied().collect();
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        pairs.sort_unstable();
        for (s, r) in pairs {
            if deferred[s] || deferred[r] {
                continue;
            }
            let (sent, spos) = sends.get(&(s, r)).copied().unwrap_or((0, Pos::default()));
            let (got, rpos) = recvs.get(&(s, r)).copied().unwrap_or((0, Pos::default()));
            if got > sent {
                diags.push(Diagnostic::error(
                    rpos,
                    format!("unmatched recv: P{r} expects {} more message(s) from P{s}", got - sent),
                ));
            } else if sent > got {
                surplus.insert((s, r), (sent - got, spos));
            }
        }
        let mut skip_receiver: HashSet<Rank> = HashSet::new();
        for (&r, list) in &wild {
            for (srcs, count, pos) in list {
                if srcs.iter().any(|&s| deferred[s]) {
                    skip_receiver.insert(r);
                    continue;
                }
                let mut need = *count;
                for &s in srcs {
                    if need == 0 {
                        break;
                    }
                    if let Some(e) = surplus.get_mut(&(s, r)) {
                        let take = e.0.min(need);
                        e.0 -= take;
                        need -= take;
                    }
                }
                if need > 0 {
                    diags.push(Diagnostic::error(
                        *pos,
                        format!("unmatched recv: P{r} expects {need} more message(s) from {}", rank_set(srcs)),
                    ));
                }
            }
        }
        for ((s, r), (n, pos)) in surplus {
            if n > 0 && !skip_receiver.contains(&r) {
                diags.push(Diagnostic::error(
                    pos,
                    format!("unmatched send: P{s} sends {n} message(s) to P{r} that are never received"),
                ));
            }
        }

        self.check_collectives(&mut diags);
        ValidationReport::new(diags)
    }

    fn check_collectives(&self, diags: &mut Vec<Diagnostic>) {
        let p = self.layout.as_ref().map_or(0, |l| l.spec.p);
        let mut seqs: Vec<Option<CollectiveSeq<'_>>> = Vec::with_capacity(p);
        for r in 0..p {
            let role = &self.m.roles[self.layout.as_ref().unwrap().owner[r]];
            let mut seq = Vec::new();
            let complete = self.unroll_collectives(&role.flow, r, &mut seq);
            seqs.push(complete.then_some(seq));
        }
        let Some(reference) = seqs.iter().position(Option::is_some) else { return };
        let base = seqs[reference].as_ref().unwrap();
        let mut reported_roles = HashSet::new();
        for (r, seq) in seqs.iter().enumerate() {
            let Some(seq) = seq else { continue };
            let mismatch = (0..base.len().max(seq.len())).find(|&k| match (base.get(k), seq.get(k)) {
                (Some(a), Some(b)) => a.0 != b.0 || a.1 != b.1,
                _ => true,
            });
            let Some(k) = mismatch else { continue };
            let owner = self.layout.as_ref().unwrap().owner[r];
            if !reported_roles.insert(owner) {
                continue;
            }
            let describe = |e: Option<&(CollectiveKind, &str, Pos)>| match e {
                Some((kind, root, _)) => format!("{} root {root}", kind.as_str()),
                None => "nothing".to_string(),
            };
            let pos = seq.get(k).or(base.get(k)).map_or(self.m.roles[owner].pos, |e| e.2);
            diags.push(Diagnostic::error(
                pos,
                format!(
                    "collective participation mismatch: collective #{} is {} on P{r} but {} on P{reference}",
                    k + 1,
                    describe(seq.get(k)),
                    describe(base.get(k)),
                ),
            ));
        }
    }

    /// Collective sequence of one rank with loops unrolled. Returns false when
    /// a loop count cannot be evaluated or the sequence gets too long.
    fn unroll_collectives<'a>(
        &self,
        flow: &'a [Node],
        me: Rank,
        out: &mut Vec<(CollectiveKind, &'a str, Pos)>,
    ) -> bool {
        for n in flow {
            match &n.kind {
                NodeKind::Collective { kind, root, .. } => out.push((*kind, root.as_str(), n.pos)),
                NodeKind::Subactivity { body, .. } => {
                    if !self.unroll_collectives(body, me, out) {
                        return false;
                    }
                }
                NodeKind::Loop { count, body } => {
                    let mut inner = Vec::new();
                    if !self.unroll_collectives(body, me, &mut inner) {
                        return false;
                    }
                    if inner.is_empty() {
                        continue;
                    }
                    let Ok(c) = eval_expr(count, self.params, Some(me)) else { return false };
                    let c = (c + 0.5).floor() as usize;
                    if out.len() + c.saturating_mul(inner.len()) > UNROLL_LIMIT {
                        return false;
                    }
                    for _ in 0..c {
                        out.extend(inner.iter().copied());
                    }
                }
                _ => {}
            }
            if out.len() > UNROLL_LIMIT {
                return false;
            }
        }
        true
    }

    fn check_stereotypes(&self) -> ValidationReport {
        let mut diags = Vec::new();
        let Some(layout) = &self.layout else {
            return ValidationReport::new(diags);
        };
        let farm = matches!(layout.spec.kind, TopologyKind::Farm | TopologyKind::Star);
        let mut pool_ranks: Vec<Rank> = Vec::new();
        let mut first_pool: Option<Pos> = None;
        let mut any_worker = false;

        for (ri, role) in self.m.roles.iter().enumerate() {
            let ranks = self.ranks_of(ri);
            let mut declared: HashMap<&str, Pos> = HashMap::new();
            let mut waited: HashSet<&str> = HashSet::new();
            let mut pools: Vec<Pos> = Vec::new();
            let mut workers: Vec<Pos> = Vec::new();
            let mut waits: Vec<(&str, Pos)> = Vec::new();
            crate::parser::walk(&role.flow, &mut |n| match &n.kind {
                NodeKind::Send { kind: SendKind::Nonblocking { handle: Some(h) }, .. } => {
                    declared.entry(h.as_str()).or_insert(n.pos);
                }
                NodeKind::Wait { handle } => {
                    waited.insert(handle.as_str());
                    waits.push((handle.as_str(), n.pos));
                }
                NodeKind::Taskpool { .. } => pools.push(n.pos),
                NodeKind::Workerloop => workers.push(n.pos),
                _ => {}
            });
            for (h, pos) in waits {
                if !declared.contains_key(h) {
                    diags.push(Diagnostic::error(pos, format!("wait on undeclared handle `{h}`")));
                }
            }
            let mut unwaited: Vec<(&str, Pos)> =
                declared.iter().filter(|(h, _)| !waited.contains(*h)).map(|(h, p)| (*h, *p)).collect();
            unwaited.sort_by_key(|(h, p)| (p.line, p.col, h.to_string()));
            for (h, pos) in unwaited {
                diags.push(Diagnostic::warning(pos, format!("nonblocking send handle `{h}` is never waited")));
            }

            let is_master = ranks.contains(&0);
            if !pools.is_empty() {
                if farm && !is_master {
                    diags.push(Diagnostic::error(pools[0], format!("taskpool in non-master role `{}`", role.name)));
                } else if ranks.len() != 1 {
                    diags.push(Diagnostic::error(
                        pools[0],
                        format!("taskpool role `{}` must cover a single rank, covers {}", role.name, ranks.len()),
                    ));
                }
                pool_ranks.extend(&ranks);
                first_pool.get_or_insert(pools[0]);
                if !workers.is_empty() {
                    diags.push(Diagnostic::error(workers[0], format!("workerloop in taskpool role `{}`", role.name)));
                }
            }
            if !workers.is_empty() {
                any_worker = true;
                if farm && is_master && pools.is_empty() {
                    diags.push(Diagnostic::error(workers[0], format!("workerloop in master role `{}`", role.name)));
                }
            }
            for n in flatten_all(&role.flow) {
                if let NodeKind::Taskpool { cost: TaskCosts::List(list), count, .. } = &n.kind {
                    if let Ok(c) = eval_expr(count, self.params, Some(ranks[0])) {
                        let c = (c + 0.5).floor() as usize;
                        if c != list.len() {
                            diags.push(Diagnostic::error(
                                n.pos,
                                format!("taskpool count {c} does not match {} listed costs", list.len()),
                            ));
                        }
                    }
                }
            }
        }
        if pool_ranks.len() > 1 {
            diags.push(Diagnostic::error(
                first_pool.unwrap_or_default(),
                format!("only one rank may run a taskpool, found {}", rank_set(&pool_ranks)),
            ));
        }
        if let Some(pos) = first_pool {
            if !any_worker {
                diags.push(Diagnostic::error(pos, "taskpool has no workerloop partner"));
            }
        } else if any_worker {
            let pos = self
                .m
                .roles
                .iter()
                .flat_map(|r| flatten_all(&r.flow))
                .find(|n| matches!(n.kind, NodeKind::Workerloop))
                .map_or(Pos::default(), |n| n.pos);
            diags.push(Diagnostic::error(pos, "workerloop has no taskpool partner"));
        }
        ValidationReport::new(diags)
    }
}

fn rank_set(ranks: &[Rank]) -> String {
    let items: Vec<String> = ranks.iter().map(|r| format!("P{r}")).collect();
    format!("{{{}}}", items.join(", "))
}

/// Nodes of a loop-free flow in execution order (subactivities inlined).
fn flatten_static<'a>(flow: &'a [Node], out: &mut Vec<&'a Node>) {
    for n in flow {
        match &n.kind {
            NodeKind::Subactivity { body, .. } | NodeKind::Loop { body, .. } => flatten_static(body, out),
            _ => out.push(n),
        }
    }
}

fn flatten_all(flow: &[Node]) -> Vec<&Node> {
    let mut out = Vec::new();
    crate::parser::walk(flow, &mut |n| out.push(n));
    out
}
