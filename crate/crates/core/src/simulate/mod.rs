//! Deterministic discrete-event execution of a model.
//!
//! Each rank interprets its role's flow one operation at a time. Operations run in
//! global time order; at equal times rank steps run before receive commits, so a
//! receive choosing among several senders sees every message posted at that instant.
//! Among available messages the earliest, then the lowest sender rank, wins.

mod deadlock;
mod trace;

pub use deadlock::{detect_deadlock_state, BlockedRank, DeadlockReport};
pub use trace::{Detail, Event, EventKind, Trace};

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, VecDeque};

use thiserror::Error;

use crate::model::{build_topology, CostModel, Params, ProcessGraph, Rank, SendMode, TopologyError};
use crate::parser::{eval_expr, CollectiveKind, Expr, Model, Node, NodeKind, Policy, SendKind, Target, TaskCosts};

/// Upper bound on processed scheduler entries per run.
pub const STEP_LIMIT: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("cannot resolve model: {0}")]
    Resolve(String),
    #[error("rank {0} is not assigned to any role")]
    Unassigned(Rank),
    #[error("line {line}: P{rank}: {message}")]
    Node { rank: Rank, line: usize, message: String },
    #[error("unmatched message at end of simulation: {count} message(s) from P{src} to P{dst} never received")]
    Unmatched { src: Rank, dst: Rank, count: usize },
    #[error("collective participation mismatch at collective #{index}: {detail}")]
    CollectiveMismatch { index: usize, detail: String },
    #[error("simulation exceeded {0} steps")]
    StepLimit(u64),
    #[error("invalid cost model: {0}")]
    Costs(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RankMetrics {
    pub compute: f64,
    pub comm: f64,
    pub idle: f64,
}

impl RankMetrics {
    pub fn total(&self) -> f64 {
        self.compute + self.comm + self.idle
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub ranks: Vec<RankMetrics>,
    pub makespan: f64,
    /// Point-to-point messages, task pool traffic included.
    pub message_count: usize,
    pub bytes_sent: f64,
    pub collective_count: usize,
}

impl RunMetrics {
    pub fn total_compute(&self) -> f64 {
        self.ranks.iter().map(|r| r.compute).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed { trace: Trace, metrics: RunMetrics },
    Deadlock { report: DeadlockReport, trace: Trace },
}

impl RunOutcome {
    pub fn trace(&self) -> &Trace {
        match self {
            RunOutcome::Completed { trace, .. } | RunOutcome::Deadlock { trace, .. } => trace,
        }
    }

    pub fn metrics(&self) -> Option<&RunMetrics> {
        match self {
            RunOutcome::Completed { metrics, .. } => Some(metrics),
            RunOutcome::Deadlock { .. } => None,
        }
    }

    pub fn deadlock(&self) -> Option<&DeadlockReport> {
        match self {
            RunOutcome::Deadlock { report, .. } => Some(report),
            RunOutcome::Completed { .. } => None,
        }
    }

    pub fn makespan(&self) -> Option<f64> {
        self.metrics().map(|m| m.makespan)
    }
}

/// Run with the model's own params and costs.
pub fn run_model(m: &Model) -> Result<RunOutcome, SimError> {
    run(m, &m.params, &m.costs)
}

pub fn run(m: &Model, params: &Params, costs: &CostModel) -> Result<RunOutcome, SimError> {
    costs.check().map_err(SimError::Costs)?;
    let spec = m.topology_spec(params).map_err(|e| SimError::Resolve(e.to_string()))?;
    let graph = build_topology(&spec)?;
    let p = graph.len();
    let owners = m.rank_roles(params, p).map_err(|e| SimError::Resolve(e.to_string()))?;
    let mut roles = Vec::with_capacity(p);
    for (r, o) in owners.into_iter().enumerate() {
        roles.push(o.ok_or(SimError::Unassigned(r))?);
    }
    Sim::new(m, params, *costs, graph, roles)?.execute()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Tag {
    User,
    Pool,
}

#[derive(Debug, Clone)]
enum PoolMsg {
    Task { index: usize, cost: f64, result: f64 },
    Block { tasks: Vec<(usize, f64)>, result: f64 },
    Stop,
    Result,
}

#[derive(Debug)]
struct Msg {
    dst: Rank,
    bytes: f64,
    posted: f64,
    /// Earliest time a receive may take it.
    avail: f64,
    cost: f64,
    blocking: bool,
    label: String,
    handle: Option<String>,
    payload: Option<PoolMsg>,
    /// Transfer completion, once known.
    completion: Option<f64>,
}

#[derive(Debug)]
enum Op {
    Compute {
        cost: f64,
        label: String,
        task: Option<(usize, Rank)>,
    },
    Send {
        dst: Rank,
        tag: Tag,
        bytes: f64,
        blocking: bool,
        handle: Option<String>,
        label: String,
        payload: Option<PoolMsg>,
    },
    Recv {
        sources: Vec<Rank>,
        tag: Tag,
    },
    Wait {
        handle: String,
        line: usize,
    },
    Collective {
        kind: CollectiveKind,
        root: Rank,
        bytes: f64,
    },
}

struct Master {
    ops: VecDeque<Op>,
    workers: Vec<Rank>,
    costs: Vec<f64>,
    next: usize,
    outstanding: usize,
    payload: f64,
    result: f64,
    dynamic: bool,
}

impl Master {
    fn new(costs: Vec<f64>, workers: Vec<Rank>, policy: Policy, payload: f64, result: f64) -> Master {
        let mut m = Master {
            ops: VecDeque::new(),
            workers,
            costs,
            next: 0,
            outstanding: 0,
            payload,
            result,
            dynamic: policy == Policy::Dynamic,
        };
        let workers = m.workers.clone();
        if m.dynamic {
            for w in workers {
                let op = m.assign(w);
                m.ops.push_back(op);
            }
        } else {
            // contiguous blocks; the first n % w workers take one extra task
            let (n, w) = (m.costs.len(), workers.len());
            let (base, extra) = (n / w, n % w);
            let mut start = 0;
            for (i, &wr) in workers.iter().enumerate() {
                let len = base + usize::from(i < extra);
                let op = if len == 0 {
                    pool_send(wr, 0.0, "stop", PoolMsg::Stop)
                } else {
                    m.outstanding += 1;
                    let tasks: Vec<(usize, f64)> = (start..start + len).map(|t| (t, m.costs[t])).collect();
                    pool_send(wr, m.payload * len as f64, "block", PoolMsg::Block { tasks, result: m.result })
                };
                start += len;
                m.ops.push_back(op);
            }
        }
        m
    }

    fn assign(&mut self, w: Rank) -> Op {
        if self.next < self.costs.len() {
            let index = self.next;
            self.next += 1;
            self.outstanding += 1;
            let msg = PoolMsg::Task { index, cost: self.costs[index], result: self.result };
            pool_send(w, self.payload, "task", msg)
        } else {
            pool_send(w, 0.0, "stop", PoolMsg::Stop)
        }
    }

    fn next_op(&mut self) -> Option<Op> {
        if let Some(op) = self.ops.pop_front() {
            return Some(op);
        }
        (self.outstanding > 0).then(|| Op::Recv { sources: self.workers.clone(), tag: Tag::Pool })
    }

    fn on_recv(&mut self, src: Rank) {
        self.outstanding -= 1;
        if self.dynamic {
            let op = self.assign(src);
            self.ops.push_back(op);
        }
    }
}

fn pool_send(dst: Rank, bytes: f64, label: &str, payload: PoolMsg) -> Op {
    Op::Send { dst, tag: Tag::Pool, bytes, blocking: true, handle: None, label: label.into(), payload: Some(payload) }
}

struct Worker {
    master: Rank,
    ops: VecDeque<Op>,
    done: bool,
}

impl Worker {
    fn next_op(&mut self) -> Option<Op> {
        if let Some(op) = self.ops.pop_front() {
            return Some(op);
        }
        (!self.done).then(|| Op::Recv { sources: vec![self.master], tag: Tag::Pool })
    }

    fn on_recv(&mut self, msg: Option<PoolMsg>) {
        match msg {
            Some(PoolMsg::Task { index, cost, result }) => {
                self.ops.push_back(Op::Compute {
                    cost,
                    label: format!("task {index}"),
                    task: Some((index, self.master)),
                });
                self.ops.push_back(pool_send(self.master, result, "result", PoolMsg::Result));
            }
            Some(PoolMsg::Block { tasks, result }) => {
                let n = tasks.len() as f64;
                for (index, cost) in tasks {
                    self.ops.push_back(Op::Compute {
                        cost,
                        label: format!("task {index}"),
                        task: Some((index, self.master)),
                    });
                }
                self.ops.push_back(pool_send(self.master, result * n, "result", PoolMsg::Result));
                self.done = true;
            }
            _ => self.done = true,
        }
    }
}

enum Frame<'m> {
    Seq { nodes: &'m [Node], idx: usize },
    Loop { body: &'m [Node], remaining: usize },
    Master(Master),
    Worker(Worker),
}

enum Step<'m> {
    Op(Op),
    Push(Frame<'m>),
}

#[derive(Debug, Clone)]
enum Block {
    Send(usize),
    Recv { sources: Vec<Rank>, tag: Tag, since: f64 },
    Wait { msg: usize, since: f64, handle: String },
    Collective { index: usize, since: f64 },
}

enum State {
    Ready,
    Blocked(Block),
    Done,
}

struct RankState<'m> {
    clock: f64,
    stack: Vec<Frame<'m>>,
    state: State,
    compute: f64,
    comm: f64,
    handles: HashMap<String, usize>,
    collectives: usize,
}

#[derive(Debug, Clone, Copy)]
struct Arrival {
    time: f64,
    kind: CollectiveKind,
    root: Rank,
    bytes: f64,
}

struct CollInstance {
    arrivals: Vec<Option<Arrival>>,
    count: usize,
}

const RUN: u8 = 0;
const COMMIT: u8 = 1;

#[derive(Debug, Clone, Copy)]
struct Entry {
    time: f64,
    class: u8,
    rank: Rank,
    seq: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.class.cmp(&other.class))
            .then(self.rank.cmp(&other.rank))
            .then(self.seq.cmp(&other.seq))
    }
}

/// Length of the overlap of `[a0, a1]` and `[b0, b1]`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// ceil(log2 g), zero for g ≤ 1.
fn log_rounds(g: usize) -> u32 {
    if g <= 1 {
        0
    } else {
        usize::BITS - (g - 1).leading_zeros()
    }
}

fn contains(flow: &[Node], pred: fn(&NodeKind) -> bool) -> bool {
    let mut found = false;
    crate::parser::walk(flow, &mut |n| found |= pred(&n.kind));
    found
}

struct Sim<'m> {
    m: &'m Model,
    params: &'m Params,
    costs: CostModel,
    graph: ProcessGraph,
    roles: Vec<usize>,
    ranks: Vec<RankState<'m>>,
    heap: BinaryHeap<Reverse<Entry>>,
    seq: u64,
    msgs: Vec<Msg>,
    channels: HashMap<(Rank, Rank, Tag), VecDeque<usize>>,
    colls: Vec<CollInstance>,
    events: Vec<Event>,
    hops: HashMap<(Rank, Rank), u32>,
    pool_master: Option<Rank>,
    workers: Vec<Rank>,
    message_count: usize,
    bytes_sent: f64,
    collective_count: usize,
}

impl<'m> Sim<'m> {
    fn new(
        m: &'m Model,
        params: &'m Params,
        costs: CostModel,
        graph: ProcessGraph,
        roles: Vec<usize>,
    ) -> Result<Self, SimError> {
        let p = roles.len();
        let is_pool = |k: &NodeKind| matches!(k, NodeKind::Taskpool { .. });
        let is_worker = |k: &NodeKind| matches!(k, NodeKind::Workerloop);
        let masters: Vec<Rank> = (0..p).filter(|&r| contains(&m.roles[roles[r]].flow, is_pool)).collect();
        if masters.len() > 1 {
            return Err(SimError::Resolve(format!("{} ranks run a taskpool; at most one may", masters.len())));
        }
        let workers = (0..p).filter(|&r| contains(&m.roles[roles[r]].flow, is_worker)).collect();
        let ranks = (0..p)
            .map(|r| RankState {
                clock: 0.0,
                stack: vec![Frame::Seq { nodes: &m.roles[roles[r]].flow, idx: 0 }],
                state: State::Ready,
                compute: 0.0,
                comm: 0.0,
                handles: HashMap::new(),
                collectives: 0,
            })
            .collect();
        Ok(Sim {
            m,
            params,
            costs,
            graph,
            roles,
            ranks,
            heap: BinaryHeap::new(),
            seq: 0,
            msgs: Vec::new(),
            channels: HashMap::new(),
            colls: Vec::new(),
            events: Vec::new(),
            hops: HashMap::new(),
            pool_master: masters.first().copied(),
            workers,
            message_count: 0,
            bytes_sent: 0.0,
            collective_count: 0,
        })
    }

    fn push(&mut self, time: f64, class: u8, rank: Rank) {
        self.seq += 1;
        self.heap.push(Reverse(Entry { time, class, rank, seq: self.seq }));
    }

    fn emit(&mut self, time: f64, rank: Rank, kind: EventKind, detail: Detail) {
        self.events.push(Event { time, rank, kind, detail });
    }

    fn hop_count(&mut self, a: Rank, b: Rank) -> u32 {
        if !self.costs.hop_scaling {
            return 1;
        }
        let graph = &self.graph;
        *self.hops.entry((a, b)).or_insert_with(|| graph.shortest_hops(a, b).unwrap_or(1))
    }

    fn node_err(&self, rank: Rank, node: &Node, message: impl ToString) -> SimError {
        SimError::Node { rank, line: node.pos.line, message: message.to_string() }
    }

    fn eval(&self, e: &Expr, rank: Rank, node: &Node) -> Result<f64, SimError> {
        eval_expr(e, self.params, Some(rank)).map_err(|err| self.node_err(rank, node, err))
    }

    fn count(&self, e: &Expr, rank: Rank, node: &Node) -> Result<usize, SimError> {
        let v = self.eval(e, rank, node)?;
        Ok((v + 0.5).floor() as usize)
    }

    fn targets(&self, t: &Target, rank: Rank, node: &Node) -> Result<Vec<Rank>, SimError> {
        self.m.resolve_target(t, self.params, rank).map_err(|e| self.node_err(rank, node, e))
    }

    fn execute(mut self) -> Result<RunOutcome, SimError> {
        for r in 0..self.ranks.len() {
            self.push(0.0, RUN, r);
        }
        let mut steps = 0u64;
        while let Some(Reverse(e)) = self.heap.pop() {
            steps += 1;
            if steps > STEP_LIMIT {
                return Err(SimError::StepLimit(STEP_LIMIT));
            }
            if e.class == RUN {
                self.step(e.rank, e.time)?;
            } else {
                self.commit(e.rank, e.time);
            }
        }
        self.finish()
    }

    fn step(&mut self, r: Rank, t: f64) -> Result<(), SimError> {
        self.ranks[r].clock = t;
        match self.next_op(r)? {
            None => self.ranks[r].state = State::Done,
            Some(op) => self.exec(r, op)?,
        }
        Ok(())
    }

    fn next_op(&mut self, r: Rank) -> Result<Option<Op>, SimError> {
        let mut stack = std::mem::take(&mut self.ranks[r].stack);
        let result = loop {
            let Some(top) = stack.last_mut() else { break Ok(None) };
            match top {
                Frame::Seq { nodes, idx } => {
                    let nodes: &'m [Node] = nodes;
                    if *idx >= nodes.len() {
                        stack.pop();
                        continue;
                    }
                    let node = &nodes[*idx];
                    *idx += 1;
                    match self.node_step(node, r) {
                        Ok(Step::Op(op)) => break Ok(Some(op)),
                        Ok(Step::Push(f)) => stack.push(f),
                        Err(e) => break Err(e),
                    }
                }
                Frame::Loop { body, remaining } => {
                    if *remaining == 0 {
                        stack.pop();
                    } else {
                        *remaining -= 1;
                        let body: &'m [Node] = body;
                        stack.push(Frame::Seq { nodes: body, idx: 0 });
                    }
                }
                Frame::Master(ms) => match ms.next_op() {
                    Some(op) => break Ok(Some(op)),
                    None => {
                        stack.pop();
                    }
                },
                Frame::Worker(w) => match w.next_op() {
                    Some(op) => break Ok(Some(op)),
                    None => {
                        stack.pop();
                    }
                },
            }
        };
        self.ranks[r].stack = stack;
        result
    }

    fn node_step(&self, node: &'m Node, r: Rank) -> Result<Step<'m>, SimError> {
        Ok(match &node.kind {
            NodeKind::Action { name, cost } => {
                Step::Op(Op::Compute { cost: self.eval(cost, r, node)?, label: name.clone(), task: None })
            }
            NodeKind::Subactivity { body, .. } => Step::Push(Frame::Seq { nodes: body, idx: 0 }),
            NodeKind::Loop { count, body } => Step::Push(Frame::Loop { body, remaining: self.count(count, r, node)? }),
            NodeKind::Send { to, size, kind } => {
                let dsts = self.targets(to, r, node)?;
                if dsts.len() != 1 {
                    return Err(self.node_err(
                        r,
                        node,
                        format!("send target `{}` names {} ranks", to.role, dsts.len()),
                    ));
                }
                if dsts[0] == r {
                    return Err(self.node_err(r, node, "send to self"));
                }
                let handle = match kind {
                    SendKind::Nonblocking { handle } => handle.clone(),
                    SendKind::Blocking => None,
                };
                Step::Op(Op::Send {
                    dst: dsts[0],
                    tag: Tag::User,
                    bytes: self.eval(size, r, node)?,
                    blocking: matches!(kind, SendKind::Blocking),
                    handle,
                    label: self.m.roles[self.roles[r]].name.clone(),
                    payload: None,
                })
            }
            NodeKind::Recv { from, .. } => {
                let sources: Vec<Rank> = self.targets(from, r, node)?.into_iter().filter(|&s| s != r).collect();
                if sources.is_empty() {
                    return Err(self.node_err(r, node, "receive from self"));
                }
                Step::Op(Op::Recv { sources, tag: Tag::User })
            }
            NodeKind::Wait { handle } => Step::Op(Op::Wait { handle: handle.clone(), line: node.pos.line }),
            NodeKind::Collective { kind, root, size } => {
                let role = self.m.role(root).ok_or_else(|| self.node_err(r, node, format!("unknown role `{root}`")))?;
                let range = role.ranks.resolve(self.params).map_err(|e| self.node_err(r, node, e))?;
                Step::Op(Op::Collective { kind: *kind, root: *range.start(), bytes: self.eval(size, r, node)? })
            }
            NodeKind::Taskpool { count, cost, policy, payload, result } => {
                let n = self.count(count, r, node)?;
                let costs = match cost {
                    TaskCosts::Uniform(e) => vec![self.eval(e, r, node)?; n],
                    TaskCosts::List(list) => {
                        if list.len() != n {
                            return Err(self.node_err(
                                r,
                                node,
                                format!("taskpool count {n} does not match {} listed costs", list.len()),
                            ));
                        }
                        list.iter().map(|e| self.eval(e, r, node)).collect::<Result<_, _>>()?
                    }
                };
                let workers: Vec<Rank> = self.workers.iter().copied().filter(|&w| w != r).collect();
                if workers.is_empty() {
                    return Err(self.node_err(r, node, "taskpool has no workers"));
                }
                let (payload, result) = (self.eval(payload, r, node)?, self.eval(result, r, node)?);
                Step::Push(Frame::Master(Master::new(costs, workers, *policy, payload, result)))
            }
            NodeKind::Workerloop => {
                let master = self.pool_master.ok_or_else(|| self.node_err(r, node, "workerloop without a taskpool"))?;
                Step::Push(Frame::Worker(Worker { master, ops: VecDeque::new(), done: false }))
            }
        })
    }

    fn exec(&mut self, r: Rank, op: Op) -> Result<(), SimError> {
        let t = self.ranks[r].clock;
        match op {
            Op::Compute { cost, label, task } => {
                let end = t + cost;
                match task {
                    None => {
                        self.emit(t, r, EventKind::ActionStart, Detail::label(label.clone()));
                        self.emit(end, r, EventKind::ActionEnd, Detail::label(label));
                    }
                    Some((_, master)) => self.emit(end, r, EventKind::TaskDone, Detail::label(label).peer(master)),
                }
                let rs = &mut self.ranks[r];
                rs.compute += cost;
                rs.clock = end;
                self.push(end, RUN, r);
            }
            Op::Send { dst, tag, bytes, blocking, handle, label, payload } => {
                let hops = self.hop_count(r, dst);
                let cost = self.costs.message(bytes, hops);
                let rendezvous = self.costs.send_mode == SendMode::Rendezvous;
                let avail = if rendezvous { t } else { t + cost };
                let detail = Detail::label(label.clone()).peer(dst).bytes(bytes).handle(handle.as_deref());
                self.emit(t, r, EventKind::SendStart, detail.clone());
                match &payload {
                    Some(PoolMsg::Task { index, .. }) => {
                        self.emit(t, r, EventKind::TaskAssign, Detail::label(format!("task {index}")).peer(dst))
                    }
                    Some(PoolMsg::Block { tasks, .. }) => {
                        for (index, _) in tasks {
                            self.emit(t, r, EventKind::TaskAssign, Detail::label(format!("task {index}")).peer(dst));
                        }
                    }
                    _ => {}
                }
                let id = self.msgs.len();
                self.msgs.push(Msg {
                    dst,
                    bytes,
                    posted: t,
                    avail,
                    cost,
                    blocking,
                    label,
                    handle: handle.clone(),
                    payload,
                    completion: (!rendezvous).then_some(t + cost),
                });
                self.message_count += 1;
                self.bytes_sent += bytes;
                self.channels.entry((r, dst, tag)).or_default().push_back(id);
                if let State::Blocked(Block::Recv { sources, tag: want, .. }) = &self.ranks[dst].state {
                    if *want == tag && sources.contains(&r) {
                        self.push(avail, COMMIT, dst);
                    }
                }
                if let Some(h) = handle {
                    self.ranks[r].handles.insert(h, id);
                }
                if rendezvous && blocking {
                    self.ranks[r].state = State::Blocked(Block::Send(id));
                } else if blocking {
                    self.emit(t + cost, r, EventKind::SendEnd, detail);
                    let rs = &mut self.ranks[r];
                    rs.comm += cost;
                    rs.clock = t + cost;
                    self.push(t + cost, RUN, r);
                } else {
                    if !rendezvous {
                        self.emit(t + cost, r, EventKind::SendEnd, detail);
                    }
                    self.push(t, RUN, r);
                }
            }
            Op::Recv { sources, tag } => {
                let mut detail = Detail::default();
                if let [s] = sources[..] {
                    detail = detail.peer(s);
                }
                self.emit(t, r, EventKind::RecvStart, detail);
                let earliest = sources
                    .iter()
                    .filter_map(|&s| self.channels.get(&(s, r, tag)).and_then(|q| q.front()))
                    .map(|&id| self.msgs[id].avail)
                    .min_by(f64::total_cmp);
                self.ranks[r].state = State::Blocked(Block::Recv { sources, tag, since: t });
                if let Some(a) = earliest {
                    self.push(a.max(t), COMMIT, r);
                }
            }
            Op::Wait { handle, line } => {
                let id = *self.ranks[r].handles.get(&handle).ok_or_else(|| SimError::Node {
                    rank: r,
                    line,
                    message: format!("wait on unknown handle `{handle}`"),
                })?;
                match self.msgs[id].completion {
                    Some(done) => {
                        let resume = done.max(t);
                        let xfer0 = done - self.msgs[id].cost;
                        let rs = &mut self.ranks[r];
                        rs.comm += overlap(t, resume, xfer0, done);
                        rs.clock = resume;
                        self.push(resume, RUN, r);
                    }
                    None => self.ranks[r].state = State::Blocked(Block::Wait { msg: id, since: t, handle }),
                }
            }
            Op::Collective { kind, root, bytes } => {
                let p = self.ranks.len();
                let index = self.ranks[r].collectives;
                self.ranks[r].collectives += 1;
                if self.colls.len() <= index {
                    self.colls.push(CollInstance { arrivals: vec![None; p], count: 0 });
                }
                let inst = &mut self.colls[index];
                inst.arrivals[r] = Some(Arrival { time: t, kind, root, bytes });
                inst.count += 1;
                let complete = inst.count == p;
                self.emit(t, r, EventKind::CollectiveStart, Detail::label(kind.as_str()).peer(root).bytes(bytes));
                self.ranks[r].state = State::Blocked(Block::Collective { index, since: t });
                if complete {
                    self.complete_collective(index)?;
                }
            }
        }
        Ok(())
    }

    fn complete_collective(&mut self, index: usize) -> Result<(), SimError> {
        let arrivals: Vec<Arrival> = self.colls[index].arrivals.iter().map(|a| a.expect("all arrived")).collect();
        let first = arrivals[0];
        for (r, a) in arrivals.iter().enumerate() {
            if a.kind != first.kind || a.root != first.root {
                return Err(SimError::CollectiveMismatch {
                    index: index + 1,
                    detail: format!(
                        "P0 runs {} root P{} but P{r} runs {} root P{}",
                        first.kind.as_str(),
                        first.root,
                        a.kind.as_str(),
                        a.root
                    ),
                });
            }
        }
        let g = arrivals.len();
        let start = arrivals.iter().map(|a| a.time).fold(0.0, f64::max);
        let root = first.root;
        let rounds = f64::from(log_rounds(g));
        let cost = match first.kind {
            CollectiveKind::Bcast | CollectiveKind::Reduce => rounds * self.costs.message(arrivals[root].bytes, 1),
            CollectiveKind::Barrier => rounds * self.costs.t_startup,
            CollectiveKind::Gather | CollectiveKind::Scatter => {
                let mut sum = 0.0;
                for (i, a) in arrivals.iter().enumerate() {
                    if i != root {
                        let hops = self.hop_count(root, i);
                        sum += self.costs.message(a.bytes, hops);
                    }
                }
                sum
            }
        };
        let end = start + cost;
        for r in 0..g {
            self.emit(end, r, EventKind::CollectiveEnd, Detail::label(first.kind.as_str()).peer(root));
            let rs = &mut self.ranks[r];
            rs.comm += cost;
            rs.clock = end;
            rs.state = State::Ready;
            self.push(end, RUN, r);
        }
        self.collective_count += 1;
        Ok(())
    }

    fn commit(&mut self, r: Rank, t: f64) {
        let State::Blocked(Block::Recv { sources, tag, since }) = &self.ranks[r].state else { return };
        let (tag, since) = (*tag, *since);
        let mut best: Option<(f64, Rank, usize)> = None;
        let mut later: Option<f64> = None;
        for &s in sources {
            let Some(&id) = self.channels.get(&(s, r, tag)).and_then(|q| q.front()) else { continue };
            let a = self.msgs[id].avail;
            if a <= t {
                if best.is_none_or(|(ba, bs, _)| (a, s) < (ba, bs)) {
                    best = Some((a, s, id));
                }
            } else {
                later = Some(later.map_or(a, |l: f64| l.min(a)));
            }
        }
        let Some((_, s, id)) = best else {
            if let Some(a) = later {
                self.push(a, COMMIT, r);
            }
            return;
        };
        self.channels.get_mut(&(s, r, tag)).expect("channel").pop_front();

        let rendezvous = self.costs.send_mode == SendMode::Rendezvous;
        let msg = &self.msgs[id];
        let (xfer0, xfer1, end) = if rendezvous {
            let xs = msg.posted.max(since);
            (xs, xs + msg.cost, xs + msg.cost)
        } else {
            (msg.posted, msg.avail, msg.avail.max(since))
        };
        let recv_detail =
            Detail::label(msg.label.clone()).peer(s).bytes(msg.bytes).synchronous(msg.blocking && rendezvous);
        let send_detail = Detail::label(msg.label.clone()).peer(msg.dst).bytes(msg.bytes).handle(msg.handle.as_deref());
        let payload = msg.payload.clone();

        self.emit(end, r, EventKind::RecvEnd, recv_detail);
        let rs = &mut self.ranks[r];
        rs.comm += overlap(since, end, xfer0, xfer1);
        rs.clock = end;
        rs.state = State::Ready;
        match rs.stack.last_mut() {
            Some(Frame::Master(ms)) => ms.on_recv(s),
            Some(Frame::Worker(w)) => w.on_recv(payload),
            _ => {}
        }
        self.push(end, RUN, r);

        if rendezvous {
            self.msgs[id].completion = Some(end);
            self.emit(end, s, EventKind::SendEnd, send_detail);
            let resume_from = match &self.ranks[s].state {
                State::Blocked(Block::Send(m)) if *m == id => Some(self.msgs[id].posted),
                State::Blocked(Block::Wait { msg, since, .. }) if *msg == id => Some(*since),
                _ => None,
            };
            if let Some(from) = resume_from {
                let rs = &mut self.ranks[s];
                rs.comm += overlap(from, end, xfer0, xfer1);
                rs.clock = end;
                rs.state = State::Ready;
                self.push(end, RUN, s);
            }
        }
    }

    fn describe(&self, b: &Block) -> String {
        match b {
            Block::Send(id) => {
                let m = &self.msgs[*id];
                format!("blocking send to P{} ({} B)", m.dst, m.bytes)
            }
            Block::Recv { sources, tag, .. } => {
                let what = if *tag == Tag::Pool { "taskpool recv" } else { "recv" };
                match sources.as_slice() {
                    [s] => format!("{what} from P{s}"),
                    many => {
                        let list: Vec<String> = many.iter().map(|s| format!("P{s}")).collect();
                        format!("{what} from any of {{{}}}", list.join(", "))
                    }
                }
            }
            Block::Wait { msg, handle, .. } => format!("wait {handle} (send to P{})", self.msgs[*msg].dst),
            Block::Collective { index, .. } => {
                let kind = self.colls[*index].arrivals.iter().flatten().next().map_or("?", |a| a.kind.as_str());
                format!("collective #{} {kind}", index + 1)
            }
        }
    }

    fn finish(mut self) -> Result<RunOutcome, SimError> {
        let mut blocked = Vec::new();
        let mut edges = Vec::new();
        let mut time: f64 = 0.0;
        for (r, rs) in self.ranks.iter().enumerate() {
            let State::Blocked(b) = &rs.state else { continue };
            blocked.push(BlockedRank { rank: r, on: self.describe(b) });
            let since = match b {
                Block::Send(id) => {
                    edges.push((r, self.msgs[*id].dst));
                    self.msgs[*id].posted
                }
                Block::Recv { sources, since, .. } => {
                    edges.extend(sources.iter().map(|&s| (r, s)));
                    *since
                }
                Block::Wait { msg, since, .. } => {
                    edges.push((r, self.msgs[*msg].dst));
                    *since
                }
                Block::Collective { index, since } => {
                    let inst = &self.colls[*index];
                    edges.extend((0..inst.arrivals.len()).filter(|&q| inst.arrivals[q].is_none()).map(|q| (r, q)));
                    *since
                }
            };
            time = time.max(since);
        }
        if !blocked.is_empty() {
            let report = detect_deadlock_state(blocked, &edges, time);
            for b in &report.blocked {
                self.events.push(Event {
                    time,
                    rank: b.rank,
                    kind: EventKind::Deadlock,
                    detail: Detail::label(b.on.clone()),
                });
            }
            let trace = Trace::from_emitted(self.events);
            return Ok(RunOutcome::Deadlock { report, trace });
        }
        let mut leftovers: Vec<(Rank, Rank, usize)> =
            self.channels.iter().filter(|(_, q)| !q.is_empty()).map(|(&(s, d, _), q)| (s, d, q.len())).collect();
        leftovers.sort_unstable();
        if let Some(&(src, dst, count)) = leftovers.first() {
            return Err(SimError::Unmatched { src, dst, count });
        }
        let trace = Trace::from_emitted(self.events);
        let makespan = trace.final_time;
        let ranks = self
            .ranks
            .iter()
            .map(|rs| RankMetrics {
                compute: rs.compute,
                comm: rs.comm,
                idle: (makespan - rs.compute - rs.comm).max(0.0),
            })
            .collect();
        let metrics = RunMetrics {
            ranks,
            makespan,
            message_count: self.message_count,
            bytes_sent: self.bytes_sent,
            collective_count: self.collective_count,
        };
        Ok(RunOutcome::Completed { trace, metrics })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;

    const EPS: f64 = 1e-9;

    fn sim(src: &str) -> RunOutcome {
        run_model(&parse_model(src).unwrap()).unwrap()
    }

    fn makespan(src: &str) -> f64 {
        sim(src).makespan().expect("completed")
    }

    const TWO_RANK: &str = "topology bus(2)
costs { t_startup = 50us t_byte = 0.01us }
role a on rank 0 { action \"work\" cost 100us send to b size 1000B blocking }
role b on rank 1 { recv from a size 1000B }";

    #[test]
    fn two_rank_rendezvous() {
        let out = sim(TWO_RANK);
        let trace = out.trace();
        let at = |k| trace.of_kind(k).next().unwrap().time;
        assert!((at(EventKind::RecvEnd) - 160.0).abs() < EPS);
        assert!((at(EventKind::SendEnd) - 160.0).abs() < EPS);
        let m = out.metrics().unwrap();
        assert!((m.makespan - 160.0).abs() < EPS);
        assert!((m.ranks[0].compute - 100.0).abs() < EPS);
        assert!((m.ranks[0].comm - 60.0).abs() < EPS);
        assert!((m.ranks[1].comm - 60.0).abs() < EPS);
        assert!((m.ranks[1].idle - 100.0).abs() < EPS);
        assert_eq!(m.message_count, 1);
    }

    #[test]
    fn buffered_sender_does_not_wait() {
        let src = TWO_RANK.replace("t_byte = 0.01us", "t_byte = 0.01us send_mode = buffered");
        let src = src.replace("role b on rank 1 { recv", "role b on rank 1 { action \"late\" cost 500us recv");
        let out = sim(&src);
        let m = out.metrics().unwrap();
        assert!((m.makespan - 500.0).abs() < EPS);
        assert!((m.ranks[0].comm - 60.0).abs() < EPS);
        assert!((m.ranks[1].comm).abs() < EPS);
    }

    #[test]
    fn mutual_send_deadlocks() {
        let out = sim("topology bus(2)
role a on rank 0 { send to b size 8B blocking recv from b size 8B }
role b on rank 1 { send to a size 8B blocking recv from a size 8B }");
        let d = out.deadlock().unwrap();
        assert_eq!(d.cycle, Some(vec![0, 1]));
        assert_eq!(d.time, 0.0);
        assert_eq!(out.trace().of_kind(EventKind::Deadlock).count(), 2);
    }

    #[test]
    fn nonblocking_exchange_completes() {
        let src = "topology bus(2)
costs { t_startup = 10us }
role a on rank 0 { send to b size 8B nonblocking as h recv from b size 8B wait h }
role b on rank 1 { send to a size 8B nonblocking as h recv from a size 8B wait h }";
        let out = sim(src);
        assert!((out.makespan().unwrap() - 10.0).abs() < EPS);
    }

    #[test]
    fn orphan_wait() {
        let out = sim("topology bus(2)
role a on rank 0 { recv from b size 8B }
role b on rank 1 { action \"x\" cost 1us }");
        let d = out.deadlock().unwrap();
        assert_eq!(d.blocked_ranks(), vec![0]);
        assert!(d.is_orphan_wait());
    }

    #[test]
    fn sequential_case() {
        let out = sim("topology bus(1)\nrole solo on rank 0 { action \"work\" cost 42us }");
        let m = out.metrics().unwrap();
        assert_eq!(m.makespan, 42.0);
        assert_eq!(m.ranks[0].comm, 0.0);
    }

    #[test]
    fn bcast_cost() {
        let src = "topology bus(8)
costs { t_startup = 50us t_byte = 0.01us }
role r on ranks 0..7 { collective bcast root r size 8B }";
        assert!((makespan(src) - 150.24).abs() < EPS);
        assert_eq!(log_rounds(1), 0);
        assert_eq!(log_rounds(5), 3);
        assert_eq!(log_rounds(8), 3);
        assert_eq!(log_rounds(9), 4);
    }

    #[test]
    fn taskpool_static_and_dynamic() {
        let pool = |policy: &str, tasks: &str, p: usize| {
            format!(
                "topology farm({p})\nrole m on rank 0 {{ taskpool count {} cost {tasks} policy {policy} payload 8B result 8B }}\nrole w on ranks 1..{} {{ workerloop }}",
                tasks.matches(',').count() + 1,
                p - 1
            )
        };
        assert!((makespan(&pool("static", "[10us, 10us, 10us, 10us, 70us, 70us]", 3)) - 150.0).abs() < EPS);
        assert!((makespan(&pool("dynamic", "[10us, 10us, 10us, 10us, 70us, 70us]", 3)) - 90.0).abs() < EPS);
        let eight = "topology farm(5)\nrole m on rank 0 { taskpool count 8 cost 100us policy static payload 0B result 0B }\nrole w on ranks 1..4 { workerloop }";
        let out = sim(eight);
        assert!((out.makespan().unwrap() - 200.0).abs() < EPS);
        assert_eq!(out.trace().of_kind(EventKind::TaskDone).count(), 8);
        assert_eq!(out.trace().of_kind(EventKind::TaskAssign).count(), 8);
        assert!((makespan(&pool("dynamic", "[5us, 7us, 11us]", 2)) - 23.0).abs() < EPS);
    }

    #[test]
    fn unmatched_message_is_an_error() {
        let m =
            parse_model("topology bus(2)\nrole a on rank 0 { send to b size 8B nonblocking }\nrole b on rank 1 { }")
                .unwrap();
        assert!(matches!(run_model(&m), Err(SimError::Unmatched { src: 0, dst: 1, count: 1 })));
    }

    #[test]
    fn accounting_sums_to_makespan() {
        let out = sim(TWO_RANK);
        let m = out.metrics().unwrap();
        for r in &m.ranks {
            assert!((r.total() - m.makespan).abs() < EPS);
        }
    }
}
