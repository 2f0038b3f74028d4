//! Syntax tree of a `.pmod` model document.
//!
//! Every node carries a source [`Pos`]. Positions never take part in
//! equality, so a printed and re-parsed model compares equal to the original.

use std::fmt;

use crate::model::{CostModel, Params, Rank, TopologyKind, TopologySpec};

use super::expr::{eval_expr, EvalError, Expr};

/// 1-based line/column. Compares equal to every other position.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl Pos {
    pub fn new(line: usize, col: usize) -> Self {
        Pos { line, col }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Pos) -> bool {
        true
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl Diagnostic {
    pub fn error(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into(), line: pos.line, column: pos.col }
    }

    pub fn warning(pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, message: message.into(), line: pos.line, column: pos.col }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `SEVERITY file:line:col message`
    pub fn render(&self, file: &str) -> String {
        format!("{} {}:{}:{} {}", self.severity, file, self.line, self.column, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}:{} {}", self.severity, self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopoName {
    Farm,
    Star,
    Bus,
    Ring,
    Mesh2d,
    Hypercube,
    Tree,
}

impl TopoName {
    pub const ALL: [TopoName; 7] = [
        TopoName::Farm,
        TopoName::Star,
        TopoName::Bus,
        TopoName::Ring,
        TopoName::Mesh2d,
        TopoName::Hypercube,
        TopoName::Tree,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TopoName::Farm => "farm",
            TopoName::Star => "star",
            TopoName::Bus => "bus",
            TopoName::Ring => "ring",
            TopoName::Mesh2d => "mesh2d",
            TopoName::Hypercube => "hypercube",
            TopoName::Tree => "tree",
        }
    }

    pub fn parse(s: &str) -> Option<TopoName> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn arity(&self) -> usize {
        match self {
            TopoName::Mesh2d | TopoName::Tree => 2,
            _ => 1,
        }
    }
}

/// `topology KIND(args)` with arguments still symbolic.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyDecl {
    pub kind: TopoName,
    pub args: Vec<Expr>,
    pub pos: Pos,
}

impl TopologyDecl {
    /// Resolve against `params`. When `P` is bound it is the process count;
    /// shaped kinds are then checked against it by topology construction.
    pub fn resolve(&self, params: &Params) -> Result<TopologySpec, EvalError> {
        let mut vals = Vec::with_capacity(self.args.len());
        for a in &self.args {
            vals.push(eval_count(a, params, None)?);
        }
        let declared_p = match params.get("P") {
            Some(v) => Some(round_count(v).ok_or(EvalError::Negative(v))?),
            None => None,
        };
        let kind = match self.kind {
            TopoName::Farm => TopologyKind::Farm,
            TopoName::Star => TopologyKind::Star,
            TopoName::Bus => TopologyKind::Bus,
            TopoName::Ring => TopologyKind::Ring,
            TopoName::Mesh2d => TopologyKind::Mesh2d { rows: vals[0], cols: vals[1] },
            TopoName::Hypercube => TopologyKind::Hypercube { dim: to_u32(vals[0])? },
            TopoName::Tree => TopologyKind::Tree { arity: vals[0], depth: to_u32(vals[1])? },
        };
        let p = match kind.implied_size() {
            Some(n) => declared_p.unwrap_or(n),
            None => vals[0],
        };
        Ok(TopologySpec::new(kind, p))
    }
}

fn to_u32(v: usize) -> Result<u32, EvalError> {
    if v > 40 {
        Err(EvalError::Invalid(format!("shape parameter {v} is too large")))
    } else {
        Ok(v as u32)
    }
}

/// Round half-up to a non-negative integer.
pub(crate) fn round_count(v: f64) -> Option<usize> {
    if !v.is_finite() || v < 0.0 {
        return None;
    }
    Some((v + 0.5).floor() as usize)
}

pub(crate) fn eval_count(e: &Expr, params: &Params, me: Option<Rank>) -> Result<usize, EvalError> {
    let v = eval_expr(e, params, me)?;
    round_count(v).ok_or(EvalError::Negative(v))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankSpec {
    Single(Expr),
    /// Inclusive range.
    Range(Expr, Expr),
}

impl RankSpec {
    pub fn resolve(&self, params: &Params) -> Result<std::ops::RangeInclusive<Rank>, EvalError> {
        match self {
            RankSpec::Single(e) => {
                let r = eval_count(e, params, None)?;
                Ok(r..=r)
            }
            RankSpec::Range(a, b) => {
                let lo = eval_count(a, params, None)?;
                let hi = eval_count(b, params, None)?;
                if hi < lo {
                    return Err(EvalError::Invalid(format!("empty rank range {lo}..{hi}")));
                }
                Ok(lo..=hi)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Role {
    pub name: String,
    pub ranks: RankSpec,
    pub flow: Vec<Node>,
    pub pos: Pos,
}

/// `role` or `role.index`; an index selects a rank within the role.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub role: String,
    pub index: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectiveKind {
    Bcast,
    Reduce,
    Gather,
    Scatter,
    Barrier,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 5] = [
        CollectiveKind::Bcast,
        CollectiveKind::Reduce,
        CollectiveKind::Gather,
        CollectiveKind::Scatter,
        CollectiveKind::Barrier,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CollectiveKind::Bcast => "bcast",
            CollectiveKind::Reduce => "reduce",
            CollectiveKind::Gather => "gather",
            CollectiveKind::Scatter => "scatter",
            CollectiveKind::Barrier => "barrier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Static,
    Dynamic,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Static => "static",
            Policy::Dynamic => "dynamic",
        }
    }
}

/// Task costs: one expression for every task, or one per task.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskCosts {
    Uniform(Expr),
    List(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SendKind {
    Blocking,
    Nonblocking { handle: Option<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Action { name: String, cost: Expr },
    Subactivity { name: String, body: Vec<Node> },
    Send { to: Target, size: Expr, kind: SendKind },
    Recv { from: Target, size: Expr },
    Wait { handle: String },
    Collective { kind: CollectiveKind, root: String, size: Expr },
    Loop { count: Expr, body: Vec<Node> },
    Taskpool { count: Expr, cost: TaskCosts, policy: Policy, payload: Expr, result: Expr },
    Workerloop,
}

/// One step in a swimlane. `note` holds a trailing `#` comment.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub note: Option<String>,
    pub pos: Pos,
}

impl Node {
    pub fn new(kind: NodeKind) -> Self {
        Node { kind, note: None, pos: Pos::default() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn children(&self) -> &[Node] {
        match &self.kind {
            NodeKind::Subactivity { body, .. } | NodeKind::Loop { body, .. } => body,
            _ => &[],
        }
    }
}

/// Depth-first pre-order walk over a flow.
pub fn walk<'a>(flow: &'a [Node], f: &mut impl FnMut(&'a Node)) {
    for n in flow {
        f(n);
        walk(n.children(), f);
    }
}

/// A parsed model document.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub name: String,
    pub topology: TopologyDecl,
    pub costs: CostModel,
    pub params: Params,
    pub roles: Vec<Role>,
}

impl Model {
    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn topology_spec(&self, params: &Params) -> Result<TopologySpec, EvalError> {
        self.topology.resolve(params)
    }

    /// Rank → role index for every rank covered by a role, under `params`.
    /// Later roles win on overlap; validation reports overlaps.
    pub fn rank_roles(&self, params: &Params, p: usize) -> Result<Vec<Option<usize>>, EvalError> {
        let mut out = vec![None; p];
        for (i, role) in self.roles.iter().enumerate() {
            for r in role.ranks.resolve(params)? {
                if r < p {
                    out[r] = Some(i);
                }
            }
        }
        Ok(out)
    }

    /// Resolve a send/recv target to a rank. `None` index on a multi-rank
    /// role yields every rank of that role.
    pub fn resolve_target(&self, target: &Target, params: &Params, me: Rank) -> Result<Vec<Rank>, TargetError> {
        let role = self.role(&target.role).ok_or_else(|| TargetError::UnknownRole(target.role.clone()))?;
        let range = role.ranks.resolve(params).map_err(TargetError::Eval)?;
        let first = *range.start();
        let len = range.end() - first + 1;
        match &target.index {
            None => Ok(range.collect()),
            Some(e) => {
                let idx = eval_count(e, params, Some(me)).map_err(TargetError::Eval)?;
                if idx >= len {
                    return Err(TargetError::IndexOutOfRange { role: role.name.clone(), index: idx, len });
                }
                Ok(vec![first + idx])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TargetError {
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("index {index} out of range for role `{role}` with {len} ranks")]
    IndexOutOfRange { role: String, index: usize, len: usize },
    #[error(transparent)]
    Eval(EvalError),
}
