//! The `.pmod` model language: lexer, parser, expression evaluator and
//! canonical printer.
//!
//! ```text
//! model "name"
//! topology farm(P)
//! costs { t_startup = 50us  t_byte = 0.01us  hop_scaling = false  send_mode = rendezvous }
//! params { N = 1000000  P = 5 }
//! role master on rank 0 { ... }
//! role worker on ranks 1..P-1 { ... }
//! ```

mod ast;
mod expr;
mod lexer;
mod printer;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

pub use ast::*;
pub use expr::{eval_expr, BinOp, EvalError, Expr, Unit};
pub use printer::print_model;

pub(crate) use expr::fmt_number;

use crate::model::{CostModel, Params, SendMode};
use lexer::{lex, Tok, Token};

/// Parse failure: one or more diagnostics, errors first.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub diagnostics: Vec<Diagnostic>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// A successfully parsed model with any warnings raised on the way.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub model: Model,
    pub warnings: Vec<Diagnostic>,
}

/// Parse a model document, discarding warnings.
pub fn parse_model(source: &str) -> Result<Model, ParseError> {
    parse_model_with_warnings(source).map(|p| p.model)
}

pub fn parse_model_with_warnings(source: &str) -> Result<Parsed, ParseError> {
    let lexed = lex(source).map_err(|d| ParseError { diagnostics: vec![d] })?;
    let mut p = Parser { toks: &lexed.tokens, i: 0, comments: &lexed.comments };
    let model = p.model().map_err(|d| ParseError { diagnostics: vec![d] })?;
    let diags = check_names(&model);
    let (errors, warnings): (Vec<_>, Vec<_>) = diags.into_iter().partition(Diagnostic::is_error);
    if errors.is_empty() {
        Ok(Parsed { model, warnings })
    } else {
        Err(ParseError { diagnostics: errors })
    }
}

/// Parse a standalone expression (used by CLI flags and tests).
pub fn parse_expr(source: &str) -> Result<Expr, Diagnostic> {
    let lexed = lex(source)?;
    let mut p = Parser { toks: &lexed.tokens, i: 0, comments: &lexed.comments };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
    comments: &'a BTreeMap<usize, String>,
}

const NODE_KEYWORDS: &str = "action, subactivity, send, recv, wait, collective, loop, taskpool or workerloop";

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn advance(&mut self) -> &'a Token {
        let t = &self.toks[self.i];
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> Diagnostic {
        Diagnostic::error(self.pos(), format!("expected {expected}, found {}", self.peek().describe()))
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> PResult<Pos> {
        if *self.peek() == tok {
            Ok(self.advance().pos)
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Pos> {
        if self.is_kw(kw) {
            Ok(self.advance().pos)
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        match self.peek() {
            Tok::Ident(s) => {
                let pos = self.advance().pos;
                Ok((s.clone(), pos))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Tok::Str(s) => {
                self.advance();
                Ok(s.clone())
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn model(&mut self) -> PResult<Model> {
        let mut name = String::from("unnamed");
        if self.eat_kw("model") {
            name = self.string("model name string")?;
        }
        if !self.is_kw("topology") {
            let pos = if *self.peek() == Tok::Eof && self.i == 0 { Pos::new(1, 1) } else { self.pos() };
            return Err(Diagnostic::error(pos, "missing topology declaration"));
        }
        let topology = self.topology()?;
        let mut costs: Option<CostModel> = None;
        let mut params: Option<Params> = None;
        loop {
            if self.is_kw("costs") {
                if costs.is_some() {
                    return Err(Diagnostic::error(self.pos(), "duplicate costs section"));
                }
                costs = Some(self.costs()?);
            } else if self.is_kw("params") {
                if params.is_some() {
                    return Err(Diagnostic::error(self.pos(), "duplicate params section"));
                }
                params = Some(self.params()?);
            } else {
                break;
            }
        }
        let mut roles = Vec::new();
        while self.is_kw("role") {
            roles.push(self.role()?);
        }
        if *self.peek() != Tok::Eof {
            if roles.is_empty() {
                return Err(self.unexpected("`costs`, `params` or `role`"));
            }
            return Err(self.unexpected("`role` or end of input"));
        }
        if roles.is_empty() {
            return Err(Diagnostic::error(self.pos(), "missing role declaration"));
        }
        Ok(Model { name, topology, costs: costs.unwrap_or_default(), params: params.unwrap_or_default(), roles })
    }

    fn topology(&mut self) -> PResult<TopologyDecl> {
        self.expect_kw("topology")?;
        let (kind_name, pos) = self.ident("topology kind")?;
        let kind = TopoName::parse(&kind_name).ok_or_else(|| {
            let all: Vec<_> = TopoName::ALL.iter().map(|k| k.as_str()).collect();
            Diagnostic::error(pos, format!("unknown topology kind `{kind_name}` (expected one of {})", all.join(", ")))
        })?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.advance();
            args.push(self.expr()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != kind.arity() {
            return Err(Diagnostic::error(
                pos,
                format!("{} takes {} argument(s), got {}", kind.as_str(), kind.arity(), args.len()),
            ));
        }
        Ok(TopologyDecl { kind, args, pos })
    }

    fn costs(&mut self) -> PResult<CostModel> {
        self.expect_kw("costs")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut c = CostModel::default();
        let mut seen = HashSet::new();
        while *self.peek() != Tok::RBrace {
            let (key, pos) = self.ident("cost key or `}`")?;
            if !seen.insert(key.clone()) {
                return Err(Diagnostic::error(pos, format!("duplicate cost key `{key}`")));
            }
            self.expect(Tok::Eq, "`=`")?;
            match key.as_str() {
                "t_startup" => c.t_startup = self.time_value()?,
                "t_byte" => c.t_byte = self.time_value()?,
                "hop_scaling" => {
                    let (v, vpos) = self.ident("`true` or `false`")?;
                    c.hop_scaling = match v.as_str() {
                        "true" => true,
                        "false" => false,
                        _ => return Err(Diagnostic::error(vpos, "expected `true` or `false`")),
                    };
                }
                "send_mode" => {
                    let (v, vpos) = self.ident("`rendezvous` or `buffered`")?;
                    c.send_mode = match v.as_str() {
                        "rendezvous" => SendMode::Rendezvous,
                        "buffered" => SendMode::Buffered,
                        _ => {
                            return Err(Diagnostic::error(
                                vpos,
                                format!("unknown send_mode `{v}` (expected rendezvous or buffered)"),
                            ))
                        }
                    };
                }
                _ => {
                    return Err(Diagnostic::error(
                        pos,
                        format!("unknown cost key `{key}` (expected t_startup, t_byte, hop_scaling or send_mode)"),
                    ))
                }
            }
        }
        self.advance();
        Ok(c)
    }

    fn time_value(&mut self) -> PResult<f64> {
        match *self.peek() {
            Tok::Num(v, unit) => {
                let pos = self.advance().pos;
                match unit {
                    None => Ok(v),
                    Some(u) if u.is_time() => Ok(v * u.scale()),
                    Some(u) => {
                        Err(Diagnostic::error(pos, format!("expected a time value, found size unit {}", u.as_str())))
                    }
                }
            }
            _ => Err(self.unexpected("time value")),
        }
    }

    fn params(&mut self) -> PResult<Params> {
        self.expect_kw("params")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut params = Params::new();
        while *self.peek() != Tok::RBrace {
            let (name, pos) = self.ident("param name or `}`")?;
            if name == "me" {
                return Err(Diagnostic::error(pos, "`me` is reserved for the current rank"));
            }
            self.expect(Tok::Eq, "`=`")?;
            let value = match *self.peek() {
                Tok::Num(v, u) => {
                    self.advance();
                    v * u.map_or(1.0, |u| u.scale())
                }
                _ => return Err(self.unexpected("number")),
            };
            if params.set(name.clone(), value).is_some() {
                return Err(Diagnostic::error(pos, format!("duplicate param `{name}`")));
            }
        }
        self.advance();
        Ok(params)
    }

    fn role(&mut self) -> PResult<Role> {
        let pos = self.expect_kw("role")?;
        let (name, _) = self.ident("role name")?;
        self.expect_kw("on")?;
        let ranks = if self.eat_kw("rank") {
            RankSpec::Single(self.expr()?)
        } else if self.eat_kw("ranks") {
            let lo = self.expr()?;
            self.expect(Tok::DotDot, "`..`")?;
            RankSpec::Range(lo, self.expr()?)
        } else {
            return Err(self.unexpected("`rank` or `ranks`"));
        };
        let flow = self.block()?;
        Ok(Role { name, ranks, flow, pos })
    }

    fn block(&mut self) -> PResult<Vec<Node>> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut nodes = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.unexpected("`}`"));
            }
            nodes.push(self.node()?);
        }
        self.advance();
        Ok(nodes)
    }

    fn node(&mut self) -> PResult<Node> {
        let pos = self.pos();
        let (kw, _) = self.ident(&format!("node keyword ({NODE_KEYWORDS})"))?;
        let kind = match kw.as_str() {
            "action" => {
                let name = self.string("action name string")?;
                self.expect_kw("cost")?;
                NodeKind::Action { name, cost: self.expr()? }
            }
            "subactivity" => {
                let name = self.string("subactivity name string")?;
                NodeKind::Subactivity { name, body: self.block()? }
            }
            "send" => {
                self.expect_kw("to")?;
                let to = self.target()?;
                self.expect_kw("size")?;
                let size = self.expr()?;
                let kind = if self.eat_kw("blocking") {
                    SendKind::Blocking
                } else if self.eat_kw("nonblocking") {
                    let handle = if self.eat_kw("as") { Some(self.ident("handle name")?.0) } else { None };
                    SendKind::Nonblocking { handle }
                } else {
                    return Err(self.unexpected("`blocking` or `nonblocking`"));
                };
                NodeKind::Send { to, size, kind }
            }
            "recv" => {
                self.expect_kw("from")?;
                let from = self.target()?;
                self.expect_kw("size")?;
                NodeKind::Recv { from, size: self.expr()? }
            }
            "wait" => NodeKind::Wait { handle: self.ident("handle name")?.0 },
            "collective" => {
                let (k, kpos) = self.ident("collective kind")?;
                let kind = CollectiveKind::parse(&k).ok_or_else(|| {
                    Diagnostic::error(
                        kpos,
                        format!("unknown collective `{k}` (expected bcast, reduce, gather, scatter or barrier)"),
                    )
                })?;
                self.expect_kw("root")?;
                let root = self.ident("root role name")?.0;
                self.expect_kw("size")?;
                NodeKind::Collective { kind, root, size: self.expr()? }
            }
            "loop" => {
                let count = self.expr()?;
                NodeKind::Loop { count, body: self.block()? }
            }
            "taskpool" => {
                self.expect_kw("count")?;
                let count = self.expr()?;
                self.expect_kw("cost")?;
                let cost = if *self.peek() == Tok::LBracket {
                    self.advance();
                    let mut list = Vec::new();
                    if *self.peek() != Tok::RBracket {
                        list.push(self.expr()?);
                        while *self.peek() == Tok::Comma {
                            self.advance();
                            list.push(self.expr()?);
                        }
                    }
                    self.expect(Tok::RBracket, "`]`")?;
                    TaskCosts::List(list)
                } else {
                    TaskCosts::Uniform(self.expr()?)
                };
                self.expect_kw("policy")?;
                let (pol, ppos) = self.ident("`static` or `dynamic`")?;
                let policy = match pol.as_str() {
                    "static" => Policy::Static,
                    "dynamic" => Policy::Dynamic,
                    _ => {
                        return Err(Diagnostic::error(
                            ppos,
                            format!("unknown policy `{pol}` (expected static or dynamic)"),
                        ))
                    }
                };
                self.expect_kw("payload")?;
                let payload = self.expr()?;
                self.expect_kw("result")?;
                let result = self.expr()?;
                NodeKind::Taskpool { count, cost, policy, payload, result }
            }
            "workerloop" => NodeKind::Workerloop,
            other => {
                return Err(Diagnostic::error(pos, format!("unknown keyword `{other}` (expected {NODE_KEYWORDS})")))
            }
        };
        let note = self.comments.get(&pos.line).cloned();
        Ok(Node { kind, note, pos })
    }

    fn target(&mut self) -> PResult<Target> {
        let (role, _) = self.ident("role name")?;
        let index = if *self.peek() == Tok::Dot {
            self.advance();
            Some(self.expr()?)
        } else {
            None
        };
        Ok(Target { role, index })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            lhs = Expr::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.advance();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Tok::Num(v, u) => {
                let e = Expr::Num { value: *v, unit: *u };
                self.advance();
                Ok(e)
            }
            Tok::Ident(s) => {
                self.advance();
                Ok(if s == "me" { Expr::Me } else { Expr::Var(s.clone()) })
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

/// Name resolution: duplicate roles, unbound params, unknown roles,
/// `me` outside flows, task list lengths. Also warns on unused params.
fn check_names(m: &Model) -> Vec<Diagnostic> {
    let mut c = NameCheck { m, out: Vec::new(), used: HashSet::new() };
    let mut seen_roles = HashSet::new();
    for role in &m.roles {
        if !seen_roles.insert(role.name.as_str()) {
            c.out.push(Diagnostic::error(role.pos, format!("duplicate role `{}`", role.name)));
        }
    }
    for a in &m.topology.args {
        c.expr(a, m.topology.pos, false);
    }
    for role in &m.roles {
        match &role.ranks {
            RankSpec::Single(e) => c.expr(e, role.pos, false),
            RankSpec::Range(a, b) => {
                c.expr(a, role.pos, false);
                c.expr(b, role.pos, false);
            }
        }
        walk(&role.flow, &mut |n| c.node(n));
    }
    for (name, _) in m.params.iter() {
        if name != "P" && !c.used.contains(name) {
            c.out.push(Diagnostic::warning(m.topology.pos, format!("param `{name}` is never used")));
        }
    }
    c.out
}

struct NameCheck<'m> {
    m: &'m Model,
    out: Vec<Diagnostic>,
    used: HashSet<&'m str>,
}

impl<'m> NameCheck<'m> {
    fn expr(&mut self, e: &'m Expr, pos: Pos, allow_me: bool) {
        for v in e.vars() {
            if !self.m.params.contains(v) {
                self.out.push(Diagnostic::error(pos, format!("unbound param `{v}`")));
            }
            self.used.insert(v);
        }
        if !allow_me && e.uses_me() {
            self.out.push(Diagnostic::error(pos, "`me` is only available inside role flows"));
        }
    }

    fn role_ref(&mut self, name: &str, pos: Pos) {
        if self.m.role(name).is_none() {
            self.out.push(Diagnostic::error(pos, format!("unknown role `{name}`")));
        }
    }

    fn node(&mut self, n: &'m Node) {
        match &n.kind {
            NodeKind::Action { cost, .. } => self.expr(cost, n.pos, true),
            NodeKind::Send { to: t, size, .. } | NodeKind::Recv { from: t, size } => {
                self.role_ref(&t.role, n.pos);
                if let Some(i) = &t.index {
                    self.expr(i, n.pos, true);
                }
                self.expr(size, n.pos, true);
            }
            NodeKind::Collective { root, size, .. } => {
                self.role_ref(root, n.pos);
                self.expr(size, n.pos, true);
            }
            NodeKind::Loop { count, .. } => self.expr(count, n.pos, true),
            NodeKind::Taskpool { count, cost, payload, result, .. } => {
                self.expr(count, n.pos, true);
                match cost {
                    TaskCosts::Uniform(e) => self.expr(e, n.pos, true),
                    TaskCosts::List(list) => {
                        for e in list {
                            self.expr(e, n.pos, true);
                        }
                        if let Ok(c) = eval_count(count, &self.m.params, Some(0)) {
                            if c != list.len() {
                                self.out.push(Diagnostic::error(
                                    n.pos,
                                    format!("taskpool count {c} does not match {} listed costs", list.len()),
                                ));
                            }
                        }
                    }
                }
                self.expr(payload, n.pos, true);
                self.expr(result, n.pos, true);
            }
            NodeKind::Subactivity { .. } | NodeKind::Wait { .. } | NodeKind::Workerloop => {}
        }
    }
}
