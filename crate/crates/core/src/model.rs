//! Core domain types: process topologies, the rank graph they induce,
//! message cost parameters and named scalar parameters.

use std::collections::VecDeque;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

/// Integer identity of one process, 0-based.
pub type Rank = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("{kind} requires at least {min} processes, got {p}")]
    TooFewProcesses { kind: &'static str, min: usize, p: usize },
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("{kind} shape parameter {name} must be at least {min}")]
    BadShape { kind: &'static str, name: &'static str, min: usize },
    #[error("rank {rank} out of range for {p} processes")]
    RankOutOfRange { rank: Rank, p: usize },
}

/// Regular interconnection kinds. `cube` in the literature is a hypercube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Farm,
    Star,
    Bus,
    Ring,
    Mesh2d { rows: usize, cols: usize },
    Hypercube { dim: u32 },
    Tree { arity: usize, depth: u32 },
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::Farm => "farm",
            TopologyKind::Star => "star",
            TopologyKind::Bus => "bus",
            TopologyKind::Ring => "ring",
            TopologyKind::Mesh2d { .. } => "mesh2d",
            TopologyKind::Hypercube { .. } => "hypercube",
            TopologyKind::Tree { .. } => "tree",
        }
    }

    /// Process count implied by the shape, for kinds that have one.
    pub fn implied_size(&self) -> Option<usize> {
        match *self {
            TopologyKind::Mesh2d { rows, cols } => Some(rows.saturating_mul(cols)),
            TopologyKind::Hypercube { dim } => 1usize.checked_shl(dim),
            TopologyKind::Tree { arity, depth } => Some(tree_size(arity, depth)),
            _ => None,
        }
    }
}

/// Rank count of a complete tree, saturating on overflow.
fn tree_size(arity: usize, depth: u32) -> usize {
    let mut total: usize = 0;
    let mut level: usize = 1;
    for _ in 0..=depth {
        total = total.saturating_add(level);
        level = level.saturating_mul(arity.max(1));
    }
    total
}

/// A named regular topology together with its process count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub p: usize,
}

impl TopologySpec {
    pub fn new(kind: TopologyKind, p: usize) -> Self {
        TopologySpec { kind, p }
    }

    pub fn farm(p: usize) -> Self {
        Self::new(TopologyKind::Farm, p)
    }

    pub fn star(p: usize) -> Self {
        Self::new(TopologyKind::Star, p)
    }

    pub fn bus(p: usize) -> Self {
        Self::new(TopologyKind::Bus, p)
    }

    pub fn ring(p: usize) -> Self {
        Self::new(TopologyKind::Ring, p)
    }

    pub fn mesh2d(rows: usize, cols: usize) -> Self {
        Self::new(TopologyKind::Mesh2d { rows, cols }, rows * cols)
    }

    pub fn hypercube(dim: u32) -> Self {
        Self::new(TopologyKind::Hypercube { dim }, 1usize << dim)
    }

    pub fn tree(arity: usize, depth: u32) -> Self {
        Self::new(TopologyKind::Tree { arity, depth }, tree_size(arity, depth))
    }

    pub fn check(&self) -> Result<(), TopologyError> {
        let p = self.p;
        if p == 0 {
            return Err(TopologyError::TooFewProcesses { kind: self.kind.name(), min: 1, p });
        }
        match self.kind {
            TopologyKind::Farm | TopologyKind::Star if p < 2 => {
                Err(TopologyError::TooFewProcesses { kind: self.kind.name(), min: 2, p })
            }
            TopologyKind::Ring if p < 3 => Err(TopologyError::TooFewProcesses { kind: "ring", min: 3, p }),
            TopologyKind::Mesh2d { rows, cols } => {
                if rows == 0 {
                    return Err(TopologyError::BadShape { kind: "mesh2d", name: "rows", min: 1 });
                }
                if cols == 0 {
                    return Err(TopologyError::BadShape { kind: "mesh2d", name: "cols", min: 1 });
                }
                if rows.saturating_mul(cols) != p {
                    return Err(TopologyError::ShapeMismatch(format!(
                        "mesh2d shape {rows}×{cols}={} ≠ process count {p}",
                        rows.saturating_mul(cols)
                    )));
                }
                Ok(())
            }
            TopologyKind::Hypercube { dim } => {
                if dim >= usize::BITS - 1 || (1usize << dim) != p {
                    return Err(TopologyError::ShapeMismatch(format!(
                        "hypercube dimension {dim} gives 2^{dim} ranks ≠ process count {p}"
                    )));
                }
                Ok(())
            }
            TopologyKind::Tree { arity, depth } => {
                if arity == 0 {
                    return Err(TopologyError::BadShape { kind: "tree", name: "arity", min: 1 });
                }
                let n = tree_size(arity, depth);
                if n != p {
                    return Err(TopologyError::ShapeMismatch(format!(
                        "tree arity {arity} depth {depth} has {n} ranks ≠ process count {p}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TopologyKind::Mesh2d { rows, cols } => write!(f, "mesh2d({rows},{cols})"),
            TopologyKind::Hypercube { dim } => write!(f, "hypercube({dim})"),
            TopologyKind::Tree { arity, depth } => write!(f, "tree({arity},{depth})"),
            k => write!(f, "{}({})", k.name(), self.p),
        }
    }
}

/// Rank-indexed undirected graph realised from a [`TopologySpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessGraph {
    spec: TopologySpec,
    adjacency: Vec<Vec<Rank>>,
    medium: bool,
}

/// Realise the graph for `spec`.
///
/// Rank numbering: farm/star master is rank 0, ring ranks in cycle order,
/// mesh2d row-major, hypercube by binary label, tree breadth-first from root 0.
pub fn build_topology(spec: &TopologySpec) -> Result<ProcessGraph, TopologyError> {
    spec.check()?;
    let p = spec.p;
    let mut edges: Vec<(Rank, Rank)> = Vec::new();
    match spec.kind {
        TopologyKind::Farm | TopologyKind::Star => edges.extend((1..p).map(|r| (0, r))),
        TopologyKind::Bus => {
            for u in 0..p {
                edges.extend((u + 1..p).map(|v| (u, v)));
            }
        }
        TopologyKind::Ring => edges.extend((0..p).map(|r| (r, (r + 1) % p))),
        TopologyKind::Mesh2d { rows, cols } => {
            for r in 0..rows {
                for c in 0..cols {
                    let u = r * cols + c;
                    if c + 1 < cols {
                        edges.push((u, u + 1));
                    }
                    if r + 1 < rows {
                        edges.push((u, u + cols));
                    }
                }
            }
        }
        TopologyKind::Hypercube { dim } => {
            for u in 0..p {
                for b in 0..dim {
                    let v = u ^ (1 << b);
                    if u < v {
                        edges.push((u, v));
                    }
                }
            }
        }
        TopologyKind::Tree { arity, .. } => {
            for child in 1..p {
                edges.push(((child - 1) / arity, child));
            }
        }
    }
    let mut adjacency = vec![Vec::new(); p];
    for (u, v) in edges {
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    Ok(ProcessGraph { spec: *spec, adjacency, medium: spec.kind == TopologyKind::Bus })
}

impl ProcessGraph {
    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// True only for the bus kind (shared medium).
    pub fn is_medium(&self) -> bool {
        self.medium
    }

    pub fn degree(&self, u: Rank) -> usize {
        self.adjacency[u].len()
    }

    /// Sorted ascending neighbour ranks.
    pub fn neighbors(&self, u: Rank) -> Result<&[Rank], TopologyError> {
        self.check_rank(u)?;
        Ok(&self.adjacency[u])
    }

    pub fn is_adjacent(&self, u: Rank, v: Rank) -> bool {
        u < self.len() && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Undirected edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(Rank, Rank)> {
        let mut out = Vec::new();
        for (u, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Shortest path length. The bus is one hop between any two ranks.
    pub fn shortest_hops(&self, u: Rank, v: Rank) -> Result<u32, TopologyError> {
        self.check_rank(u)?;
        self.check_rank(v)?;
        if u == v {
            return Ok(0);
        }
        if self.medium {
            return Ok(1);
        }
        Ok(self.bfs(u)[v])
    }

    /// All-pairs hop counts, one breadth-first search per source.
    pub fn hop_table(&self) -> Vec<Vec<u32>> {
        (0..self.len())
            .map(|u| if self.medium { (0..self.len()).map(|v| u32::from(u != v)).collect() } else { self.bfs(u) })
            .collect()
    }

    fn bfs(&self, src: Rank) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        dist[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    fn check_rank(&self, u: Rank) -> Result<(), TopologyError> {
        if u >= self.len() {
            Err(TopologyError::RankOutOfRange { rank: u, p: self.len() })
        } else {
            Ok(())
        }
    }
}

/// Completion semantics of a blocking send.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum SendMode {
    /// Sender blocks until the matching receive is posted.
    #[default]
    Rendezvous,
    /// Sender pays the transfer cost locally and continues.
    Buffered,
}

impl SendMode {
    pub fn name(&self) -> &'static str {
        match self {
            SendMode::Rendezvous => "rendezvous",
            SendMode::Buffered => "buffered",
        }
    }
}

/// Linear point-to-point cost `t_startup + bytes * t_byte` (µs), optionally
/// multiplied by the hop distance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostModel {
    pub t_startup: f64,
    pub t_byte: f64,
    pub hop_scaling: bool,
    pub send_mode: SendMode,
}

impl CostModel {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn message(&self, bytes: f64, hops: u32) -> f64 {
        let base = self.t_startup + bytes * self.t_byte;
        if self.hop_scaling {
            base * f64::from(hops)
        } else {
            base
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.t_startup.is_finite() && self.t_startup >= 0.0) {
            return Err(format!("t_startup must be finite and non-negative, got {}", self.t_startup));
        }
        if !(self.t_byte.is_finite() && self.t_byte >= 0.0) {
            return Err(format!("t_byte must be finite and non-negative, got {}", self.t_byte));
        }
        Ok(())
    }
}

/// Named scalar bindings (problem size `N`, process count `P`, ...).
/// Declaration order is kept for printing; equality ignores it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(IndexMap<String, f64>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    /// Insert or overwrite. Returns the previous value.
    pub fn set(&mut self, name: impl Into<String>, value: f64) -> Option<f64> {
        self.0.insert(name.into(), value)
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` shadowed by every binding in `overrides`.
    pub fn merged(&self, overrides: &Params) -> Params {
        let mut out = self.clone();
        for (k, v) in overrides.iter() {
            out.set(k, v);
        }
        out
    }
}

impl FromIterator<(String, f64)> for Params {
    fn from_iter<T: IntoIterator<Item = (String, f64)>>(iter: T) -> Self {
        Params(iter.into_iter().collect())
    }
}
