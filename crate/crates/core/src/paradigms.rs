//! Generators for ready-made models of the common parallel paradigms.
//!
//! Generators emit DSL text and parse it, so every generated model is a
//! fixpoint of print-then-parse. Ranks of single-rank roles are named `p<r>`.

use std::fmt::Write;

use thiserror::Error;

use crate::model::{CostModel, Params, TopologySpec};
use crate::parser::{fmt_number, parse_model, Model, Node, NodeKind, Policy, Role};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ParadigmError(pub String);

fn invalid(msg: impl Into<String>) -> ParadigmError {
    ParadigmError(msg.into())
}

fn check_amount(what: &str, v: f64) -> Result<(), ParadigmError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be a finite non-negative number, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterWorker {
    pub workers: usize,
    /// Per-task compute cost in µs, in dispatch order.
    pub tasks: Vec<f64>,
    pub policy: Policy,
    pub payload_bytes: f64,
    pub result_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spmd {
    pub p: usize,
    /// Problem size in elements.
    pub n: usize,
    pub element_cost: f64,
    pub halo_bytes: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub stages: usize,
    pub items: usize,
    pub stage_cost: f64,
    pub item_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivideConquer {
    pub arity: usize,
    pub depth: u32,
    pub split_cost: f64,
    pub leaf_cost: f64,
    pub join_cost: f64,
    pub data_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloPi {
    pub p: usize,
    pub n: f64,
    pub sample_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParadigmSpec {
    MasterWorker(MasterWorker),
    Spmd(Spmd),
    Pipeline(Pipeline),
    DivideConquer(DivideConquer),
    MonteCarloPi(MonteCarloPi),
    /// Parts run one after the other on a shared role layout.
    Hybrid(Vec<ParadigmSpec>),
}

impl ParadigmSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ParadigmSpec::MasterWorker(_) => "master_worker",
            ParadigmSpec::Spmd(_) => "spmd",
            ParadigmSpec::Pipeline(_) => "pipeline",
            ParadigmSpec::DivideConquer(_) => "divide_conquer",
            ParadigmSpec::MonteCarloPi(_) => "pi_montecarlo",
            ParadigmSpec::Hybrid(_) => "hybrid",
        }
    }

    pub fn generate(&self, costs: &CostModel) -> Result<Model, ParadigmError> {
        let mut m = match self {
            ParadigmSpec::MasterWorker(s) => parse_generated(&master_worker_text(s)?),
            ParadigmSpec::Spmd(s) => parse_generated(&spmd_text(s)?),
            ParadigmSpec::Pipeline(s) => parse_generated(&pipeline_text(s)?),
            ParadigmSpec::DivideConquer(s) => parse_generated(&divide_conquer_text(s)?),
            ParadigmSpec::MonteCarloPi(s) => parse_generated(&pi_text(s)?),
            ParadigmSpec::Hybrid(parts) => compose(parts, costs)?,
        };
        m.costs = *costs;
        Ok(m)
    }

    pub fn process_count(&self) -> usize {
        match self {
            ParadigmSpec::MasterWorker(s) => s.workers + 1,
            ParadigmSpec::Spmd(s) => s.p,
            ParadigmSpec::Pipeline(s) => s.stages,
            ParadigmSpec::DivideConquer(s) => TopologySpec::tree(s.arity, s.depth).p,
            ParadigmSpec::MonteCarloPi(s) => s.p,
            ParadigmSpec::Hybrid(parts) => parts.first().map_or(0, ParadigmSpec::process_count),
        }
    }

    /// Total compute of one sequential execution, in µs.
    pub fn sequential_work(&self) -> f64 {
        match self {
            ParadigmSpec::MasterWorker(s) => s.tasks.iter().sum(),
            ParadigmSpec::Spmd(s) => s.steps as f64 * (s.n as f64 * s.element_cost),
            ParadigmSpec::Pipeline(s) => s.items as f64 * s.stages as f64 * s.stage_cost,
            ParadigmSpec::DivideConquer(s) => {
                let n = TopologySpec::tree(s.arity, s.depth).p;
                let internal = if s.depth == 0 { 0 } else { TopologySpec::tree(s.arity, s.depth - 1).p };
                internal as f64 * (s.split_cost + s.join_cost) + (n - internal) as f64 * s.leaf_cost
            }
            ParadigmSpec::MonteCarloPi(s) => s.n * s.sample_cost,
            ParadigmSpec::Hybrid(parts) => parts.iter().map(ParadigmSpec::sequential_work).sum(),
        }
    }

    /// Single-rank model doing the sequential work with no communication.
    pub fn sequential(&self, costs: &CostModel) -> Result<Model, ParadigmError> {
        let mut m = sequential_model(&format!("{}_sequential", self.kind_name()), self.sequential_work())?;
        m.costs = *costs;
        Ok(m)
    }

    /// Same paradigm on `p` processes.
    pub fn with_process_count(&self, p: usize) -> Result<ParadigmSpec, ParadigmError> {
        Ok(match self {
            ParadigmSpec::MasterWorker(s) => {
                if p < 2 {
                    return Err(invalid("master_worker needs at least 2 processes"));
                }
                ParadigmSpec::MasterWorker(MasterWorker { workers: p - 1, ..s.clone() })
            }
            ParadigmSpec::Spmd(s) => ParadigmSpec::Spmd(Spmd { p, ..s.clone() }),
            ParadigmSpec::Pipeline(s) => ParadigmSpec::Pipeline(Pipeline { stages: p, ..s.clone() }),
            ParadigmSpec::DivideConquer(_) => {
                return Err(invalid("divide_conquer process count is fixed by arity and depth"))
            }
            ParadigmSpec::MonteCarloPi(s) => ParadigmSpec::MonteCarloPi(MonteCarloPi { p, ..s.clone() }),
            ParadigmSpec::Hybrid(parts) => {
                ParadigmSpec::Hybrid(parts.iter().map(|s| s.with_process_count(p)).collect::<Result<_, _>>()?)
            }
        })
    }

    /// Same paradigm on a problem of size `n`: tasks (master-worker, reusing the
    /// first task cost), elements (SPMD), items (pipeline) or samples (PI).
    pub fn with_problem_size(&self, n: f64) -> Result<ParadigmSpec, ParadigmError> {
        check_amount("problem size", n)?;
        let count = (n + 0.5).floor() as usize;
        Ok(match self {
            ParadigmSpec::MasterWorker(s) => {
                let c = *s.tasks.first().ok_or_else(|| invalid("master_worker has no tasks"))?;
                ParadigmSpec::MasterWorker(MasterWorker { tasks: vec![c; count], ..s.clone() })
            }
            ParadigmSpec::Spmd(s) => ParadigmSpec::Spmd(Spmd { n: count, ..s.clone() }),
            ParadigmSpec::Pipeline(s) => ParadigmSpec::Pipeline(Pipeline { items: count, ..s.clone() }),
            ParadigmSpec::DivideConquer(_) => return Err(invalid("divide_conquer has no problem-size parameter")),
            ParadigmSpec::MonteCarloPi(s) => ParadigmSpec::MonteCarloPi(MonteCarloPi { n, ..s.clone() }),
            ParadigmSpec::Hybrid(parts) => {
                ParadigmSpec::Hybrid(parts.iter().map(|s| s.with_problem_size(n)).collect::<Result<_, _>>()?)
            }
        })
    }
}

pub fn gen_master_worker(
    workers: usize,
    tasks: &[f64],
    policy: Policy,
    payload_bytes: f64,
    result_bytes: f64,
) -> Result<Model, ParadigmError> {
    ParadigmSpec::MasterWorker(MasterWorker { workers, tasks: tasks.to_vec(), policy, payload_bytes, result_bytes })
        .generate(&CostModel::default())
}

pub fn gen_spmd(p: usize, n: usize, element_cost: f64, halo_bytes: f64, steps: usize) -> Result<Model, ParadigmError> {
    ParadigmSpec::Spmd(Spmd { p, n, element_cost, halo_bytes, steps }).generate(&CostModel::default())
}

pub fn gen_pipeline(stages: usize, items: usize, stage_cost: f64) -> Result<Model, ParadigmError> {
    ParadigmSpec::Pipeline(Pipeline { stages, items, stage_cost, item_bytes: 8.0 }).generate(&CostModel::default())
}

pub fn gen_divide_conquer(
    arity: usize,
    depth: u32,
    split_cost: f64,
    leaf_cost: f64,
    join_cost: f64,
) -> Result<Model, ParadigmError> {
    ParadigmSpec::DivideConquer(DivideConquer { arity, depth, split_cost, leaf_cost, join_cost, data_bytes: 8.0 })
        .generate(&CostModel::default())
}

pub fn gen_monte_carlo_pi(p: usize, n: f64, sample_cost: f64) -> Result<Model, ParadigmError> {
    ParadigmSpec::MonteCarloPi(MonteCarloPi { p, n, sample_cost }).generate(&CostModel::default())
}

pub fn gen_hybrid(parts: Vec<ParadigmSpec>) -> Result<Model, ParadigmError> {
    ParadigmSpec::Hybrid(parts).generate(&CostModel::default())
}

/// `bus(1)` model with one action of `work` µs.
pub fn sequential_model(name: &str, work: f64) -> Result<Model, ParadigmError> {
    check_amount("sequential work", work)?;
    let text = format!(
        "model \"{name}\"\ntopology bus(1)\nrole p0 on rank 0 {{\n  action \"sequential\" cost {}us\n}}\n",
        fmt_number(work)
    );
    Ok(parse_generated(&text))
}

fn parse_generated(text: &str) -> Model {
    match parse_model(text) {
        Ok(m) => m,
        Err(e) => panic!("generated model does not parse: {e}\n{text}"),
    }
}

fn us(v: f64) -> String {
    format!("{}us", fmt_number(v))
}

fn bytes(v: f64) -> String {
    format!("{}B", fmt_number(v))
}

fn master_worker_text(s: &MasterWorker) -> Result<String, ParadigmError> {
    if s.workers == 0 {
        return Err(invalid("master_worker needs at least one worker"));
    }
    if s.tasks.is_empty() {
        return Err(invalid("master_worker task list is empty"));
    }
    for &c in &s.tasks {
        check_amount("task cost", c)?;
    }
    check_amount("payload size", s.payload_bytes)?;
    check_amount("result size", s.result_bytes)?;
    let uniform = s.tasks.iter().all(|&c| c == s.tasks[0]);
    let cost = if uniform {
        us(s.tasks[0])
    } else {
        let items: Vec<String> = s.tasks.iter().map(|&c| us(c)).collect();
        format!("[{}]", items.join(", "))
    };
    Ok(format!(
        "model \"master_worker\"
topology farm(P)
params {{
  P = {p}
}}
role master on rank 0 {{
  taskpool count {n} cost {cost} policy {policy} payload {payload} result {result}
}}
role worker on ranks 1..P - 1 {{
  workerloop
}}
",
        p = s.workers + 1,
        n = s.tasks.len(),
        policy = s.policy.as_str(),
        payload = bytes(s.payload_bytes),
        result = bytes(s.result_bytes),
    ))
}

fn spmd_text(s: &Spmd) -> Result<String, ParadigmError> {
    if s.p == 0 || s.steps == 0 {
        return Err(invalid("spmd needs p ≥ 1 and steps ≥ 1"));
    }
    if s.n < s.p {
        return Err(invalid(format!("spmd problem size {} is smaller than p = {}", s.n, s.p)));
    }
    check_amount("element cost", s.element_cost)?;
    check_amount("halo size", s.halo_bytes)?;
    let p = s.p;
    let topology = if p >= 3 { format!("ring({p})") } else { format!("mesh2d(1, {p})") };
    let chunk = s.n.div_ceil(p);
    let mut out = format!("model \"spmd\"\ntopology {topology}\n");
    for r in 0..p {
        let mut body = vec![format!("action \"compute\" cost {chunk} * {}", us(s.element_cost))];
        let (left, right) = ((r + p - 1) % p, (r + 1) % p);
        let mut neighbors = vec![left];
        if right != left {
            neighbors.push(right);
        }
        neighbors.retain(|&q| q != r);
        // post every send first so no ordering of ranks can deadlock
        for (i, q) in neighbors.iter().enumerate() {
            body.push(format!("send to p{q} size {} nonblocking as h{i}", bytes(s.halo_bytes)));
        }
        for q in &neighbors {
            body.push(format!("recv from p{q} size {}", bytes(s.halo_bytes)));
        }
        for i in 0..neighbors.len() {
            body.push(format!("wait h{i}"));
        }
        role_block(&mut out, &format!("p{r}"), r, &body, s.steps);
    }
    Ok(out)
}

fn pipeline_text(s: &Pipeline) -> Result<String, ParadigmError> {
    if s.stages == 0 || s.items == 0 {
        return Err(invalid("pipeline needs stages ≥ 1 and items ≥ 1"));
    }
    check_amount("stage cost", s.stage_cost)?;
    check_amount("item size", s.item_bytes)?;
    let mut out = format!("model \"pipeline\"\ntopology mesh2d(1, {})\n", s.stages);
    for r in 0..s.stages {
        let mut body = Vec::new();
        if r > 0 {
            body.push(format!("recv from p{} size {}", r - 1, bytes(s.item_bytes)));
        }
        body.push(format!("action \"stage {r}\" cost {}", us(s.stage_cost)));
        if r + 1 < s.stages {
            body.push(format!("send to p{} size {} blocking", r + 1, bytes(s.item_bytes)));
        }
        role_block_loop(&mut out, &format!("p{r}"), r, &body, s.items);
    }
    Ok(out)
}

fn divide_conquer_text(s: &DivideConquer) -> Result<String, ParadigmError> {
    if s.arity < 2 {
        return Err(invalid("divide_conquer needs arity ≥ 2"));
    }
    for (what, v) in [("split cost", s.split_cost), ("leaf cost", s.leaf_cost), ("join cost", s.join_cost)] {
        check_amount(what, v)?;
    }
    check_amount("data size", s.data_bytes)?;
    let spec = TopologySpec::tree(s.arity, s.depth);
    spec.check().map_err(|e| invalid(e.to_string()))?;
    let n = spec.p;
    if n > 1 << 16 {
        return Err(invalid(format!("divide_conquer tree of {n} ranks is too large")));
    }
    let size = bytes(s.data_bytes);
    let mut out = format!("model \"divide_conquer\"\ntopology tree({}, {})\n", s.arity, s.depth);
    for r in 0..n {
        let mut body = Vec::new();
        let parent = (r > 0).then(|| (r - 1) / s.arity);
        if let Some(q) = parent {
            body.push(format!("recv from p{q} size {size}"));
        }
        let children: Vec<usize> = (s.arity * r + 1..=s.arity * r + s.arity).filter(|&c| c < n).collect();
        if children.is_empty() {
            body.push(format!("action \"leaf\" cost {}", us(s.leaf_cost)));
        } else {
            body.push(format!("action \"split\" cost {}", us(s.split_cost)));
            for c in &children {
                body.push(format!("send to p{c} size {size} blocking"));
            }
            for c in &children {
                body.push(format!("recv from p{c} size {size}"));
            }
            body.push(format!("action \"join\" cost {}", us(s.join_cost)));
        }
        if let Some(q) = parent {
            body.push(format!("send to p{q} size {size} blocking"));
        }
        role_block(&mut out, &format!("p{r}"), r, &body, 1);
    }
    Ok(out)
}

fn pi_text(s: &MonteCarloPi) -> Result<String, ParadigmError> {
    if s.p < 2 {
        return Err(invalid("pi_montecarlo needs P ≥ 2"));
    }
    check_amount("sample count", s.n)?;
    check_amount("sample cost", s.sample_cost)?;
    Ok(format!(
        "model \"pi_montecarlo\"
topology farm(P)
params {{
  N = {n}
  P = {p}
}}
role master on rank 0 {{
  collective bcast root master size 8B  # MPI_Bcast
  loop P - 1 {{
    recv from worker size 8B  # MPI_Recv
  }}
  action \"reduce\" cost 5us
}}
role worker on ranks 1..P - 1 {{
  collective bcast root master size 8B  # MPI_Bcast
  action \"sample\" cost N / (P - 1) * {cost}
  send to master size 8B blocking  # MPI_Send
}}
",
        n = fmt_number(s.n),
        p = s.p,
        cost = us(s.sample_cost),
    ))
}

fn role_block(out: &mut String, name: &str, rank: usize, body: &[String], repeat: usize) {
    if repeat == 1 {
        let _ = writeln!(out, "role {name} on rank {rank} {{");
        for line in body {
            let _ = writeln!(out, "  {line}");
        }
        out.push_str("}\n");
    } else {
        role_block_loop(out, name, rank, body, repeat);
    }
}

fn role_block_loop(out: &mut String, name: &str, rank: usize, body: &[String], repeat: usize) {
    let _ = writeln!(out, "role {name} on rank {rank} {{\n  loop {repeat} {{");
    for line in body {
        let _ = writeln!(out, "    {line}");
    }
    out.push_str("  }\n}\n");
}

fn compose(parts: &[ParadigmSpec], costs: &CostModel) -> Result<Model, ParadigmError> {
    let first = parts.first().ok_or_else(|| invalid("hybrid needs at least one part"))?;
    let models: Vec<Model> = parts.iter().map(|s| s.generate(costs)).collect::<Result<_, _>>()?;
    let base = &models[0];
    let mut params = Params::new();
    for m in &models {
        for (k, v) in m.params.iter() {
            match params.get(k) {
                Some(old) if old != v => {
                    return Err(invalid(format!("hybrid parts disagree on param `{k}`: {old} vs {v}")))
                }
                _ => {
                    params.set(k, v);
                }
            }
        }
    }
    let layout = |m: &Model| -> Result<Vec<(String, usize, usize)>, ParadigmError> {
        m.roles
            .iter()
            .map(|r| {
                let range = r.ranks.resolve(&m.params).map_err(|e| invalid(e.to_string()))?;
                Ok((r.name.clone(), *range.start(), *range.end()))
            })
            .collect()
    };
    let base_layout = layout(base)?;
    for (spec, m) in parts.iter().zip(&models).skip(1) {
        if layout(m)? != base_layout {
            return Err(invalid(format!(
                "hybrid part {} does not share the role layout of {}",
                spec.kind_name(),
                first.kind_name()
            )));
        }
    }
    let roles = base
        .roles
        .iter()
        .enumerate()
        .map(|(i, role)| Role {
            flow: parts
                .iter()
                .zip(&models)
                .map(|(spec, m)| {
                    Node::new(NodeKind::Subactivity {
                        name: spec.kind_name().to_string(),
                        body: m.roles[i].flow.clone(),
                    })
                })
                .collect(),
            ..role.clone()
        })
        .collect();
    Ok(Model { name: "hybrid".into(), topology: base.topology.clone(), costs: *costs, params, roles })
}
