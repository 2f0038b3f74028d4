#![allow(dead_code)]

use std::path::PathBuf;

use parmodel::model::{CostModel, TopologyKind, TopologySpec};
use parmodel::paradigms::{DivideConquer, MasterWorker, MonteCarloPi, ParadigmSpec, Pipeline, Spmd};
use parmodel::parser::{parse_model, Model, Policy};

pub const EPS: f64 = 1e-9;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples")
}

pub struct CorpusModel {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub model: Model,
}

/// Every `.pmod` in the shipped corpus, sorted by file name.
pub fn corpus() -> Vec<CorpusModel> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("corpus dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "pmod"))
        .collect();
    paths.sort();
    assert!(paths.len() >= 10, "corpus shrank to {} files", paths.len());
    paths
        .into_iter()
        .map(|path| {
            let source = std::fs::read_to_string(&path).expect("read corpus file");
            let model = parse_model(&source).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            CorpusModel { name, path, source, model }
        })
        .collect()
}

pub fn is_deadlock_fixture(name: &str) -> bool {
    name.starts_with("deadlock")
}

/// Paradigm specs covering every generator, all with zero-cost communication in mind.
pub fn paradigm_specs() -> Vec<ParadigmSpec> {
    vec![
        ParadigmSpec::MasterWorker(MasterWorker {
            workers: 3,
            tasks: vec![40.0, 10.0, 70.0, 20.0, 30.0],
            policy: Policy::Dynamic,
            payload_bytes: 64.0,
            result_bytes: 8.0,
        }),
        ParadigmSpec::MasterWorker(MasterWorker {
            workers: 2,
            tasks: vec![10.0, 10.0, 10.0, 10.0, 70.0, 70.0],
            policy: Policy::Static,
            payload_bytes: 8.0,
            result_bytes: 8.0,
        }),
        ParadigmSpec::Spmd(Spmd { p: 4, n: 4000, element_cost: 0.5, halo_bytes: 256.0, steps: 3 }),
        ParadigmSpec::Spmd(Spmd { p: 2, n: 100, element_cost: 1.0, halo_bytes: 8.0, steps: 1 }),
        ParadigmSpec::Pipeline(Pipeline { stages: 3, items: 5, stage_cost: 7.0, item_bytes: 32.0 }),
        ParadigmSpec::DivideConquer(DivideConquer {
            arity: 2,
            depth: 3,
            split_cost: 5.0,
            leaf_cost: 50.0,
            join_cost: 5.0,
            data_bytes: 128.0,
        }),
        ParadigmSpec::DivideConquer(DivideConquer {
            arity: 3,
            depth: 1,
            split_cost: 1.0,
            leaf_cost: 9.0,
            join_cost: 2.0,
            data_bytes: 8.0,
        }),
        ParadigmSpec::MonteCarloPi(MonteCarloPi { p: 5, n: 1e6, sample_cost: 0.1 }),
        ParadigmSpec::Hybrid(vec![
            ParadigmSpec::MonteCarloPi(MonteCarloPi { p: 3, n: 1e4, sample_cost: 0.1 }),
            ParadigmSpec::MasterWorker(MasterWorker {
                workers: 2,
                tasks: vec![30.0, 50.0, 20.0],
                policy: Policy::Dynamic,
                payload_bytes: 8.0,
                result_bytes: 8.0,
            }),
        ]),
    ]
}

pub fn generated_models(costs: &CostModel) -> Vec<Model> {
    paradigm_specs().iter().map(|s| s.generate(costs).expect("generate")).collect()
}

/// Every topology with at most `max_p` ranks.
pub fn all_topologies(max_p: usize) -> Vec<TopologySpec> {
    let mut out = Vec::new();
    for p in 1..=max_p {
        out.push(TopologySpec::bus(p));
        if p >= 2 {
            out.push(TopologySpec::farm(p));
            out.push(TopologySpec::star(p));
        }
        if p >= 3 {
            out.push(TopologySpec::ring(p));
        }
        for rows in 1..=p {
            if p % rows == 0 {
                out.push(TopologySpec::mesh2d(rows, p / rows));
            }
        }
    }
    for dim in 0..=6u32 {
        if 1usize << dim <= max_p {
            out.push(TopologySpec::hypercube(dim));
        }
    }
    for arity in 1..=max_p {
        for depth in 0..=max_p as u32 {
            let spec = TopologySpec::tree(arity, depth);
            if spec.p > max_p {
                break;
            }
            out.push(spec);
        }
    }
    out
}

/// Adjacency written directly from each kind's definition.
pub fn oracle_adjacency(spec: &TopologySpec) -> Vec<Vec<bool>> {
    let p = spec.p;
    let mut adj = vec![vec![false; p]; p];
    for (u, row) in adj.iter_mut().enumerate() {
        for (v, cell) in row.iter_mut().enumerate() {
            if u == v {
                continue;
            }
            *cell = match spec.kind {
                TopologyKind::Farm | TopologyKind::Star => u == 0 || v == 0,
                TopologyKind::Bus => true,
                TopologyKind::Ring => (u + 1) % p == v || (v + 1) % p == u,
                TopologyKind::Mesh2d { cols, .. } => {
                    let (ur, uc) = (u / cols, u % cols);
                    let (vr, vc) = (v / cols, v % cols);
                    ur.abs_diff(vr) + uc.abs_diff(vc) == 1
                }
                TopologyKind::Hypercube { .. } => (u ^ v).count_ones() == 1,
                TopologyKind::Tree { arity, .. } => (v > 0 && (v - 1) / arity == u) || (u > 0 && (u - 1) / arity == v),
            };
        }
    }
    adj
}

pub const UNREACHABLE: u32 = u32::MAX;

pub fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<u32>> {
    let p = adj.len();
    let mut d = vec![vec![UNREACHABLE; p]; p];
    for u in 0..p {
        d[u][u] = 0;
        for v in 0..p {
            if adj[u][v] {
                d[u][v] = 1;
            }
        }
    }
    for k in 0..p {
        for i in 0..p {
            if d[i][k] == UNREACHABLE {
                continue;
            }
            for j in 0..p {
                if d[k][j] != UNREACHABLE && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Node ids and undirected edges of a parsed DOT graph.
pub type DotGraph = (Vec<String>, Vec<(String, String)>);

/// Minimal DOT reader for the subset the exporter may use: one `graph`/`digraph`
/// with node, edge and attribute statements. Returns (node ids, edges) or the
/// first grammar violation.
pub fn parse_dot(src: &str) -> Result<DotGraph, String> {
    let toks = dot_tokens(src)?;
    let mut i = 0;
    let next = |i: &mut usize| -> Result<String, String> {
        let t = toks.get(*i).cloned().ok_or("unexpected end of input")?;
        *i += 1;
        Ok(t)
    };
    let mut head = next(&mut i)?;
    if head == "strict" {
        head = next(&mut i)?;
    }
    let directed = match head.as_str() {
        "graph" => false,
        "digraph" => true,
        other => return Err(format!("expected `graph`, got `{other}`")),
    };
    let mut t = next(&mut i)?;
    if t != "{" {
        if !is_id(&t) {
            return Err(format!("bad graph id `{t}`"));
        }
        t = next(&mut i)?;
    }
    if t != "{" {
        return Err(format!("expected `{{`, got `{t}`"));
    }
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    loop {
        let t = next(&mut i)?;
        if t == "}" {
            break;
        }
        if t == ";" {
            continue;
        }
        if !is_id(&t) {
            return Err(format!("expected statement, got `{t}`"));
        }
        let mut chain = vec![t.clone()];
        while let Some(op) = toks.get(i).filter(|s| *s == "--" || *s == "->") {
            if (op == "->") != directed {
                return Err(format!("edge operator `{op}` in wrong graph kind"));
            }
            i += 1;
            let v = next(&mut i)?;
            if !is_id(&v) {
                return Err(format!("bad edge endpoint `{v}`"));
            }
            chain.push(v);
        }
        if toks.get(i).is_some_and(|s| s == "=") {
            i += 1;
            let v = next(&mut i)?;
            if !is_id(&v) {
                return Err(format!("bad attribute value `{v}`"));
            }
            continue;
        }
        while toks.get(i).is_some_and(|s| s == "[") {
            i += 1;
            loop {
                let k = next(&mut i)?;
                if k == "]" {
                    break;
                }
                if k == "," || k == ";" {
                    continue;
                }
                if !is_id(&k) || next(&mut i)? != "=" || !is_id(&next(&mut i)?) {
                    return Err(format!("bad attribute near `{k}`"));
                }
            }
        }
        let keyword = matches!(t.as_str(), "node" | "edge" | "graph");
        if chain.len() == 1 {
            if !keyword {
                nodes.push(unquote(&t));
            }
        } else {
            if keyword {
                return Err(format!("keyword `{t}` used as edge endpoint"));
            }
            for w in chain.windows(2) {
                edges.push((unquote(&w[0]), unquote(&w[1])));
            }
        }
    }
    if i != toks.len() {
        return Err("trailing input after closing brace".into());
    }
    Ok((nodes, edges))
}

fn is_id(t: &str) -> bool {
    if t.starts_with('"') {
        return t.len() >= 2 && t.ends_with('"');
    }
    let numeral =
        t.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-') && t.chars().any(|c| c.is_ascii_digit());
    let ident = t.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    numeral || ident
}

fn unquote(t: &str) -> String {
    t.trim_matches('"').to_string()
}

fn dot_tokens(src: &str) -> Result<Vec<String>, String> {
    let cs: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '"' {
            let start = i;
            i += 1;
            while i < cs.len() && cs[i] != '"' {
                if cs[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            if i >= cs.len() {
                return Err("unterminated string".into());
            }
            i += 1;
            out.push(cs[start..i].iter().collect());
        } else if "{}[];,=".contains(c) {
            out.push(c.to_string());
            i += 1;
        } else if c == '-' && matches!(cs.get(i + 1), Some('-') | Some('>')) {
            out.push(cs[i..i + 2].iter().collect());
            i += 2;
        } else if c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-' {
            let start = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_' || cs[i] == '.') {
                i += 1;
            }
            if i == start {
                i += 1;
            }
            out.push(cs[start..i].iter().collect());
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

/// `<<...>>` tokens in `text`, in order of appearance.
pub fn stereotype_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(a) = rest.find("<<") {
        let after = &rest[a..];
        match after.find(">>") {
            Some(b) => {
                out.push(after[..b + 2].to_string());
                rest = &after[b + 2..];
            }
            None => {
                out.push(after.to_string());
                break;
            }
        }
    }
    out
}
