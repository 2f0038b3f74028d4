mod common;

use std::collections::BTreeSet;

use common::{all_topologies, corpus, generated_models, is_deadlock_fixture, parse_dot, stereotype_tokens};
use parmodel::export::{export_sequence, export_swimlane, export_topology_dot, STEREOTYPES};
use parmodel::model::{build_topology, CostModel, ProcessGraph};
use parmodel::parser::{parse_model, Model};
use parmodel::simulate::run_model;

fn models() -> Vec<Model> {
    let mut out: Vec<Model> = corpus().into_iter().map(|c| c.model).collect();
    out.extend(generated_models(&CostModel { t_startup: 2.0, t_byte: 0.01, ..CostModel::default() }));
    out
}

fn graph(m: &Model) -> ProcessGraph {
    build_topology(&m.topology_spec(&m.params).unwrap()).unwrap()
}

#[test]
fn dot_checker_rejects_malformed_input() {
    assert!(parse_dot("graph g { a -- b; }").is_ok());
    assert!(parse_dot("graph g { a -> b; }").is_err());
    assert!(parse_dot("digraph g { a -- b; }").is_err());
    assert!(parse_dot("graph g { a -- ; }").is_err());
    assert!(parse_dot("graph g { a [label=\"x\" }").is_err());
    assert!(parse_dot("graph g { a -- b; } extra").is_err());
    assert!(parse_dot("graph \"unterminated { }").is_err());
    assert!(parse_dot("network g { }").is_err());
}

#[test]
fn topology_exports_are_valid_dot() {
    for m in models() {
        let g = graph(&m);
        let dot = export_topology_dot(&g, &m);
        let (nodes, edges) = parse_dot(&dot).unwrap_or_else(|e| panic!("{}: {e}\n{dot}", m.name));
        assert_eq!(nodes.len(), g.len(), "{}", m.name);
        assert_eq!(edges.len(), g.edge_count(), "{}", m.name);
        let ids: BTreeSet<&String> = nodes.iter().collect();
        assert_eq!(ids.len(), nodes.len(), "{}: duplicate node ids", m.name);
        for (u, v) in &edges {
            assert!(ids.contains(u) && ids.contains(v), "{}: edge {u}--{v} to undeclared node", m.name);
        }
    }
}

#[test]
fn every_small_topology_exports_valid_dot() {
    for spec in all_topologies(16) {
        let m = parse_model(&format!("model \"t\"\ntopology bus({})\nrole r on ranks 0..{} {{ }}", spec.p, spec.p - 1))
            .unwrap();
        let g = build_topology(&spec).unwrap();
        let dot = export_topology_dot(&g, &m);
        let (nodes, edges) = parse_dot(&dot).unwrap_or_else(|e| panic!("{spec}: {e}"));
        assert_eq!((nodes.len(), edges.len()), (g.len(), g.edge_count()), "{spec}");
        let mut expected: Vec<(String, String)> =
            g.edges().into_iter().map(|(u, v)| (format!("n{u}"), format!("n{v}"))).collect();
        let mut got = edges.clone();
        expected.sort();
        got.sort();
        assert_eq!(got, expected, "{spec}");
    }
}

#[test]
fn exports_are_deterministic() {
    for m in models() {
        let g = graph(&m);
        assert_eq!(export_topology_dot(&g, &m), export_topology_dot(&graph(&m), &m));
        assert_eq!(export_swimlane(&m), export_swimlane(&m.clone()));
        let a = run_model(&m).unwrap();
        let b = run_model(&m).unwrap();
        let p = g.len();
        assert_eq!(export_sequence(a.trace(), &m, &m.params, p), export_sequence(b.trace(), &m, &m.params, p));
    }
}

#[test]
fn stereotypes_come_from_closed_vocabulary() {
    let vocab: BTreeSet<&str> = STEREOTYPES.into_iter().collect();
    for m in models() {
        let g = graph(&m);
        let mut texts = vec![export_swimlane(&m)];
        let out = run_model(&m).unwrap();
        texts.push(export_sequence(out.trace(), &m, &m.params, g.len()));
        for text in texts {
            for tok in stereotype_tokens(&text) {
                assert!(vocab.contains(tok.as_str()), "{}: stray stereotype {tok}", m.name);
            }
        }
    }
}

#[test]
fn swimlane_has_one_lane_per_role() {
    for m in models() {
        let s = export_swimlane(&m);
        assert_eq!(s.lines().filter(|l| l.starts_with("lane ")).count(), m.roles.len(), "{}", m.name);
        let opens = s.lines().filter(|l| l.trim_start().starts_with("[loop ")).count();
        let closes = s.lines().filter(|l| l.trim() == "[end loop]").count();
        assert_eq!(opens, closes);
    }
}

#[test]
fn sequence_line_accounting_matches_metrics() {
    for c in corpus().iter().filter(|c| !is_deadlock_fixture(&c.name)) {
        let m = &c.model;
        let out = run_model(m).unwrap();
        let metrics = out.metrics().unwrap();
        let p = metrics.ranks.len();
        let text = export_sequence(out.trace(), m, &m.params, p);
        let lines: Vec<&str> = text.lines().collect();
        let message_lines = lines
            .iter()
            .filter(|l| l.starts_with('@') && l.contains(" -> P") && !l.contains("User") && !l.contains("MainProgram"))
            .count();
        assert_eq!(message_lines, metrics.message_count, "{}", c.name);
        let collective_lines = lines.iter().filter(|l| l.contains("MainProgram -> ")).count();
        assert_eq!(collective_lines, metrics.collective_count, "{}", c.name);
        let expected = metrics.message_count
            + metrics.collective_count
            + 2 * p
            + (p + 1)
            + usize::from(metrics.collective_count > 0);
        assert_eq!(lines.len(), expected, "{}", c.name);
        assert_eq!(lines.iter().filter(|l| l.ends_with("<<create>>")).count(), p);
        assert_eq!(lines.iter().filter(|l| l.ends_with("<<destroy>>")).count(), p);
        let times: Vec<f64> = lines
            .iter()
            .filter_map(|l| l.strip_prefix('@'))
            .map(|l| l.split(' ').next().unwrap().parse().unwrap())
            .collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]), "{}: body not time-ordered", c.name);
    }
}
