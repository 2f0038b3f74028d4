//! Acceptance gate: one check per criterion, each printing a PASS or FAIL line.
//! Runs without the libtest harness so the report is never captured.

mod common;

use std::collections::{BTreeSet, VecDeque};
use std::process::Command;

use common::{
    all_topologies, corpus, corpus_dir, generated_models, is_deadlock_fixture, oracle_adjacency, paradigm_specs,
    parse_dot, stereotype_tokens, EPS,
};
use parmodel::analyze::{render_report, sweep, Dimension, ReportFormat, SweepTemplate};
use parmodel::export::{export_sequence, export_swimlane, export_topology_dot, STEREOTYPES};
use parmodel::model::{build_topology, CostModel, SendMode};
use parmodel::paradigms::{gen_master_worker, gen_pipeline, MasterWorker, MonteCarloPi, ParadigmSpec, Spmd};
use parmodel::parser::{parse_model, print_model, Model, Policy};
use parmodel::simulate::{run, run_model};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn makespan(m: &Model) -> Result<f64, String> {
    let out = run_model(m).map_err(|e| format!("{}: {e}", m.name))?;
    out.makespan().ok_or_else(|| format!("{}: {}", m.name, out.deadlock().unwrap()))
}

fn bfs(adj: &[Vec<bool>], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for v in 0..adj.len() {
            if adj[u][v] && dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

fn c1_topology() -> Check {
    for spec in all_topologies(64) {
        let g = build_topology(&spec).map_err(|e| format!("{spec}: {e}"))?;
        let adj = oracle_adjacency(&spec);
        for u in 0..spec.p {
            let degree = adj[u].iter().filter(|&&x| x).count();
            ensure!(g.degree(u) == degree, "{spec}: degree of P{u} is {} not {degree}", g.degree(u));
            let dist = bfs(&adj, u);
            for (v, d) in dist.iter().enumerate() {
                let d = d.ok_or_else(|| format!("{spec}: P{v} unreachable from P{u}"))?;
                let got = g.shortest_hops(u, v).map_err(|e| e.to_string())?;
                ensure!(got == d, "{spec}: hops P{u}->P{v} {got} vs {d}");
            }
        }
    }
    Ok(())
}

fn c2_pipeline() -> Check {
    for s in 1..=8 {
        for m in 1..=8 {
            let t = 10.0;
            let got = makespan(&gen_pipeline(s, m, t).map_err(|e| e.to_string())?)?;
            let want = (s + m - 1) as f64 * t;
            ensure!((got - want).abs() <= EPS, "s={s} m={m}: {got} vs {want}");
        }
    }
    Ok(())
}

fn mw(workers: usize, tasks: &[f64], policy: Policy) -> Result<f64, String> {
    makespan(&gen_master_worker(workers, tasks, policy, 8.0, 8.0).map_err(|e| e.to_string())?)
}

fn c3_master_worker() -> Check {
    let even = mw(4, &[100.0; 8], Policy::Static)?;
    ensure!(even == 200.0, "static even case {even}");
    let skewed = [10.0, 10.0, 10.0, 10.0, 70.0, 70.0];
    let st = mw(2, &skewed, Policy::Static)?;
    ensure!(st == 150.0, "skewed static {st}");
    let dy = mw(2, &skewed, Policy::Dynamic)?;
    ensure!(dy == 90.0, "skewed dynamic {dy}");
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner
        .run(&(prop::collection::vec(1.0f64..500.0, 1..40), 1usize..10), |(tasks, workers)| {
            let t = mw(workers, &tasks, Policy::Dynamic).map_err(TestCaseError::fail)?;
            let bound = tasks.iter().sum::<f64>() / workers as f64 + tasks.iter().copied().fold(0.0, f64::max);
            prop_assert!(t <= bound + EPS, "makespan {} > bound {}", t, bound);
            Ok(())
        })
        .map_err(|e| format!("Graham bound: {e}"))
}

fn c4_spmd() -> Check {
    let zero = SweepTemplate::Paradigm {
        spec: ParadigmSpec::Spmd(Spmd { p: 1, n: 4000, element_cost: 0.25, halo_bytes: 1000.0, steps: 2 }),
        costs: CostModel::default(),
    };
    let r = sweep(&zero, Dimension::ProcessCount, &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    for row in &r.rows {
        ensure!((row.efficiency - 1.0).abs() <= EPS, "zero-comm p={} efficiency {}", row.value, row.efficiency);
    }
    let halo = SweepTemplate::Paradigm {
        spec: ParadigmSpec::Spmd(Spmd { p: 1, n: 1_000_000, element_cost: 0.1, halo_bytes: 1000.0, steps: 1 }),
        costs: CostModel { t_startup: 50.0, t_byte: 0.01, hop_scaling: false, send_mode: SendMode::Rendezvous },
    };
    let r = sweep(&halo, Dimension::ProcessCount, &[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    let eff: Vec<f64> = r.rows.iter().map(|x| x.efficiency).collect();
    ensure!(eff.windows(2).all(|w| w[1] < w[0]), "efficiency not strictly decreasing: {eff:?}");
    Ok(())
}

fn c5_point_to_point() -> Check {
    let all = corpus();
    let two = all.iter().find(|c| c.name == "two_rank").ok_or("two_rank missing")?;
    let t = makespan(&two.model)?;
    ensure!(t == 160.0, "two-rank example {t}");
    let runnable: Vec<_> = all.iter().filter(|c| !is_deadlock_fixture(&c.name)).collect();
    let mut runner = TestRunner::new(Config { cases: 32, failure_persistence: None, ..Config::default() });
    runner
        .run(&(0.0f64..100.0, 0.0f64..1.0, 0.0f64..20.0, 0.0f64..0.1), |(ds, db, s0, b0)| {
            for c in &runnable {
                for mode in [SendMode::Rendezvous, SendMode::Buffered] {
                    let base = CostModel { t_startup: s0, t_byte: b0, send_mode: mode, ..c.model.costs };
                    let up_s = CostModel { t_startup: s0 + ds, ..base };
                    let up_b = CostModel { t_byte: b0 + db, ..base };
                    let m = |costs: &CostModel| {
                        run(&c.model, &c.model.params, costs).ok().and_then(|o| o.makespan()).unwrap_or(f64::NAN)
                    };
                    let (t0, ts, tb) = (m(&base), m(&up_s), m(&up_b));
                    prop_assert!(t0 <= ts + EPS, "{} {:?}: t_startup +{} gives {} < {}", c.name, mode, ds, ts, t0);
                    prop_assert!(t0 <= tb + EPS, "{} {:?}: t_byte +{} gives {} < {}", c.name, mode, db, tb, t0);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("monotonicity: {e}"))
}

fn c6_deadlock() -> Check {
    for (name, cycle) in [("deadlock", "cycle P0 → P1 → P0"), ("deadlock3", "cycle P0 → P1 → P2 → P0")] {
        let path = corpus_dir().join(format!("{name}.pmod"));
        let o = Command::new(env!("CARGO_BIN_EXE_parmodel"))
            .args(["simulate", path.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(o.status.code() == Some(3), "{name}: exit {:?}", o.status.code());
        let out = String::from_utf8_lossy(&o.stdout);
        ensure!(out.contains(cycle), "{name}: report lacks `{cycle}`:\n{out}");
    }
    for m in generated_models(&CostModel::default()) {
        let out = run_model(&m).map_err(|e| e.to_string())?;
        ensure!(out.deadlock().is_none(), "{} deadlocked without communication cost", m.name);
    }
    let mut runner = TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    runner
        .run(
            &(1usize..8, prop::collection::vec(1.0f64..50.0, 1..16), 1usize..9, any::<bool>()),
            |(w, tasks, p, dynamic)| {
                let specs = [
                    ParadigmSpec::MasterWorker(MasterWorker {
                        workers: w,
                        tasks,
                        policy: if dynamic { Policy::Dynamic } else { Policy::Static },
                        payload_bytes: 8.0,
                        result_bytes: 8.0,
                    }),
                    ParadigmSpec::Spmd(Spmd { p, n: 10 * p, element_cost: 1.0, halo_bytes: 8.0, steps: 2 }),
                    ParadigmSpec::MonteCarloPi(MonteCarloPi { p: p + 1, n: 1000.0, sample_cost: 0.1 }),
                ];
                for s in specs {
                    let out = run_model(&s.generate(&CostModel::default()).unwrap()).unwrap();
                    prop_assert!(out.deadlock().is_none(), "{} deadlocked", s.kind_name());
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

fn c7_pi() -> Check {
    let spec = ParadigmSpec::MonteCarloPi(MonteCarloPi { p: 5, n: 1e6, sample_cost: 0.1 });
    let costs = CostModel::default();
    let par = makespan(&spec.generate(&costs).map_err(|e| e.to_string())?)?;
    let seq = makespan(&spec.sequential(&costs).map_err(|e| e.to_string())?)?;
    let s = seq / par;
    ensure!((3.9..=4.0).contains(&s), "speedup {s} outside [3.9, 4.0]");
    let template = SweepTemplate::Paradigm { spec, costs };
    let r = sweep(&template, Dimension::ProcessCount, &[2.0, 3.0, 5.0, 9.0]).map_err(|e| e.to_string())?;
    let curve: Vec<f64> = r.rows.iter().map(|x| x.speedup).collect();
    ensure!(curve.windows(2).all(|w| w[1] > w[0]), "speedup curve not increasing: {curve:?}");
    for row in &r.rows {
        ensure!(row.speedup <= row.value, "P={} speedup {} exceeds P", row.value, row.speedup);
    }
    Ok(())
}

fn c8_accounting() -> Check {
    for c in corpus().iter().filter(|c| !is_deadlock_fixture(&c.name)) {
        let out = run_model(&c.model).map_err(|e| e.to_string())?;
        let m = out.metrics().ok_or(format!("{} deadlocked", c.name))?;
        for (r, rm) in m.ranks.iter().enumerate() {
            let sum = rm.compute + rm.comm + rm.idle;
            ensure!((sum - m.makespan).abs() <= EPS, "{} P{r}: {sum} vs {}", c.name, m.makespan);
        }
    }
    Ok(())
}

fn c9_round_trips() -> Check {
    let mut models: Vec<Model> = corpus().into_iter().map(|c| c.model).collect();
    models.extend(generated_models(&CostModel::default()));
    models.extend(generated_models(&CostModel {
        t_startup: 7.25,
        t_byte: 0.003,
        hop_scaling: true,
        send_mode: SendMode::Buffered,
    }));
    for m in &models {
        let text = print_model(m);
        let back = parse_model(&text).map_err(|e| format!("{}: {e}", m.name))?;
        ensure!(&back == m, "{}: parse(print(m)) differs", m.name);
        ensure!(print_model(&back) == text, "{}: print not a fixpoint", m.name);
    }
    for spec in paradigm_specs() {
        // divide and conquer has no problem-size knob
        if matches!(spec, ParadigmSpec::DivideConquer(_)) {
            continue;
        }
        let template =
            SweepTemplate::Paradigm { spec: spec.clone(), costs: CostModel { t_startup: 3.0, ..CostModel::default() } };
        let r = sweep(&template, Dimension::ProblemSize, &[10.0, 20.0])
            .map_err(|e| format!("{}: {e}", spec.kind_name()))?;
        let csv = render_report(&r, ReportFormat::Csv);
        for (line, row) in csv.lines().skip(1).zip(&r.rows) {
            let vals: Vec<f64> =
                line.split(',').map(|x| x.parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
            for (a, b) in vals.iter().zip([row.value, row.makespan, row.speedup, row.efficiency]) {
                ensure!((a - b).abs() <= 1e-6, "{}: csv {a} vs {b}", spec.kind_name());
            }
        }
    }
    Ok(())
}

fn c10_exports() -> Check {
    let vocab: BTreeSet<&str> = STEREOTYPES.into_iter().collect();
    let mut models: Vec<Model> =
        corpus().into_iter().filter(|c| !is_deadlock_fixture(&c.name)).map(|c| c.model).collect();
    models.extend(generated_models(&CostModel { t_startup: 1.0, ..CostModel::default() }));
    for m in &models {
        let g = build_topology(&m.topology_spec(&m.params).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let dot = export_topology_dot(&g, m);
        ensure!(dot == export_topology_dot(&g, m), "{}: topology export not deterministic", m.name);
        let (nodes, edges) = parse_dot(&dot).map_err(|e| format!("{}: invalid DOT: {e}", m.name))?;
        ensure!(nodes.len() == g.len() && edges.len() == g.edge_count(), "{}: DOT shape", m.name);
        let lanes = export_swimlane(m);
        ensure!(lanes == export_swimlane(m), "{}: swimlane export not deterministic", m.name);
        let a = run_model(m).map_err(|e| e.to_string())?;
        let b = run_model(m).map_err(|e| e.to_string())?;
        let metrics = a.metrics().ok_or("deadlock")?;
        let p = g.len();
        let seq = export_sequence(a.trace(), m, &m.params, p);
        ensure!(seq == export_sequence(b.trace(), m, &m.params, p), "{}: sequence export not deterministic", m.name);
        for tok in stereotype_tokens(&seq).iter().chain(&stereotype_tokens(&lanes)) {
            ensure!(vocab.contains(tok.as_str()), "{}: stereotype {tok} outside vocabulary", m.name);
        }
        let message_lines = seq
            .lines()
            .filter(|l| l.starts_with('@') && !l.contains("User -> ") && !l.contains("MainProgram -> "))
            .count();
        ensure!(
            message_lines == metrics.message_count,
            "{}: {message_lines} message lines vs {}",
            m.name,
            metrics.message_count
        );
        let expected = metrics.message_count
            + metrics.collective_count
            + 2 * p
            + (p + 1)
            + usize::from(metrics.collective_count > 0);
        ensure!(seq.lines().count() == expected, "{}: {} lines vs {expected}", m.name, seq.lines().count());
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("topology suite", c1_topology),
        ("pipeline closed form", c2_pipeline),
        ("master-worker", c3_master_worker),
        ("spmd efficiency", c4_spmd),
        ("point-to-point cost", c5_point_to_point),
        ("deadlock", c6_deadlock),
        ("monte carlo pi", c7_pi),
        ("accounting", c8_accounting),
        ("round-trips", c9_round_trips),
        ("exports", c10_exports),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(()) => println!("PASS {:>2} {name}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
