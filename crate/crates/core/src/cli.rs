//! Command-line front end. Exit codes: 0 success, 1 validation or simulation
//! error, 2 usage error, 3 deadlock found.

use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analyze::{render_report, render_table, sweep, Dimension, ReportFormat, SweepTemplate};
use crate::export::{export_sequence, export_swimlane, export_topology_dot};
use crate::model::{build_topology, CostModel, Params, SendMode};
use crate::paradigms::{DivideConquer, MasterWorker, MonteCarloPi, ParadigmSpec, Pipeline, Spmd};
use crate::parser::{parse_model_with_warnings, print_model, Model, Policy};
use crate::simulate::{run, RunOutcome};
use crate::validate::{validate_with, ValidateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEADLOCK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "parmodel", version, about = "Model, validate and simulate message-passing parallel programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model for structural errors.
    Validate {
        file: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Reject sends between non-adjacent ranks when hop scaling is off.
        #[arg(long)]
        strict_neighbors: bool,
    },
    /// Simulate a model and print makespan and per-rank metrics.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        /// Write the event trace (TSV) to this path.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Simulate over a range of values of one dimension.
    Sweep {
        file: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum)]
        dim: DimArg,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value_t = FormatArg::Table)]
        format: FormatArg,
    },
    /// Render a diagram view of a model.
    Export {
        file: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum)]
        view: ViewArg,
        #[arg(short, long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Write a generated paradigm model.
    Template {
        #[command(subcommand)]
        kind: TemplateKind,
        #[command(flatten)]
        costs: CostArgs,
        #[arg(short, long, value_name = "PATH", global = true)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// Override a model param, e.g. `--param P=9`.
    #[arg(long = "param", value_name = "K=V", value_parser = parse_param)]
    params: Vec<(String, f64)>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected K=V, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("param `{k}` value `{v}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("param `{k}` must be finite"));
    }
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DimArg {
    #[value(name = "p")]
    P,
    #[value(name = "N")]
    N,
    #[value(name = "t_startup")]
    TStartup,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ViewArg {
    Topology,
    Swimlane,
    Sequence,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SendModeArg {
    Rendezvous,
    Buffered,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[arg(long, default_value_t = 0.0, global = true)]
    t_startup: f64,
    #[arg(long, default_value_t = 0.0, global = true)]
    t_byte: f64,
    #[arg(long, global = true)]
    hop_scaling: bool,
    #[arg(long, value_enum, default_value_t = SendModeArg::Rendezvous, global = true)]
    send_mode: SendModeArg,
}

#[derive(Debug, Subcommand)]
enum TemplateKind {
    #[command(name = "master_worker")]
    MasterWorker {
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Explicit per-task costs in µs; overrides --task-count/--task-cost.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        task_count: usize,
        #[arg(long, default_value_t = 100.0)]
        task_cost: f64,
        #[arg(long, value_enum, default_value_t = PolicyArg::Dynamic)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 8.0)]
        payload: f64,
        #[arg(long, default_value_t = 8.0)]
        result: f64,
    },
    #[command(name = "spmd")]
    Spmd {
        #[arg(long, default_value_t = 4)]
        p: usize,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        element_cost: f64,
        #[arg(long, default_value_t = 1000.0)]
        halo: f64,
        #[arg(long, default_value_t = 1)]
        steps: usize,
    },
    #[command(name = "pipeline")]
    Pipeline {
        #[arg(long, default_value_t = 3)]
        stages: usize,
        #[arg(long, default_value_t = 4)]
        items: usize,
        #[arg(long, default_value_t = 10.0)]
        stage_cost: f64,
        #[arg(long, default_value_t = 8.0)]
        item_bytes: f64,
    },
    #[command(name = "divide_conquer")]
    DivideConquer {
        #[arg(long, default_value_t = 2)]
        arity: usize,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long, default_value_t = 10.0)]
        split: f64,
        #[arg(long, default_value_t = 100.0)]
        leaf: f64,
        #[arg(long, default_value_t = 10.0)]
        join: f64,
        #[arg(long, default_value_t = 8.0)]
        data_bytes: f64,
    },
    #[command(name = "pi")]
    Pi {
        #[arg(long, default_value_t = 5)]
        p: usize,
        #[arg(long, default_value_t = 1e6)]
        n: f64,
        #[arg(long, default_value_t = 0.1)]
        sample_cost: f64,
    },
}

/// Outcome of a failed command: exit code plus message for standard error.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn error(message: impl Into<String>) -> Self {
        Failure { code: EXIT_ERROR, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

/// Run the CLI against the given streams and return the exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "{}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Validate { file, params, strict_neighbors } => {
            let (m, params) = load(&file, &params)?;
            let report = validate_with(&m, &params, ValidateOptions { strict_neighbors });
            let name = file.display().to_string();
            write_or_fail(err, report.render(&name).as_bytes())?;
            if report.ok {
                let warnings = report.warnings().count();
                write_or_fail(out, format!("{name}: ok ({warnings} warning(s))\n").as_bytes())?;
                Ok(EXIT_OK)
            } else {
                let errors = report.errors().count();
                write_or_fail(out, format!("{name}: {errors} error(s)\n").as_bytes())?;
                Ok(EXIT_ERROR)
            }
        }
        Command::Simulate { file, params, trace } => {
            let (m, params) = load_valid(&file, &params, err)?;
            let outcome = run(&m, &params, &m.costs).map_err(|e| Failure::error(format!("error: {e}")))?;
            if let Some(path) = &trace {
                std::fs::write(path, outcome.trace().to_tsv())
                    .map_err(|e| Failure::error(format!("error: cannot write `{}`: {e}", path.display())))?;
            }
            match outcome {
                RunOutcome::Completed { metrics, .. } => {
                    let mut text = format!(
                        "model: {}\nprocesses: {}\nmakespan_us: {:.6}\nmessages: {}\nbytes_sent: {}\ncollectives: {}\n",
                        m.name,
                        metrics.ranks.len(),
                        metrics.makespan,
                        metrics.message_count,
                        metrics.bytes_sent,
                        metrics.collective_count
                    );
                    let names = rank_roles(&m, &params, metrics.ranks.len());
                    let rows: Vec<[String; 5]> = metrics
                        .ranks
                        .iter()
                        .enumerate()
                        .map(|(r, rm)| {
                            [
                                r.to_string(),
                                names[r].clone(),
                                format!("{:.6}", rm.compute),
                                format!("{:.6}", rm.comm),
                                format!("{:.6}", rm.idle),
                            ]
                        })
                        .collect();
                    text.push_str(&table(&["rank", "role", "compute_us", "comm_us", "idle_us"], &rows, color()));
                    write_or_fail(out, text.as_bytes())?;
                    Ok(EXIT_OK)
                }
                RunOutcome::Deadlock { report, .. } => {
                    write_or_fail(out, format!("{report}\n").as_bytes())?;
                    Ok(EXIT_DEADLOCK)
                }
            }
        }
        Command::Sweep { file, params, dim, values, format } => {
            let (mut m, params) = load_valid(&file, &params, err)?;
            m.params = params;
            let dim = match dim {
                DimArg::P => Dimension::ProcessCount,
                DimArg::N => Dimension::ProblemSize,
                DimArg::TStartup => Dimension::TStartup,
            };
            let report = match sweep(&SweepTemplate::Model(m), dim, &values) {
                Ok(r) => r,
                Err(crate::analyze::AnalyzeError::Deadlock { value, report }) => {
                    write_or_fail(out, format!("value {value}: {report}\n").as_bytes())?;
                    return Ok(EXIT_DEADLOCK);
                }
                Err(e) => return Err(Failure::error(format!("error: {e}"))),
            };
            for w in &report.warnings {
                write_or_fail(err, format!("warning: {w}\n").as_bytes())?;
            }
            let text = match format {
                FormatArg::Csv => render_report(&report, ReportFormat::Csv),
                FormatArg::Table => render_table(&report, color()),
            };
            write_or_fail(out, text.as_bytes())?;
            Ok(EXIT_OK)
        }
        Command::Export { file, params, view, output } => {
            let (m, params) = load_valid(&file, &params, err)?;
            let text = match view {
                ViewArg::Topology => {
                    let spec = m.topology_spec(&params).map_err(|e| Failure::error(format!("error: {e}")))?;
                    let g = build_topology(&spec).map_err(|e| Failure::error(format!("error: {e}")))?;
                    let mut shown = m.clone();
                    shown.params = params;
                    export_topology_dot(&g, &shown)
                }
                ViewArg::Swimlane => {
                    let mut shown = m.clone();
                    shown.params = params;
                    export_swimlane(&shown)
                }
                ViewArg::Sequence => {
                    match run(&m, &params, &m.costs).map_err(|e| Failure::error(format!("error: {e}")))? {
                        RunOutcome::Completed { trace, metrics } => {
                            export_sequence(&trace, &m, &params, metrics.ranks.len())
                        }
                        RunOutcome::Deadlock { report, .. } => {
                            write_or_fail(err, format!("{report}\n").as_bytes())?;
                            return Ok(EXIT_DEADLOCK);
                        }
                    }
                }
            };
            emit(&text, output.as_deref(), out)?;
            Ok(EXIT_OK)
        }
        Command::Template { kind, costs, output } => {
            let spec = template_spec(kind)?;
            let costs = CostModel {
                t_startup: costs.t_startup,
                t_byte: costs.t_byte,
                hop_scaling: costs.hop_scaling,
                send_mode: match costs.send_mode {
                    SendModeArg::Rendezvous => SendMode::Rendezvous,
                    SendModeArg::Buffered => SendMode::Buffered,
                },
            };
            costs.check().map_err(|e| Failure::usage(format!("error: {e}")))?;
            let m = spec.generate(&costs).map_err(|e| Failure::usage(format!("error: {e}")))?;
            emit(&print_model(&m), output.as_deref(), out)?;
            Ok(EXIT_OK)
        }
    }
}

fn template_spec(kind: TemplateKind) -> Result<ParadigmSpec, Failure> {
    Ok(match kind {
        TemplateKind::MasterWorker { workers, tasks, task_count, task_cost, policy, payload, result } => {
            let tasks = if tasks.is_empty() { vec![task_cost; task_count] } else { tasks };
            let policy = match policy {
                PolicyArg::Static => Policy::Static,
                PolicyArg::Dynamic => Policy::Dynamic,
            };
            ParadigmSpec::MasterWorker(MasterWorker {
                workers,
                tasks,
                policy,
                payload_bytes: payload,
                result_bytes: result,
            })
        }
        TemplateKind::Spmd { p, n, element_cost, halo, steps } => {
            ParadigmSpec::Spmd(Spmd { p, n, element_cost, halo_bytes: halo, steps })
        }
        TemplateKind::Pipeline { stages, items, stage_cost, item_bytes } => {
            ParadigmSpec::Pipeline(Pipeline { stages, items, stage_cost, item_bytes })
        }
        TemplateKind::DivideConquer { arity, depth, split, leaf, join, data_bytes } => {
            ParadigmSpec::DivideConquer(DivideConquer {
                arity,
                depth,
                split_cost: split,
                leaf_cost: leaf,
                join_cost: join,
                data_bytes,
            })
        }
        TemplateKind::Pi { p, n, sample_cost } => ParadigmSpec::MonteCarloPi(MonteCarloPi { p, n, sample_cost }),
    })
}

fn write_or_fail(w: &mut dyn Write, bytes: &[u8]) -> Result<(), Failure> {
    w.write_all(bytes).map_err(|e| Failure::error(format!("error: cannot write output: {e}")))
}

fn emit(text: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::error(format!("error: cannot write `{}`: {e}", p.display())))
        }
        None => write_or_fail(out, text.as_bytes()),
    }
}

/// Parse `file` and apply `--param` overrides. Parse errors exit 1; unknown
/// param names exit 2.
fn load(file: &Path, args: &ParamArgs) -> Result<(Model, Params), Failure> {
    let name = file.display().to_string();
    let src = std::fs::read_to_string(file).map_err(|e| Failure::error(format!("error: cannot read `{name}`: {e}")))?;
    let parsed = parse_model_with_warnings(&src).map_err(|e| {
        let lines: Vec<String> = e.diagnostics.iter().map(|d| d.render(&name)).collect();
        Failure::error(lines.join("\n"))
    })?;
    let mut params = parsed.model.params.clone();
    for (k, v) in &args.params {
        if !params.contains(k) {
            return Err(Failure::usage(format!(
                "error: unknown param `{k}` (model `{name}` declares none by that name)"
            )));
        }
        params.set(k.clone(), *v);
    }
    Ok((parsed.model, params))
}

/// `load` plus validation; errors exit 1, warnings go to standard error.
fn load_valid(file: &Path, args: &ParamArgs, err: &mut dyn Write) -> Result<(Model, Params), Failure> {
    let (m, params) = load(file, args)?;
    let report = validate_with(&m, &params, ValidateOptions::default());
    let name = file.display().to_string();
    if !report.ok {
        return Err(Failure::error(report.render(&name).trim_end().to_string()));
    }
    write_or_fail(err, report.render(&name).as_bytes())?;
    Ok((m, params))
}

fn rank_roles(m: &Model, params: &Params, p: usize) -> Vec<String> {
    let owners = m.rank_roles(params, p).unwrap_or_else(|_| vec![None; p]);
    owners.iter().map(|o| o.map_or_else(|| "?".into(), |i| m.roles[i].name.clone())).collect()
}

/// ANSI styling for tables: `PARMODEL_COLOR=never` disables it, otherwise it
/// follows whether standard output is a terminal.
fn color() -> bool {
    match std::env::var("PARMODEL_COLOR").as_deref() {
        Ok("never") => false,
        _ => std::io::stdout().is_terminal(),
    }
}

fn table(header: &[&str], rows: &[[String; 5]], color: bool) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 1 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = fmt_row(header.to_vec());
    if color {
        out = format!("\x1b[1m{out}\x1b[0m");
    }
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(std::iter::once("parmodel").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(cli(&["simulate"]).0, EXIT_USAGE);
        assert_eq!(cli(&["template", "pi", "--bogus"]).0, EXIT_USAGE);
        let (code, out, _) = cli(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn missing_file_mentions_path() {
        let (code, _, err) = cli(&["simulate", "missing.pmod"]);
        assert_eq!(code, EXIT_ERROR);
        assert!(err.contains("missing.pmod"));
    }

    #[test]
    fn template_to_stdout_parses() {
        let (code, out, _) = cli(&["template", "pipeline", "--stages", "2", "--items", "3"]);
        assert_eq!(code, EXIT_OK);
        let m = crate::parser::parse_model(&out).unwrap();
        assert_eq!(m.roles.len(), 2);
        let (code, out, _) = cli(&["template", "pi", "--t-startup", "10"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("t_startup = 10us"));
    }

    #[test]
    fn param_parsing() {
        assert_eq!(parse_param("P=9"), Ok(("P".into(), 9.0)));
        assert!(parse_param("P").is_err());
        assert!(parse_param("P=x").is_err());
    }
}
