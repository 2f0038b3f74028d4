//! Speedup, efficiency and parameter sweeps.
//!
//! Every row carries its own sequential baseline: the simulated single-rank model
//! holding the row's total compute with communication removed.

use std::fmt::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{CostModel, Params};
use crate::paradigms::{sequential_model, ParadigmError, ParadigmSpec};
use crate::parser::{Diagnostic, Model};
use crate::simulate::{run, DeadlockReport, RunOutcome, SimError};
use crate::validate::{validate_with, ValidateOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzeError {
    #[error("speedup needs positive times, got t_seq={t_seq} and t_par={t_par}")]
    NonPositive { t_seq: f64, t_par: f64 },
    #[error("sweep needs at least one value")]
    NoValues,
    #[error("value {value}: {source}")]
    Generate { value: f64, source: ParadigmError },
    #[error("value {value}: model has no param `{name}` to sweep")]
    MissingParam { value: f64, name: String },
    #[error("value {value}: invalid model: {}", .diagnostics.first().map(ToString::to_string).unwrap_or_default())]
    Invalid { value: f64, diagnostics: Vec<Diagnostic> },
    #[error("value {value}: {source}")]
    Simulation { value: f64, source: SimError },
    #[error("value {value}: {report}")]
    Deadlock { value: f64, report: DeadlockReport },
}

pub fn speedup(t_seq: f64, t_par: f64) -> Result<f64, AnalyzeError> {
    if t_seq > 0.0 && t_par > 0.0 && t_seq.is_finite() && t_par.is_finite() {
        Ok(t_seq / t_par)
    } else {
        Err(AnalyzeError::NonPositive { t_seq, t_par })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    ProcessCount,
    ProblemSize,
    TStartup,
}

impl Dimension {
    pub fn parse(s: &str) -> Option<Dimension> {
        match s {
            "p" | "P" | "process_count" => Some(Dimension::ProcessCount),
            "N" | "n" | "problem_size" => Some(Dimension::ProblemSize),
            "t_startup" => Some(Dimension::TStartup),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dimension::ProcessCount => "process_count",
            Dimension::ProblemSize => "problem_size",
            Dimension::TStartup => "t_startup",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepTemplate {
    Paradigm {
        spec: ParadigmSpec,
        costs: CostModel,
    },
    /// Process count binds param `P`, problem size binds `N`.
    Model(Model),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub processes: usize,
    pub makespan: f64,
    pub baseline: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub dimension: Dimension,
    /// Ascending by value.
    pub rows: Vec<SweepRow>,
    /// Shared T(1) when every row has the same baseline.
    pub baseline: Option<f64>,
    pub warnings: Vec<String>,
}

pub fn sweep(template: &SweepTemplate, dimension: Dimension, values: &[f64]) -> Result<SweepReport, AnalyzeError> {
    if values.is_empty() {
        return Err(AnalyzeError::NoValues);
    }
    let mut results: Vec<(f64, Result<SweepRow, AnalyzeError>)> =
        values.par_iter().map(|&v| (v, sweep_row(template, dimension, v))).collect();
    // sorting before picking an error keeps failures deterministic
    results.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<SweepRow> = results.into_iter().map(|(_, r)| r).collect::<Result<_, _>>()?;

    let baseline = rows.iter().all(|r| r.baseline == rows[0].baseline).then(|| rows[0].baseline);
    let warnings = rows
        .iter()
        .filter(|r| r.speedup > r.processes as f64 + 1e-9)
        .map(|r| {
            format!(
                "superlinear speedup {:.6} on {} processes at value {}",
                r.speedup,
                r.processes,
                crate::parser::fmt_number(r.value)
            )
        })
        .collect();
    Ok(SweepReport { dimension, rows, baseline, warnings })
}

fn sweep_row(template: &SweepTemplate, dim: Dimension, value: f64) -> Result<SweepRow, AnalyzeError> {
    let gen = |source| AnalyzeError::Generate { value, source };
    let (model, params, costs, baseline_model) = match template {
        SweepTemplate::Paradigm { spec, costs } => {
            let (spec, costs) = match dim {
                Dimension::ProcessCount => {
                    (spec.with_process_count(to_count(value).map_err(gen)?).map_err(gen)?, *costs)
                }
                Dimension::ProblemSize => (spec.with_problem_size(value).map_err(gen)?, *costs),
                Dimension::TStartup => (spec.clone(), CostModel { t_startup: value, ..*costs }),
            };
            let m = spec.generate(&costs).map_err(gen)?;
            let seq = spec.sequential(&costs).map_err(gen)?;
            let params = m.params.clone();
            (m, params, costs, Some(seq))
        }
        SweepTemplate::Model(m) => {
            let mut params = m.params.clone();
            let mut costs = m.costs;
            let bind = |params: &mut Params, name: &str| {
                if !params.contains(name) {
                    return Err(AnalyzeError::MissingParam { value, name: name.into() });
                }
                params.set(name, value);
                Ok(())
            };
            match dim {
                Dimension::ProcessCount => bind(&mut params, "P")?,
                Dimension::ProblemSize => bind(&mut params, "N")?,
                Dimension::TStartup => costs.t_startup = value,
            }
            (m.clone(), params, costs, None)
        }
    };
    let report = validate_with(&model, &params, ValidateOptions::default());
    if !report.ok {
        return Err(AnalyzeError::Invalid { value, diagnostics: report.errors().cloned().collect() });
    }
    let processes = model
        .topology_spec(&params)
        .map_err(|e| AnalyzeError::Simulation { value, source: SimError::Resolve(e.to_string()) })?
        .p;
    let makespan = simulate_makespan(&model, &params, &costs, value)?;
    let baseline_model = match baseline_model {
        Some(b) => b,
        None => {
            let zero = CostModel { t_startup: 0.0, t_byte: 0.0, ..costs };
            let outcome = run(&model, &params, &zero).map_err(|source| AnalyzeError::Simulation { value, source })?;
            let work = match outcome {
                RunOutcome::Completed { metrics, .. } => metrics.total_compute(),
                RunOutcome::Deadlock { report, .. } => return Err(AnalyzeError::Deadlock { value, report }),
            };
            sequential_model(&format!("{}_sequential", model.name), work).map_err(gen)?
        }
    };
    let baseline = simulate_makespan(&baseline_model, &baseline_model.params, &costs, value)?;
    let speedup = speedup(baseline, makespan)?;
    Ok(SweepRow { value, processes, makespan, baseline, speedup, efficiency: speedup / processes as f64 })
}

fn to_count(v: f64) -> Result<usize, ParadigmError> {
    if v.is_finite() && v >= 0.5 {
        Ok((v + 0.5).floor() as usize)
    } else {
        Err(ParadigmError(format!("process count {v} is not a positive integer")))
    }
}

fn simulate_makespan(m: &Model, params: &Params, costs: &CostModel, value: f64) -> Result<f64, AnalyzeError> {
    match run(m, params, costs).map_err(|source| AnalyzeError::Simulation { value, source })? {
        RunOutcome::Completed { metrics, .. } => Ok(metrics.makespan),
        RunOutcome::Deadlock { report, .. } => Err(AnalyzeError::Deadlock { value, report }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Table,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<ReportFormat> {
        match s {
            "csv" => Some(ReportFormat::Csv),
            "table" => Some(ReportFormat::Table),
            _ => None,
        }
    }
}

pub const CSV_HEADER: &str = "value,makespan_us,speedup,efficiency";

pub fn render_report(r: &SweepReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(r),
        ReportFormat::Table => render_table(r, false),
    }
}

fn render_csv(r: &SweepReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &r.rows {
        let _ = writeln!(out, "{:.6},{:.6},{:.6},{:.6}", row.value, row.makespan, row.speedup, row.efficiency);
    }
    out
}

/// Aligned columns; `color` bolds the header row.
pub fn render_table(r: &SweepReport, color: bool) -> String {
    let header = [r.dimension.name(), "p", "makespan_us", "speedup", "efficiency"];
    let cells: Vec<[String; 5]> = r
        .rows
        .iter()
        .map(|row| {
            [
                format!("{:.6}", row.value),
                row.processes.to_string(),
                format!("{:.6}", row.makespan),
                format!("{:.6}", row.speedup),
                format!("{:.6}", row.efficiency),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let line = |items: &[&str]| -> String {
        let padded: Vec<String> = items.iter().zip(widths).map(|(s, w)| format!("{s:>w$}")).collect();
        padded.join("  ")
    };
    let mut out = line(&header);
    if color {
        out = format!("\x1b[1m{out}\x1b[0m");
    }
    out.push('\n');
    for c in &cells {
        let items: Vec<&str> = c.iter().map(String::as_str).collect();
        out.push_str(&line(&items));
        out.push('\n');
    }
    if let Some(b) = r.baseline {
        let _ = writeln!(out, "baseline T(1) = {b:.6} us");
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paradigms::{MonteCarloPi, Spmd};

    fn spmd(halo: f64) -> SweepTemplate {
        SweepTemplate::Paradigm {
            spec: ParadigmSpec::Spmd(Spmd { p: 1, n: 1_000_000, element_cost: 0.1, halo_bytes: halo, steps: 1 }),
            costs: if halo > 0.0 {
                CostModel { t_startup: 50.0, t_byte: 0.01, ..Default::default() }
            } else {
                CostModel::default()
            },
        }
    }

    #[test]
    fn speedup_basics() {
        assert_eq!(speedup(100000.0, 25000.0).unwrap(), 4.0);
        assert_eq!(speedup(7.5, 7.5).unwrap(), 1.0);
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, -1.0).is_err());
    }

    #[test]
    fn spmd_efficiency() {
        let r = sweep(&spmd(0.0), Dimension::ProcessCount, &[4.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![1.0, 2.0, 4.0]);
        for row in &r.rows {
            assert!((row.efficiency - 1.0).abs() < 1e-9, "{row:?}");
        }
        assert!(r.baseline.is_some());
        let r = sweep(&spmd(1000.0), Dimension::ProcessCount, &[1.0, 2.0, 4.0]).unwrap();
        assert!(r.rows.windows(2).all(|w| w[1].efficiency < w[0].efficiency));
    }

    #[test]
    fn pi_speedup_and_startup_sweep() {
        let pi = ParadigmSpec::MonteCarloPi(MonteCarloPi { p: 5, n: 1e6, sample_cost: 0.1 });
        let t = SweepTemplate::Paradigm { spec: pi, costs: CostModel::default() };
        let r = sweep(&t, Dimension::ProcessCount, &[5.0]).unwrap();
        assert!((3.9..=4.0).contains(&r.rows[0].speedup));
        let r = sweep(&t, Dimension::TStartup, &[0.0, 10.0, 1000.0, 1e5]).unwrap();
        assert!(r.rows.windows(2).all(|w| w[1].makespan >= w[0].makespan));
        assert!(r.rows[3].speedup < 1.0);
    }

    #[test]
    fn model_template_binds_params() {
        let m = crate::paradigms::gen_monte_carlo_pi(5, 1e6, 0.1).unwrap();
        let r = sweep(&SweepTemplate::Model(m.clone()), Dimension::ProcessCount, &[3.0, 5.0]).unwrap();
        assert_eq!(r.rows[1].processes, 5);
        assert!((r.rows[1].makespan - 25005.0).abs() < 1e-6);
        // generic baseline: total compute, reduce action included
        assert!((r.rows[1].baseline - 100005.0).abs() < 1e-6);
        let bad = crate::paradigms::gen_pipeline(2, 2, 1.0).unwrap();
        assert!(matches!(
            sweep(&SweepTemplate::Model(bad), Dimension::ProblemSize, &[1.0]),
            Err(AnalyzeError::MissingParam { .. })
        ));
    }

    #[test]
    fn csv_rendering() {
        let r = sweep(&spmd(0.0), Dimension::ProcessCount, &[2.0]).unwrap();
        let csv = render_report(&r, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert_eq!(csv.lines().nth(1), Some("2.000000,50000.000000,2.000000,1.000000"));
        assert_eq!(csv, render_report(&r, ReportFormat::Csv));
        let table = render_table(&r, true);
        assert!(table.starts_with("\x1b[1m"));
        assert!(!render_table(&r, false).contains('\x1b'));
    }
}
