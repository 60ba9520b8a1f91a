//! Solution CSV files, `key = value` summaries and plot scripts.
//!
//! CSV layout: header `t,s,e,i,r,u,p,lambda1,lambda2,lambda3,lambda4`, one
//! row per grid node, nine significant digits, LF line endings. Costate
//! columns are left empty when a solver keeps no costates.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dynamics::{ControlSignal, ControlVariant, StateFractions, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::objectives::ProblemId;
use crate::pmp::{AdjointTrajectory, AdjointVector};
use crate::report::{Method, SolveReport};

pub const CSV_HEADER: &str = "t,s,e,i,r,u,p,lambda1,lambda2,lambda3,lambda4";

fn fmt_value(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes one CSV row per grid node.
pub fn write_csv<W: Write>(
    mut out: W,
    traj: &Trajectory,
    controls: &ControlSignal,
    adjoints: Option<&AdjointTrajectory>,
) -> Result<()> {
    if traj.grid != *controls.grid() || adjoints.is_some_and(|a| a.grid != traj.grid) {
        return Err(Error::GridMismatch);
    }
    writeln!(out, "{CSV_HEADER}")?;
    for (k, x) in traj.states.iter().enumerate() {
        let mut fields = vec![traj.grid.time(k)];
        fields.extend(x.to_array());
        fields.push(controls.u()[k]);
        fields.push(controls.p()[k]);
        let mut line = fields.into_iter().map(fmt_value).collect::<Vec<_>>().join(",");
        match adjoints {
            Some(adj) => {
                for v in adj.costates[k].to_array() {
                    line.push(',');
                    line.push_str(&fmt_value(v));
                }
            }
            None => line.push_str(",,,,"),
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Summary lines: problem, method, objective, convergence flag, iterations
/// and stationarity residual.
pub fn write_summary<W: Write>(mut out: W, report: &SolveReport) -> Result<()> {
    writeln!(out, "problem = {}", report.problem)?;
    writeln!(out, "method = {}", report.method)?;
    writeln!(out, "objective = {:e}", report.objective)?;
    writeln!(out, "converged = {}", report.converged)?;
    writeln!(out, "iterations = {}", report.iterations)?;
    writeln!(out, "stationarity_residual = {:e}", report.stationarity_residual)?;
    out.flush()?;
    Ok(())
}

/// Sidecar summary path for a solution CSV.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary")
}

/// Writes the solution CSV to `csv` and the summary next to it; returns the
/// summary path.
pub fn write_solution(report: &SolveReport, csv: &Path) -> Result<PathBuf> {
    let file = BufWriter::new(fs::File::create(csv)?);
    write_csv(file, &report.trajectory, &report.controls, report.adjoints.as_ref())?;
    let summary = summary_path(csv);
    write_summary(BufWriter::new(fs::File::create(&summary)?), report)?;
    Ok(summary)
}

/// Rows of a solution CSV.
#[derive(Debug, Clone)]
pub struct SolutionTable {
    pub trajectory: Trajectory,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub adjoints: Option<AdjointTrajectory>,
}

impl SolutionTable {
    pub fn controls(&self, variant: ControlVariant) -> Result<ControlSignal> {
        ControlSignal::from_values(self.trajectory.grid, variant, self.u.clone(), self.p.clone())
    }
}

pub fn parse_csv(text: &str) -> Result<SolutionTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut u = Vec::new();
    let mut p = Vec::new();
    let mut costates = Vec::new();
    let mut has_adjoints = None;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(err(format!("expected 11 fields, got {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| err(format!("`{s}` is not a number")))
        };
        let row: Vec<f64> = fields[..7].iter().map(|s| num(s)).collect::<Result<_>>()?;
        times.push(row[0]);
        states.push(StateFractions::from_array([row[1], row[2], row[3], row[4]]));
        u.push(row[5]);
        p.push(row[6]);
        let present = fields[7..].iter().all(|s| !s.trim().is_empty());
        if *has_adjoints.get_or_insert(present) != present {
            return Err(err("costate columns must be all present or all empty".into()));
        }
        if present {
            let l: Vec<f64> = fields[7..].iter().map(|s| num(s)).collect::<Result<_>>()?;
            costates.push(AdjointVector::from_array([l[0], l[1], l[2], l[3]]));
        }
    }
    if times.len() < 3 {
        return Err(Error::Parse {
            line: times.len() + 1,
            message: "need at least three rows".into(),
        });
    }
    let grid = TimeGrid::new(times[0], times[times.len() - 1], times.len() - 1)?;
    let adjoints = (has_adjoints == Some(true)).then_some(AdjointTrajectory { grid, costates });
    Ok(SolutionTable {
        trajectory: Trajectory { grid, states },
        u,
        p,
        adjoints,
    })
}

/// Parsed summary sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub problem: ProblemId,
    pub method: Method,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub stationarity_residual: f64,
}

pub fn parse_summary(text: &str) -> Result<Summary> {
    let mut problem = None;
    let mut method = None;
    let mut objective = None;
    let mut converged = None;
    let mut iterations = None;
    let mut residual = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let bad = || err(format!("bad value `{value}` for `{key}`"));
        match key {
            "problem" => problem = Some(value.parse::<ProblemId>().map_err(|_| bad())?),
            "method" => {
                method = Some(match value {
                    "fbsm" => Method::Fbsm,
                    "direct" => Method::ProjectedGradient,
                    _ => return Err(bad()),
                })
            }
            "objective" => objective = Some(value.parse::<f64>().map_err(|_| bad())?),
            "converged" => converged = Some(value.parse::<bool>().map_err(|_| bad())?),
            "iterations" => iterations = Some(value.parse::<usize>().map_err(|_| bad())?),
            "stationarity_residual" => residual = Some(value.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }
    let missing = |field: &str| Error::Validation {
        field: field.into(),
        message: "missing from summary".into(),
    };
    Ok(Summary {
        problem: problem.ok_or_else(|| missing("problem"))?,
        method: method.ok_or_else(|| missing("method"))?,
        objective: objective.ok_or_else(|| missing("objective"))?,
        converged: converged.ok_or_else(|| missing("converged"))?,
        iterations: iterations.ok_or_else(|| missing("iterations"))?,
        stationarity_residual: residual.ok_or_else(|| missing("stationarity_residual"))?,
    })
}

/// Rebuilds a report from a solution CSV and its summary sidecar.
pub fn read_solution(csv: &Path) -> Result<SolveReport> {
    let table = parse_csv(&fs::read_to_string(csv)?)?;
    let summary = parse_summary(&fs::read_to_string(summary_path(csv))?)?;
    let controls = table.controls(summary.problem.variant())?;
    Ok(SolveReport {
        problem: summary.problem,
        method: summary.method,
        trajectory: table.trajectory,
        controls,
        adjoints: table.adjoints,
        objective: summary.objective,
        iterations: summary.iterations,
        converged: summary.converged,
        stationarity_residual: summary.stationarity_residual,
        history: Vec::new(),
    })
}

/// Matplotlib script that plots the states and controls of `csv_name`,
/// resolved relative to the script's own directory.
pub fn plot_script(csv_name: &str, title: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, {csv_name:?})) as f:
    rows = list(csv.DictReader(f))
col = lambda k: [float(r[k]) for r in rows]
t = col("t")

fig, (ax_x, ax_c) = plt.subplots(1, 2, figsize=(11, 4))
for key in ("s", "e", "i", "r"):
    ax_x.plot(t, col(key), label=key)
ax_x.set_xlabel("t")
ax_x.legend()
ax_c.plot(t, col("u"), label="u (vaccination)")
ax_c.plot(t, col("p"), label="p (plasma)")
ax_c.set_xlabel("t")
ax_c.legend()
fig.suptitle({title:?})
fig.tight_layout()
fig.savefig(os.path.join(here, {png:?}), dpi=120)
"#,
        png = format!("{}.png", Path::new(csv_name).with_extension("").display()),
    )
}
