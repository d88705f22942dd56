//! Single runs and the three experiment designs: incumbent curves under a
//! budget, per-iteration step contributions, and attack potential at
//! snapshots of a hybrid run.
//!
//! Cells `(problem, method, seed)` are independent sequential runs fanned
//! out with rayon; reports are merged in `(problem, method, seed)` order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dirattack_core::attack::{attack_operator, AttackClass, AttackSolver};
use dirattack_core::hybrid::{run_method, HybridConfig};
use dirattack_core::problem::EvalRecord;
use dirattack_core::trace::{Method, StopReason};
use dirattack_core::{Mode, ProblemSpec, RunResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{find, run_config, KnownOptimum};
use crate::error::{BenchError, BenchResult};
use crate::output::{opt_cell, write_csv, write_json, CURVE_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BudgetCurves,
    StepContributions,
    AttackPotential,
}

/// Outcome of one `(problem, method, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub final_best_f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub stop: StopReason,
    /// Evaluations until the incumbent came within tolerance of the known
    /// optimum.
    pub evals_to_tolerance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub series: Vec<SeriesSummary>,
    pub files: Vec<PathBuf>,
}

/// A finished cell together with everything needed to recheck it.
pub struct Cell {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub config: HybridConfig,
    pub optimum: Option<KnownOptimum>,
    pub result: RunResult,
}

impl Cell {
    pub fn summary(&self) -> SeriesSummary {
        let trace = &self.result.trace;
        SeriesSummary {
            problem: self.problem.clone(),
            method: self.method,
            seed: self.seed,
            final_best_f: self.result.incumbent.fval,
            evaluations: trace.evaluations,
            iterations: trace.iterations.len(),
            stop: trace.stop,
            evals_to_tolerance: self
                .optimum
                .and_then(|o| trace.evals_to_reach(o.value - o.tolerance)),
        }
    }

    pub fn curve_rows(&self) -> Vec<String> {
        self.result
            .trace
            .curve
            .iter()
            .map(|p| {
                format!(
                    "{},{},{},{},{}",
                    self.problem,
                    self.method.name(),
                    self.seed,
                    p.eval_count,
                    p.best_f
                )
            })
            .collect()
    }
}

/// Catalog problem `name` built with `seed`, optionally switched to `mode`,
/// and whether the catalog optimum still bounds it: it does in the catalog
/// mode and in exact mode, which only shrinks the feasible set.
fn build_with_bound(name: &str, seed: u64, mode: Option<Mode>) -> BenchResult<(ProblemSpec, bool)> {
    let problem = find(name)?.build(seed)?;
    Ok(match mode {
        Some(m) if m != problem.mode() => (problem.with_mode(m)?, m == Mode::Exact),
        _ => (problem, true),
    })
}

/// Catalog problem `name` built with `seed`, optionally switched to `mode`.
pub fn build_problem(name: &str, seed: u64, mode: Option<Mode>) -> BenchResult<ProblemSpec> {
    Ok(build_with_bound(name, seed, mode)?.0)
}

pub fn run_cell(
    name: &str,
    method: Method,
    seed: u64,
    budget: usize,
    mode: Option<Mode>,
) -> BenchResult<Cell> {
    let entry = find(name)?;
    let (problem, bounded) = build_with_bound(name, seed, mode)?;
    let config = run_config(entry, seed, budget);
    let result = run_method(method, &problem, &config)?;
    let optimum = if bounded {
        entry.known_optimum(seed)?
    } else {
        None
    };
    Ok(Cell {
        problem: name.to_string(),
        method,
        seed,
        config,
        optimum,
        result,
    })
}

/// Runs all cells in parallel and returns them sorted by
/// `(problem, method, seed)`.
pub fn run_cells(
    problems: &[String],
    methods: &[Method],
    seeds: &[u64],
    budget: usize,
    mode: Option<Mode>,
) -> BenchResult<Vec<Cell>> {
    for p in problems {
        find(p)?;
    }
    let mut jobs = Vec::new();
    for p in problems {
        for &m in methods {
            for &s in seeds {
                jobs.push((p.clone(), m, s));
            }
        }
    }
    let mut cells = jobs
        .par_iter()
        .map(|(p, m, s)| run_cell(p, *m, *s, budget, mode))
        .collect::<BenchResult<Vec<_>>>()?;
    cells.sort_by(|a, b| {
        (a.problem.as_str(), a.method.name(), a.seed).cmp(&(
            b.problem.as_str(),
            b.method.name(),
            b.seed,
        ))
    });
    Ok(cells)
}

/// Files written by [`run_single`].
pub fn run_file_stem(name: &str, method: Method, seed: u64) -> String {
    format!("{name}_{}_{seed}", method.name())
}

/// One run: `<stem>.curve.csv`, `<stem>.iterations.csv` and the verbatim
/// trace as `<stem>.trace.json`.
pub fn run_single(
    name: &str,
    method: Method,
    seed: u64,
    budget: usize,
    mode: Option<Mode>,
    out: &Path,
) -> BenchResult<(SeriesSummary, Vec<PathBuf>)> {
    let cell = run_cell(name, method, seed, budget, mode)?;
    let stem = run_file_stem(name, method, seed);
    let files = vec![
        write_csv(
            &out.join(format!("{stem}.curve.csv")),
            CURVE_HEADER,
            &cell.curve_rows(),
        )?,
        write_csv(
            &out.join(format!("{stem}.iterations.csv")),
            ITERATION_HEADER,
            &iteration_rows(&cell),
        )?,
        write_json(&out.join(format!("{stem}.trace.json")), &cell.result.trace)?,
    ];
    Ok((cell.summary(), files))
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median evaluations-to-tolerance over seeds, counting seeds that never
/// reached tolerance as infinitely many.
pub fn median_evals_to_tolerance(series: &[&SeriesSummary]) -> f64 {
    median(
        series
            .iter()
            .map(|s| s.evals_to_tolerance.map_or(f64::INFINITY, |e| e as f64))
            .collect(),
    )
}

pub const SUMMARY_HEADER: &str = "problem,method,seeds,median_best_f,min_best_f,max_best_f,\
optimum,tolerance,reached,median_evals_to_tolerance";

/// Budget curves for every `(problem, method, seed)`, written to
/// `curves.csv`, with one `summary.csv` row per `(problem, method)`.
pub fn run_experiment_1(
    problems: &[String],
    methods: &[Method],
    seeds: &[u64],
    budget: usize,
    out: &Path,
) -> BenchResult<ExperimentReport> {
    let cells = run_cells(problems, methods, seeds, budget, None)?;
    let rows: Vec<String> = cells.iter().flat_map(|c| c.curve_rows()).collect();
    let series: Vec<SeriesSummary> = cells.iter().map(Cell::summary).collect();
    let mut groups: BTreeMap<(String, &'static str), Vec<(&SeriesSummary, Option<KnownOptimum>)>> =
        BTreeMap::new();
    for (c, s) in cells.iter().zip(&series) {
        groups
            .entry((c.problem.clone(), c.method.name()))
            .or_default()
            .push((s, c.optimum));
    }
    let mut summary = Vec::new();
    for ((problem, method), group) in &groups {
        let values: Vec<f64> = group.iter().map(|(s, _)| s.final_best_f).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Per-seed optima differ for seeded surrogates; report the first.
        let optimum = group.iter().find_map(|(_, o)| *o);
        let (opt, tol, reached, med_evals) = match optimum {
            Some(o) => {
                let ss: Vec<&SeriesSummary> = group.iter().map(|(s, _)| *s).collect();
                let reached = ss.iter().filter(|s| s.evals_to_tolerance.is_some()).count();
                let med = median_evals_to_tolerance(&ss);
                (
                    o.value.to_string(),
                    o.tolerance.to_string(),
                    reached.to_string(),
                    if med.is_finite() {
                        med.to_string()
                    } else {
                        String::new()
                    },
                )
            }
            None => Default::default(),
        };
        summary.push(format!(
            "{problem},{method},{},{},{min},{max},{opt},{tol},{reached},{med_evals}",
            group.len(),
            median(values.clone()),
        ));
    }
    let files = vec![
        write_csv(&out.join("curves.csv"), CURVE_HEADER, &rows)?,
        write_csv(&out.join("summary.csv"), SUMMARY_HEADER, &summary)?,
    ];
    let report = ExperimentReport {
        experiment: ExperimentKind::BudgetCurves,
        series,
        files,
    };
    finish_report(report, out)
}

fn finish_report(mut report: ExperimentReport, out: &Path) -> BenchResult<ExperimentReport> {
    let path = out.join("report.json");
    report.files.push(path.clone());
    write_json(&path, &report)?;
    Ok(report)
}

/// Lowercase tag of a serde enum value, as used in CSV cells.
fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub const ITERATION_HEADER: &str = "problem,method,seed,k,attack_outcome,winning_step,r_atk,r_dsm,\
next_r_atk,next_r_dsm,incumbent_f,evals_so_far,truncated";

pub fn iteration_rows(cell: &Cell) -> Vec<String> {
    cell.result
        .trace
        .iterations
        .iter()
        .map(|it| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                cell.problem,
                cell.method.name(),
                cell.seed,
                it.k,
                it.attack_outcome.as_ref().map(tag).unwrap_or_default(),
                tag(&it.winning_step),
                opt_cell(it.r_atk),
                opt_cell(it.r_dsm),
                opt_cell(it.next_r_atk),
                opt_cell(it.next_r_dsm),
                it.incumbent_f,
                it.evals_so_far,
                it.truncated
            )
        })
        .collect()
}

pub const COUNT_HEADER: &str = "problem,method,seed,field,value,count";

/// Per-cell counts of each attack outcome (hybrid only) and winning step;
/// each field's counts sum to the iteration count.
pub fn outcome_counts(cell: &Cell) -> Vec<String> {
    let mut counts: BTreeMap<(&str, String), usize> = BTreeMap::new();
    for it in &cell.result.trace.iterations {
        if let Some(a) = &it.attack_outcome {
            *counts.entry(("attack_outcome", tag(a))).or_default() += 1;
        }
        *counts
            .entry(("winning_step", tag(&it.winning_step)))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((field, value), n)| {
            format!(
                "{},{},{},{field},{value},{n}",
                cell.problem,
                cell.method.name(),
                cell.seed
            )
        })
        .collect()
}

/// Step contributions of the hybrid method and the three baselines:
/// `iterations.csv` and `counts.csv`.
pub fn run_experiment_2(
    problem: &str,
    seeds: &[u64],
    budget: usize,
    out: &Path,
) -> BenchResult<ExperimentReport> {
    let cells = run_cells(&[problem.to_string()], &Method::ALL, seeds, budget, None)?;
    let rows: Vec<String> = cells.iter().flat_map(iteration_rows).collect();
    let counts: Vec<String> = cells.iter().flat_map(outcome_counts).collect();
    let files = vec![
        write_csv(&out.join("iterations.csv"), ITERATION_HEADER, &rows)?,
        write_csv(&out.join("counts.csv"), COUNT_HEADER, &counts)?,
    ];
    let report = ExperimentReport {
        experiment: ExperimentKind::StepContributions,
        series: cells.iter().map(Cell::summary).collect(),
        files,
    };
    finish_report(report, out)
}

/// Records at which the running best feasible value strictly increased, in
/// evaluation order.
pub fn incumbent_records(run: &RunResult) -> Vec<&EvalRecord> {
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for r in run.history.records() {
        if r.feasible && r.fval > best {
            best = r.fval;
            out.push(r);
        }
    }
    out
}

/// `count` incumbents at equally spaced quantiles of the distinct incumbent
/// values, in nondecreasing order of value.
pub fn snapshots(run: &RunResult, count: usize) -> Vec<&EvalRecord> {
    let inc = incumbent_records(run);
    if inc.is_empty() || count == 0 {
        return Vec::new();
    }
    let last = inc.len() - 1;
    (0..count)
        .map(|j| {
            let pos = if count == 1 {
                last
            } else {
                ((j * last) as f64 / (count - 1) as f64).round() as usize
            };
            inc[pos]
        })
        .collect()
}

/// One `(snapshot, radius, solver)` measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialRow {
    pub seed: u64,
    pub snapshot: usize,
    pub incumbent_f: f64,
    pub radius: f64,
    pub solver: AttackSolver,
    /// Some evaluable attack direction leads to a feasible, strictly better
    /// point.
    pub ascent: bool,
    pub successful: bool,
    pub loss_before: f64,
    pub loss_after: f64,
    pub gradient_evals: usize,
}

pub const POTENTIAL_HEADER: &str = "problem,seed,snapshot,incumbent_f,radius,solver,ascent,\
successful,loss_before,loss_after,gradient_evals";

/// Attack measurements at `snapshot_count` incumbents of a hybrid run.
pub fn attack_potential(
    name: &str,
    seed: u64,
    budget: usize,
    snapshot_count: usize,
    radii: &[f64],
    solvers: &[AttackSolver],
) -> BenchResult<(Cell, Vec<PotentialRow>)> {
    if snapshot_count < 2 {
        return Err(BenchError::Invalid(
            "snapshot count must be at least 2".into(),
        ));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(BenchError::Invalid(
            "radii must be a nonempty list of positive values".into(),
        ));
    }
    let cell = run_cell(name, Method::Hyb, seed, budget, None)?;
    let problem = build_problem(name, seed, None)?;
    let mut rows = Vec::new();
    for (j, snap) in snapshots(&cell.result, snapshot_count)
        .into_iter()
        .enumerate()
    {
        for &radius in radii {
            for &solver in solvers {
                let config = cell.config.attack.with_solver(solver);
                let outcome = attack_operator(&problem, &snap.x, radius, &config)?;
                let mut ascent = false;
                for d in outcome.trial_directions() {
                    let x: Vec<f64> = snap.x.iter().zip(d).map(|(a, b)| a + b).collect();
                    let v = problem.assess(&x)?;
                    ascent |= v.feasible && v.fval > snap.fval;
                }
                let loss_after = outcome
                    .loss_after
                    .iter()
                    .copied()
                    .fold(outcome.loss_before, f64::min);
                rows.push(PotentialRow {
                    seed,
                    snapshot: j,
                    incumbent_f: snap.fval,
                    radius,
                    solver,
                    ascent,
                    successful: outcome.classes.contains(&AttackClass::Successful),
                    loss_before: outcome.loss_before,
                    loss_after,
                    gradient_evals: outcome.gradient_evals,
                });
            }
        }
    }
    Ok((cell, rows))
}

/// Attack potential at hybrid-run snapshots for every seed, written to
/// `attack_potential.csv`.
pub fn run_experiment_3(
    problem: &str,
    seeds: &[u64],
    budget: usize,
    snapshot_count: usize,
    radii: &[f64],
    out: &Path,
) -> BenchResult<ExperimentReport> {
    find(problem)?;
    let solvers = [AttackSolver::Fgsm, AttackSolver::Pgd];
    let results = seeds
        .par_iter()
        .map(|&s| attack_potential(problem, s, budget, snapshot_count, radii, &solvers))
        .collect::<BenchResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for (cell, cell_rows) in &results {
        series.push(cell.summary());
        for r in cell_rows {
            rows.push(format!(
                "{problem},{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.snapshot,
                r.incumbent_f,
                r.radius,
                tag(&r.solver),
                r.ascent,
                r.successful,
                r.loss_before,
                r.loss_after,
                r.gradient_evals
            ));
        }
    }
    let files = vec![write_csv(
        &out.join("attack_potential.csv"),
        POTENTIAL_HEADER,
        &rows,
    )?];
    let report = ExperimentReport {
        experiment: ExperimentKind::AttackPotential,
        series,
        files,
    };
    finish_report(report, out)
}
